#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "sdd/network.hpp"

namespace sdd {

struct Checkpoint {
  Params params;
  Mask mask;
};

// Little-endian container:
//   "SDDCK1" | u32 layer_count | layer_count x (u32 rows, u32 cols)
//   | weights, f64 row-major per layer | masks, row-major bits per layer (LSB first,
//   each layer padded to a whole byte)
// Networks with biases append "BIAS" followed by the f64 bias vectors.
std::string encode_checkpoint(const Params& params, const Mask& mask);
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Params& params, const Mask& mask);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace sdd
