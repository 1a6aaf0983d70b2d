#pragma once

#include <filesystem>
#include <string>

#include "sdd/mixture.hpp"

namespace sdd {

// Flat little-endian container:
//   "SDDDS1" | u32 n | u32 D | u32 num_classes | f64 noise_fraction | u64 seed
//   | n*D f64 features (row-major) | n u16 labels_true | n u16 labels_observed
// The source descriptor is not part of the container and reads back empty.
std::string encode_dataset(const LabeledDataset& ds);
LabeledDataset decode_dataset(std::string_view bytes);

void save_dataset(const std::filesystem::path& path, const LabeledDataset& ds);
LabeledDataset load_dataset(const std::filesystem::path& path);

/// One row per sample: x_0..x_{D-1}, y_true, y_obs.
std::string dataset_to_csv(const LabeledDataset& ds);

}  // namespace sdd
