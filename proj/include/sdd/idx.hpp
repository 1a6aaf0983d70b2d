#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include "sdd/mixture.hpp"

namespace sdd {

/// MNIST-style IDX image/label pair.
struct IdxDataset {
  Matrix images;  // n x (rows * cols), pixel / 255
  Labels labels;  // values in [0, 10)
  int rows = 0;
  int cols = 0;
};

class IdxError : public std::runtime_error {
 public:
  enum class Kind { Io, BadMagic, Truncated, CountMismatch, BadLabel };
  IdxError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline constexpr std::uint32_t kIdxImageMagic = 2051;
inline constexpr std::uint32_t kIdxLabelMagic = 2049;

IdxDataset decode_idx(std::string_view image_bytes, std::string_view label_bytes);
IdxDataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

/// Ten-class dataset with clean observed labels; keeps the first `limit` samples when non-zero.
LabeledDataset to_labeled(const IdxDataset& idx, std::size_t limit = 0, std::string source = "idx");

}  // namespace sdd
