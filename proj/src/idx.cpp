#include "sdd/idx.hpp"

#include <fstream>
#include <sstream>

namespace sdd {

namespace {

// IDX headers are big-endian.
class BigEndianReader {
 public:
  BigEndianReader(std::string_view data, const char* what) : data_(data), what_(what) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(data_[pos_++]);
    return v;
  }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw IdxError(IdxError::Kind::Truncated, std::string(what_) + ": truncated");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
  const char* what_;
};

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxError(IdxError::Kind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

IdxDataset decode_idx(std::string_view image_bytes, std::string_view label_bytes) {
  BigEndianReader img(image_bytes, "idx images");
  BigEndianReader lab(label_bytes, "idx labels");
  const std::uint32_t img_magic = img.u32();
  if (img_magic != kIdxImageMagic)
    throw IdxError(IdxError::Kind::BadMagic, "idx images: magic " + std::to_string(img_magic) + " != 2051");
  const std::uint32_t lab_magic = lab.u32();
  if (lab_magic != kIdxLabelMagic)
    throw IdxError(IdxError::Kind::BadMagic, "idx labels: magic " + std::to_string(lab_magic) + " != 2049");
  const std::uint32_t n = img.u32();
  const std::uint32_t rows = img.u32();
  const std::uint32_t cols = img.u32();
  const std::uint32_t n_labels = lab.u32();
  if (n != n_labels)
    throw IdxError(IdxError::Kind::CountMismatch,
                   "idx: " + std::to_string(n) + " images but " + std::to_string(n_labels) + " labels");

  IdxDataset out;
  out.rows = static_cast<int>(rows);
  out.cols = static_cast<int>(cols);
  const std::size_t pixels = std::size_t{rows} * cols;
  const auto raw = img.bytes(std::size_t{n} * pixels);
  const auto raw_labels = lab.bytes(n);
  out.images.resize(n, static_cast<Eigen::Index>(pixels));
  for (std::size_t i = 0; i < std::size_t{n} * pixels; ++i)
    out.images.data()[i] = static_cast<double>(static_cast<unsigned char>(raw[i])) / 255.0;
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<unsigned char>(raw_labels[i]);
    if (y >= 10) throw IdxError(IdxError::Kind::BadLabel, "idx labels: value " + std::to_string(y) + " outside [0, 10)");
    out.labels[i] = y;
  }
  return out;
}

IdxDataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  const auto images = slurp(images_path);
  const auto labels = slurp(labels_path);
  return decode_idx(images, labels);
}

LabeledDataset to_labeled(const IdxDataset& idx, std::size_t limit, std::string source) {
  const std::size_t n = limit == 0 ? idx.labels.size() : std::min(limit, idx.labels.size());
  LabeledDataset ds;
  ds.features = idx.images.topRows(static_cast<Eigen::Index>(n));
  ds.labels_true.assign(idx.labels.begin(), idx.labels.begin() + static_cast<std::ptrdiff_t>(n));
  ds.labels_observed = ds.labels_true;
  ds.num_classes = 10;
  ds.meta.source = std::move(source);
  return ds;
}

}  // namespace sdd
