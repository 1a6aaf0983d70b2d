#include "sdd/dataset_io.hpp"

#include <limits>

#include "binary_io.hpp"

namespace sdd {

namespace {
constexpr std::string_view kDatasetMagic = "SDDDS1";
}

std::string encode_dataset(const LabeledDataset& ds) {
  ds.validate();
  if (ds.num_classes > std::numeric_limits<std::uint16_t>::max() + 1)
    throw ContractError("dataset has too many classes for u16 labels");
  detail::ByteWriter w;
  w.put_bytes(kDatasetMagic);
  w.put_u32(static_cast<std::uint32_t>(ds.size()));
  w.put_u32(static_cast<std::uint32_t>(ds.features.cols()));
  w.put_u32(static_cast<std::uint32_t>(ds.num_classes));
  w.put_f64(ds.meta.noise_fraction);
  w.put_u64(ds.meta.seed);
  for (Eigen::Index i = 0; i < ds.features.rows(); ++i)
    for (Eigen::Index j = 0; j < ds.features.cols(); ++j) w.put_f64(ds.features(i, j));
  for (int y : ds.labels_true) w.put_u16(static_cast<std::uint16_t>(y));
  for (int y : ds.labels_observed) w.put_u16(static_cast<std::uint16_t>(y));
  return w.bytes();
}

LabeledDataset decode_dataset(std::string_view bytes) {
  detail::ByteReader r(bytes, "dataset container");
  if (r.take(kDatasetMagic.size()) != kDatasetMagic) throw FormatError("dataset container: bad magic");
  const std::uint32_t n = r.u32();
  const std::uint32_t d = r.u32();
  LabeledDataset ds;
  ds.num_classes = static_cast<int>(r.u32());
  ds.meta.noise_fraction = r.f64();
  ds.meta.seed = r.u64();
  const std::uint64_t need = std::uint64_t{n} * d * 8 + std::uint64_t{n} * 4;
  if (r.remaining() < need) throw FormatError("dataset container: truncated");
  ds.features.resize(n, d);
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t j = 0; j < d; ++j) ds.features(i, j) = r.f64();
  ds.labels_true.resize(n);
  ds.labels_observed.resize(n);
  for (auto& y : ds.labels_true) y = r.u16();
  for (auto& y : ds.labels_observed) y = r.u16();
  if (r.remaining() != 0) throw FormatError("dataset container: trailing bytes");
  try {
    ds.validate();
  } catch (const ContractError& e) {
    throw FormatError(std::string("dataset container: ") + e.what());
  }
  return ds;
}

void save_dataset(const std::filesystem::path& path, const LabeledDataset& ds) {
  write_file_atomic(path, encode_dataset(ds));
}

LabeledDataset load_dataset(const std::filesystem::path& path) {
  auto ds = decode_dataset(read_file(path));
  ds.meta.source = path.string();
  return ds;
}

std::string dataset_to_csv(const LabeledDataset& ds) {
  ds.validate();
  std::string out;
  for (Eigen::Index j = 0; j < ds.features.cols(); ++j) out += "x_" + std::to_string(j) + ",";
  out += "y_true,y_obs\n";
  for (Eigen::Index i = 0; i < ds.features.rows(); ++i) {
    for (Eigen::Index j = 0; j < ds.features.cols(); ++j) {
      out += format_double(ds.features(i, j));
      out += ',';
    }
    const auto k = static_cast<std::size_t>(i);
    out += std::to_string(ds.labels_true[k]) + "," + std::to_string(ds.labels_observed[k]) + "\n";
  }
  return out;
}

}  // namespace sdd
