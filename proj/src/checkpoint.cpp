#include "sdd/checkpoint.hpp"

#include "binary_io.hpp"

namespace sdd {

namespace {
constexpr std::string_view kCheckpointMagic = "SDDCK1";
constexpr std::string_view kBiasTag = "BIAS";
}  // namespace

std::string encode_checkpoint(const Params& params, const Mask& mask) {
  check_shapes(params, mask);
  for (std::size_t l = 0; l < params.weights.size(); ++l)
    for (Eigen::Index i = 0; i < params.weights[l].size(); ++i)
      if (mask.layers[l].data()[i] == 0 && params.weights[l].data()[i] != 0.0)
        throw ContractError("checkpoint: pruned weight is nonzero at layer " + std::to_string(l));
  detail::ByteWriter w;
  w.put_bytes(kCheckpointMagic);
  w.put_u32(static_cast<std::uint32_t>(params.weights.size()));
  for (const auto& m : params.weights) {
    w.put_u32(static_cast<std::uint32_t>(m.rows()));
    w.put_u32(static_cast<std::uint32_t>(m.cols()));
  }
  for (const auto& m : params.weights)
    for (Eigen::Index i = 0; i < m.size(); ++i) w.put_f64(m.data()[i]);
  for (const auto& b : mask.layers) {
    std::uint8_t acc = 0;
    int fill = 0;
    for (Eigen::Index i = 0; i < b.size(); ++i) {
      if (b.data()[i] != 0) acc |= static_cast<std::uint8_t>(1u << fill);
      if (++fill == 8) {
        w.put_u8(acc);
        acc = 0;
        fill = 0;
      }
    }
    if (fill != 0) w.put_u8(acc);
  }
  if (params.has_bias()) {
    w.put_bytes(kBiasTag);
    for (const auto& b : params.biases)
      for (Eigen::Index i = 0; i < b.size(); ++i) w.put_f64(b(i));
  }
  return w.bytes();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  detail::ByteReader r(bytes, "checkpoint");
  if (r.take(kCheckpointMagic.size()) != kCheckpointMagic) throw FormatError("checkpoint: bad magic");
  const std::uint32_t layers = r.u32();
  if (layers == 0) throw FormatError("checkpoint: no layers");
  std::vector<std::pair<std::uint32_t, std::uint32_t>> dims(layers);
  for (auto& [rows, cols] : dims) {
    rows = r.u32();
    cols = r.u32();
  }
  Checkpoint ck;
  for (auto [rows, cols] : dims) {
    if (std::uint64_t{rows} * cols * 8 > r.remaining()) throw FormatError("checkpoint: truncated");
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.f64();
    ck.params.weights.push_back(std::move(m));
  }
  for (auto [rows, cols] : dims) {
    BitMatrix b(rows, cols);
    const std::size_t count = std::size_t{rows} * cols;
    auto packed = r.take((count + 7) / 8);
    for (std::size_t i = 0; i < count; ++i)
      b.data()[i] = (static_cast<unsigned char>(packed[i / 8]) >> (i % 8)) & 1u;
    ck.mask.layers.push_back(std::move(b));
  }
  if (r.remaining() > 0) {
    if (r.take(kBiasTag.size()) != kBiasTag) throw FormatError("checkpoint: unexpected trailing bytes");
    for (auto [rows, cols] : dims) {
      Vector b(rows);
      for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = r.f64();
      ck.params.biases.push_back(std::move(b));
    }
    if (r.remaining() != 0) throw FormatError("checkpoint: trailing bytes after biases");
  }
  try {
    check_shapes(ck.params, ck.mask);
  } catch (const ContractError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Params& params, const Mask& mask) {
  write_file_atomic(path, encode_checkpoint(params, mask));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

}  // namespace sdd
