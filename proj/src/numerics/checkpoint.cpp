#include "mpt/numerics/checkpoint.hpp"

#include "mpt/binary_io.hpp"
#include "mpt/error.hpp"

namespace mpt {

namespace {
constexpr std::string_view kMagic = "MPTC";
}

void write_checkpoint(const std::string& path, const ParamStore& params, const std::string& metadata) {
  io::ByteWriter w;
  w.bytes(kMagic);
  w.u32(kCheckpointVersion);
  w.u64(params.step());
  w.string(metadata);
  w.u64(params.entries().size());
  for (const auto& [name, p] : params.entries()) {
    w.string(name);
    w.u32(static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t e : p.value.shape()) w.u64(e);
    for (double v : p.value.data()) w.f64(v);
  }
  io::write_file_atomic(path, w.buffer());
}

Checkpoint read_checkpoint(const std::string& path) {
  const auto bytes = io::read_file(path);
  io::ByteReader r(bytes);
  if (r.remaining() < kMagic.size() || r.bytes(kMagic.size()) != kMagic) {
    throw FormatError(FormatError::Kind::bad_magic, path + " is not a checkpoint");
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError(FormatError::Kind::version_mismatch,
                      "checkpoint version " + std::to_string(version) + " unsupported");
  }
  Checkpoint ck;
  ck.params.set_step(r.u64());
  ck.metadata = r.string();
  const std::uint64_t count = r.u64();
  for (std::uint64_t k = 0; k < count; ++k) {
    std::string name = r.string();
    const std::uint32_t rank = r.u32();
    if (rank > 16) throw FormatError(FormatError::Kind::malformed, "implausible rank for " + name);
    Shape shape(rank);
    for (auto& e : shape) e = r.u64();
    const std::size_t n = shape_size(shape);
    if (n > r.remaining() / 8) throw FormatError(FormatError::Kind::truncated, "truncated values for " + name);
    std::vector<double> data(n);
    for (auto& v : data) v = r.f64();
    ck.params.add(name, DenseArray(std::move(shape), std::move(data)));
  }
  if (r.remaining() != 0) throw FormatError(FormatError::Kind::malformed, "trailing bytes in checkpoint");
  return ck;
}

}  // namespace mpt
