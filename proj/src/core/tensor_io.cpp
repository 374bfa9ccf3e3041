#include "adx/core/tensor_io.hpp"

#include <fstream>

#include "adx/core/binary_io.hpp"
#include "adx/core/errors.hpp"

namespace adx {

void write_tensor(std::ostream& os, const Tensor& t) {
  binio::write_magic(os, "TNSR");
  binio::write_u32(os, kTensorFormatVersion);
  binio::write_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) binio::write_u64(os, d);
  for (double v : t.values()) binio::write_f64(os, v);
}

Tensor read_tensor(std::istream& is) {
  binio::expect_magic(is, "TNSR", "tensor");
  const std::uint32_t version = binio::read_u32(is);
  if (version != kTensorFormatVersion) throw DataError("tensor: unsupported version " + std::to_string(version));
  const std::uint32_t rank = binio::read_u32(is);
  if (rank > 16) throw DataError("tensor: implausible rank " + std::to_string(rank));
  Shape shape(rank);
  std::uint64_t count = 1;
  for (auto& d : shape) {
    d = binio::read_u64(is);
    if (d == 0) throw DataError("tensor: zero-sized dimension");
    count *= d;
    if (count > (std::uint64_t{1} << 34)) throw DataError("tensor: payload too large");
  }
  std::vector<double> values(count);
  for (auto& v : values) v = binio::read_f64(is);
  return Tensor(std::move(shape), std::move(values));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  write_tensor(os, t);
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  return read_tensor(is);
}

}  // namespace adx
