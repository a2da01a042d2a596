#include "promptforge/numerics/tensor_io.hpp"

#include "promptforge/error.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

namespace promptforge::numerics {

namespace {
template <class U>
U to_le(U v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  U out = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) out = (out << 8) | ((v >> (8 * i)) & 0xFF);
  return out;
}
}  // namespace

void write_u32(std::ostream& os, std::uint32_t v) {
  v = to_le(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw ValidationError("truncated .ten data");
  return to_le(v);
}

void write_f64(std::ostream& os, double d) {
  auto bits = to_le(std::bit_cast<std::uint64_t>(d));
  os.write(reinterpret_cast<const char*>(&bits), sizeof bits);
}

double read_f64(std::istream& is) {
  std::uint64_t bits = 0;
  if (!is.read(reinterpret_cast<char*>(&bits), sizeof bits))
    throw ValidationError("truncated .ten data");
  return std::bit_cast<double>(to_le(bits));
}

void write_ten(std::ostream& os, const Tensor& t) {
  write_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (auto e : t.shape()) {
    if (e > std::numeric_limits<std::uint32_t>::max())
      throw ContractViolation("extent too large for .ten header");
    write_u32(os, static_cast<std::uint32_t>(e));
  }
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(t.values().data()),
             static_cast<std::streamsize>(t.size() * sizeof(double)));
  } else {
    for (double v : t.values()) write_f64(os, v);
  }
}

Tensor read_ten(std::istream& is) {
  const auto rank = read_u32(is);
  if (rank == 0 || rank > 8) throw ValidationError("bad .ten rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& e : shape) {
    e = read_u32(is);
    if (e == 0) throw ValidationError("zero extent in .ten header");
  }
  std::vector<double> values(shape_size(shape));
  if constexpr (std::endian::native == std::endian::little) {
    if (!is.read(reinterpret_cast<char*>(values.data()),
                 static_cast<std::streamsize>(values.size() * sizeof(double))))
      throw ValidationError("truncated .ten payload");
  } else {
    for (double& v : values) v = read_f64(is);
  }
  return Tensor(std::move(shape), std::move(values));
}

void save_ten(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("cannot open for writing: " + path.string());
  write_ten(os, t);
}

Tensor load_ten(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open: " + path.string());
  return read_ten(is);
}

}  // namespace promptforge::numerics
