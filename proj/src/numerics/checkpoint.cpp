#include "promptforge/numerics/checkpoint.hpp"

#include "promptforge/error.hpp"
#include "promptforge/numerics/tensor_io.hpp"

#include <fstream>

namespace promptforge::numerics {

namespace {
constexpr char kMagic[4] = {'P', 'F', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void write_string(std::ostream& os, const std::string& s) {
  write_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
  const auto n = read_u32(is);
  std::string s(n, '\0');
  if (!is.read(s.data(), n)) throw ValidationError("checkpoint truncated in string");
  return s;
}
}  // namespace

const Tensor& Checkpoint::get(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw ValidationError("checkpoint has no tensor '" + name + "'");
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("cannot write checkpoint " + path.string());
  os.write(kMagic, 4);
  write_u32(os, kVersion);
  write_string(os, ckpt.header);
  write_u32(os, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    write_string(os, name);
    write_ten(os, t);
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open checkpoint " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::string(magic, 4) != std::string(kMagic, 4))
    throw ValidationError("not a checkpoint: " + path.string());
  if (read_u32(is) != kVersion) throw ValidationError("unsupported checkpoint version");
  Checkpoint ck;
  ck.header = read_string(is);
  const auto n = read_u32(is);
  for (std::uint32_t i = 0; i < n; ++i) {
    auto name = read_string(is);
    ck.tensors.emplace_back(std::move(name), read_ten(is));
  }
  return ck;
}

}  // namespace promptforge::numerics
