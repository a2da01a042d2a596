#pragma once

#include "promptforge/numerics/tensor.hpp"

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace promptforge::numerics {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

// Single-file model checkpoint: magic "PFCK", u32 version, u32 header length,
// a JSON header, then u32 tensor count followed by (u32 name length, name,
// .ten block) per tensor.
struct Checkpoint {
  std::string header;  // JSON text
  NamedTensors tensors;

  const Tensor& get(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace promptforge::numerics
