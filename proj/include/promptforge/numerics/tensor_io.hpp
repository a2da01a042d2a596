#pragma once

#include "promptforge/numerics/tensor.hpp"

#include <filesystem>
#include <iosfwd>

namespace promptforge::numerics {

// `.ten` layout: u32 rank, rank x u32 extents, then row-major f64 values,
// all little-endian.
void write_ten(std::ostream& os, const Tensor& t);
Tensor read_ten(std::istream& is);

void save_ten(const std::filesystem::path& path, const Tensor& t);
Tensor load_ten(const std::filesystem::path& path);

void write_u32(std::ostream& os, std::uint32_t v);
std::uint32_t read_u32(std::istream& is);
void write_f64(std::ostream& os, double v);
double read_f64(std::istream& is);

}  // namespace promptforge::numerics
