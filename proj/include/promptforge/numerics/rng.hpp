#pragma once

#include "promptforge/numerics/tensor.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace promptforge::numerics {

// Reproducible random stream keyed by (master seed, label). The engine is
// seeded from a digest of both, so streams with different labels never share
// state and can be consumed in any order or on any thread.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string label);

  RngStream child(std::string_view sublabel) const;

  std::uint64_t seed() const noexcept { return seed_; }
  const std::string& label() const noexcept { return label_; }
  std::uint64_t draws() const noexcept { return draws_; }

  std::uint64_t next_u64();
  double uniform();       // [0, 1)
  double uniform_open();  // (0, 1)
  double gaussian();
  double gamma(double shape);
  std::size_t index(std::size_t n);  // uniform over [0, n)
  std::vector<std::size_t> permutation(std::size_t n);

  template <class T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[index(i)]);
  }

 private:
  std::uint64_t seed_;
  std::string label_;
  std::mt19937_64 engine_;
  std::uint64_t draws_ = 0;
};

// i.i.d. standard normal tensor.
Tensor sample_gaussian(RngStream& stream, Shape shape);

// Symmetric Beta(alpha, alpha) draw in [0, 1].
double sample_beta(RngStream& stream, double alpha);

}  // namespace promptforge::numerics
