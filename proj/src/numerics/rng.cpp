#include "promptforge/numerics/rng.hpp"

#include "promptforge/error.hpp"
#include "promptforge/numerics/hash.hpp"

#include <cmath>
#include <numbers>

namespace promptforge::numerics {

RngStream::RngStream(std::uint64_t seed, std::string label)
    : seed_(seed),
      label_(std::move(label)),
      engine_(sha256_u64(std::to_string(seed) + ":" + label_)) {}

RngStream RngStream::child(std::string_view sublabel) const {
  return RngStream(seed_, label_ + "/" + std::string(sublabel));
}

std::uint64_t RngStream::next_u64() {
  ++draws_;
  return engine_();
}

double RngStream::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double RngStream::uniform_open() {
  return (static_cast<double>(next_u64() >> 12) + 0.5) * 0x1.0p-52;
}

double RngStream::gaussian() {
  const double u1 = uniform_open();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double RngStream::gamma(double shape) {
  if (!(shape > 0.0)) throw ContractViolation("gamma shape must be positive");
  if (shape < 1.0) {
    // Gamma(a) = Gamma(a + 1) * U^(1/a)
    const double g = gamma(shape + 1.0);
    return g * std::pow(uniform_open(), 1.0 / shape);
  }
  // Marsaglia & Tsang.
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = gaussian();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform_open();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

std::size_t RngStream::index(std::size_t n) {
  if (n == 0) throw ContractViolation("index(): empty range");
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t r;
  do {
    r = next_u64();
  } while (r >= limit);
  return static_cast<std::size_t>(r % bound);
}

std::vector<std::size_t> RngStream::permutation(std::size_t n) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  shuffle(p);
  return p;
}

Tensor sample_gaussian(RngStream& stream, Shape shape) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = stream.gaussian();
  return t;
}

double sample_beta(RngStream& stream, double alpha) {
  if (!(alpha > 0.0)) throw ContractViolation("beta alpha must be positive");
  const double x = stream.gamma(alpha);
  const double y = stream.gamma(alpha);
  return x / (x + y);
}

}  // namespace promptforge::numerics
