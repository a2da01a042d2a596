#include "promptforge/numerics/optim.hpp"

#include "promptforge/error.hpp"

#include <cmath>

namespace promptforge::numerics {

namespace {
void require_shapes(const Tensor& state, const Tensor& param, const Tensor& grad, const char* who) {
  if (param.shape() != state.shape() || grad.shape() != state.shape())
    throw ContractViolation(std::string(who) + ": shape mismatch state " +
                            shape_string(state.shape()) + ", param " +
                            shape_string(param.shape()) + ", grad " + shape_string(grad.shape()));
}
}  // namespace

AdamState::AdamState(Shape shape, AdamConfig config)
    : config_(config), m_(shape), v_(std::move(shape)) {}

void adam_step(AdamState& s, Tensor& param, const Tensor& grad) {
  require_shapes(s.m_, param, grad, "adam_step");
  s.t_ += 1;
  const auto& c = s.config_;
  const double t = static_cast<double>(s.t_);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  auto p = param.values();
  auto g = grad.values();
  auto m = s.m_.values();
  auto v = s.v_.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    p[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
  }
}

MomentumState::MomentumState(Shape shape, MomentumConfig config)
    : config_(config), velocity_(std::move(shape)) {}

void sgd_momentum_step(MomentumState& s, Tensor& param, const Tensor& grad) {
  require_shapes(s.velocity_, param, grad, "sgd_momentum_step");
  auto p = param.values();
  auto g = grad.values();
  auto v = s.velocity_.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    v[i] = s.config_.momentum * v[i] + g[i];
    p[i] -= s.config_.lr * v[i];
  }
}

}  // namespace promptforge::numerics
