#pragma once

#include "promptforge/numerics/tensor.hpp"

#include <cstdint>

namespace promptforge::numerics {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Per-parameter Adam moments. m and v start at zero; t counts applied steps.
class AdamState {
 public:
  AdamState(Shape shape, AdamConfig config);

  const AdamConfig& config() const noexcept { return config_; }
  const Tensor& first_moment() const noexcept { return m_; }
  const Tensor& second_moment() const noexcept { return v_; }
  std::uint64_t step_count() const noexcept { return t_; }

 private:
  friend void adam_step(AdamState&, Tensor&, const Tensor&);
  AdamConfig config_;
  Tensor m_;
  Tensor v_;
  std::uint64_t t_ = 0;
};

// Bias-corrected Adam update applied in place.
void adam_step(AdamState& state, Tensor& param, const Tensor& grad);

struct MomentumConfig {
  double lr = 0.1;
  double momentum = 0.9;
};

class MomentumState {
 public:
  MomentumState(Shape shape, MomentumConfig config);

  const MomentumConfig& config() const noexcept { return config_; }
  void set_lr(double lr) noexcept { config_.lr = lr; }
  const Tensor& velocity() const noexcept { return velocity_; }
  Tensor& velocity() noexcept { return velocity_; }

 private:
  friend void sgd_momentum_step(MomentumState&, Tensor&, const Tensor&);
  MomentumConfig config_;
  Tensor velocity_;
};

// v <- momentum * v + grad; param <- param - lr * v
void sgd_momentum_step(MomentumState& state, Tensor& param, const Tensor& grad);

}  // namespace promptforge::numerics
