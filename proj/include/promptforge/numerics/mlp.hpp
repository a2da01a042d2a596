#pragma once

#include "promptforge/numerics/checkpoint.hpp"
#include "promptforge/numerics/optim.hpp"
#include "promptforge/numerics/rng.hpp"
#include "promptforge/numerics/tape.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace promptforge::numerics {

enum class Activation { Identity, Relu, Tanh, Sigmoid };

std::string_view activation_name(Activation a);
Activation parse_activation(std::string_view name);

struct DenseLayer {
  Tensor weight;  // in x out
  Tensor bias;    // 1 x out
  Activation activation = Activation::Identity;
};

// Stack of dense layers. Weights start at N(0, gain/fan_in) with gain 2 for
// relu layers and 1 otherwise; biases start at zero.
struct Mlp {
  std::vector<DenseLayer> layers;

  static Mlp create(const std::vector<std::size_t>& sizes, Activation hidden, Activation output,
                    RngStream& stream);

  std::size_t input_dim() const { return layers.front().weight.rows(); }
  std::size_t output_dim() const { return layers.back().weight.cols(); }
  std::vector<std::size_t> sizes() const;
  std::vector<Tensor*> parameters();
  std::size_t parameter_count() const;

  void export_to(NamedTensors& out, const std::string& prefix) const;
  // Activations are not stored in checkpoints; the caller supplies them.
  static Mlp import_from(const Checkpoint& ck, const std::string& prefix, std::size_t depth,
                         Activation hidden, Activation output);
};

struct MlpVars {
  std::vector<Var> weights;
  std::vector<Var> biases;
  std::vector<Var> all() const;
};

MlpVars bind(Tape& tape, const Mlp& mlp, bool trainable);

// Runs layers [first, last) of the stack.
Var forward(Tape& tape, const Mlp& mlp, const MlpVars& vars, Var x, std::size_t first = 0,
            std::size_t last = static_cast<std::size_t>(-1));

Var activate(Tape& tape, Activation a, Var x);

// Adam over a fixed list of parameter tensors.
class AdamGroup {
 public:
  AdamGroup(std::vector<Tensor*> params, AdamConfig config);
  void step(const std::vector<Tensor>& grads);
  std::size_t size() const noexcept { return params_.size(); }

 private:
  std::vector<Tensor*> params_;
  std::vector<AdamState> states_;
};

class MomentumGroup {
 public:
  MomentumGroup(std::vector<Tensor*> params, MomentumConfig config);
  void step(const std::vector<Tensor>& grads);
  void set_lr(double lr);

 private:
  std::vector<Tensor*> params_;
  std::vector<MomentumState> states_;
};

// Gradients for `vars` in order, zero tensors where no path exists.
std::vector<Tensor> collect(const Gradients& g, const std::vector<Var>& vars);

}  // namespace promptforge::numerics
