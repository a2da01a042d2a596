#include "promptforge/numerics/mlp.hpp"

#include "promptforge/error.hpp"

#include <cmath>

namespace promptforge::numerics {

std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Sigmoid: return "sigmoid";
  }
  return "?";
}

Activation parse_activation(std::string_view name) {
  for (auto a : {Activation::Identity, Activation::Relu, Activation::Tanh, Activation::Sigmoid})
    if (activation_name(a) == name) return a;
  throw ValidationError("unknown activation '" + std::string(name) + "'");
}

Mlp Mlp::create(const std::vector<std::size_t>& sizes, Activation hidden, Activation output,
                RngStream& stream) {
  if (sizes.size() < 2) throw ContractViolation("mlp needs at least input and output sizes");
  Mlp m;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    DenseLayer layer;
    layer.activation = l + 2 == sizes.size() ? output : hidden;
    const double gain = layer.activation == Activation::Relu ? 2.0 : 1.0;
    const double sd = std::sqrt(gain / static_cast<double>(sizes[l]));
    layer.weight = sample_gaussian(stream, {sizes[l], sizes[l + 1]});
    for (double& w : layer.weight.values()) w *= sd;
    layer.bias = Tensor::matrix(1, sizes[l + 1]);
    m.layers.push_back(std::move(layer));
  }
  return m;
}

std::vector<std::size_t> Mlp::sizes() const {
  std::vector<std::size_t> s{input_dim()};
  for (const auto& l : layers) s.push_back(l.weight.cols());
  return s;
}

std::vector<Tensor*> Mlp::parameters() {
  std::vector<Tensor*> p;
  for (auto& l : layers) {
    p.push_back(&l.weight);
    p.push_back(&l.bias);
  }
  return p;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

void Mlp::export_to(NamedTensors& out, const std::string& prefix) const {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    out.emplace_back(prefix + ".w" + std::to_string(l), layers[l].weight);
    out.emplace_back(prefix + ".b" + std::to_string(l), layers[l].bias);
  }
}

Mlp Mlp::import_from(const Checkpoint& ck, const std::string& prefix, std::size_t depth,
                     Activation hidden, Activation output) {
  Mlp m;
  for (std::size_t l = 0; l < depth; ++l) {
    DenseLayer layer;
    layer.weight = ck.get(prefix + ".w" + std::to_string(l));
    layer.bias = ck.get(prefix + ".b" + std::to_string(l));
    layer.activation = l + 1 == depth ? output : hidden;
    if (l > 0 && layer.weight.rows() != m.layers.back().weight.cols())
      throw ValidationError("checkpoint layer sizes do not chain at " + prefix);
    m.layers.push_back(std::move(layer));
  }
  return m;
}

std::vector<Var> MlpVars::all() const {
  std::vector<Var> v;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    v.push_back(weights[i]);
    v.push_back(biases[i]);
  }
  return v;
}

MlpVars bind(Tape& tape, const Mlp& mlp, bool trainable) {
  MlpVars v;
  for (const auto& l : mlp.layers) {
    v.weights.push_back(trainable ? tape.param(l.weight) : tape.constant_ref(l.weight));
    v.biases.push_back(trainable ? tape.param(l.bias) : tape.constant_ref(l.bias));
  }
  return v;
}

Var activate(Tape& tape, Activation a, Var x) {
  switch (a) {
    case Activation::Identity: return x;
    case Activation::Relu: return tape.relu(x);
    case Activation::Tanh: return tape.tanh(x);
    case Activation::Sigmoid: return tape.sigmoid(x);
  }
  return x;
}

Var forward(Tape& tape, const Mlp& mlp, const MlpVars& vars, Var x, std::size_t first, std::size_t last) {
  last = std::min(last, mlp.layers.size());
  for (std::size_t l = first; l < last; ++l)
    x = activate(tape, mlp.layers[l].activation, tape.dense(x, vars.weights[l], vars.biases[l]));
  return x;
}

AdamGroup::AdamGroup(std::vector<Tensor*> params, AdamConfig config) : params_(std::move(params)) {
  for (auto* p : params_) states_.emplace_back(p->shape(), config);
}

void AdamGroup::step(const std::vector<Tensor>& grads) {
  if (grads.size() != params_.size()) throw ContractViolation("AdamGroup: gradient count mismatch");
  for (std::size_t i = 0; i < params_.size(); ++i) adam_step(states_[i], *params_[i], grads[i]);
}

MomentumGroup::MomentumGroup(std::vector<Tensor*> params, MomentumConfig config) : params_(std::move(params)) {
  for (auto* p : params_) states_.emplace_back(p->shape(), config);
}

void MomentumGroup::step(const std::vector<Tensor>& grads) {
  if (grads.size() != params_.size()) throw ContractViolation("MomentumGroup: gradient count mismatch");
  for (std::size_t i = 0; i < params_.size(); ++i) sgd_momentum_step(states_[i], *params_[i], grads[i]);
}

void MomentumGroup::set_lr(double lr) {
  for (auto& s : states_) s.set_lr(lr);
}

std::vector<Tensor> collect(const Gradients& g, const std::vector<Var>& vars) {
  std::vector<Tensor> out;
  out.reserve(vars.size());
  for (auto v : vars) out.push_back(g.of(v));
  return out;
}

}  // namespace promptforge::numerics
