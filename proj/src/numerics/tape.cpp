#include "promptforge/numerics/tape.hpp"

#include "promptforge/error.hpp"

#include <algorithm>
#include <cmath>

namespace promptforge::numerics {

std::string_view op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::MatMul: return "matmul";
    case Op::MatMulTransposeB: return "matmul_bt";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::AddRow: return "add_row";
    case Op::Scale: return "scale";
    case Op::AddScalar: return "add_scalar";
    case Op::Relu: return "relu";
    case Op::Tanh: return "tanh";
    case Op::Sigmoid: return "sigmoid";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Abs: return "abs";
    case Op::Sqrt: return "sqrt";
    case Op::Square: return "square";
    case Op::Arcsin: return "arcsin";
    case Op::L2NormalizeRows: return "l2_normalize";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::RowSums: return "row_sums";
    case Op::SoftmaxRows: return "softmax";
    case Op::LogSoftmaxRows: return "log_softmax";
    case Op::ScaleBy: return "scale_by";
    case Op::GatherRows: return "gather_rows";
    case Op::ConcatRows: return "concat_rows";
    case Op::ConcatCols: return "concat_cols";
    case Op::SliceCols: return "slice_cols";
    case Op::StandardizeRows: return "standardize_rows";
    case Op::TileCols: return "tile_cols";
  }
  return "?";
}

namespace {

// Floor on sqrt outputs in the backward pass so sqrt(0) has a finite slope.
constexpr double kSqrtFloor = 1e-12;

double clamp_arcsin(double x) { return std::clamp(x, -kArcsinLimit, kArcsinLimit); }

void require_same_shape(const Tensor& a, const Tensor& b, std::string_view what) {
  if (a.shape() != b.shape())
    throw ContractViolation(std::string(what) + ": shape mismatch " + shape_string(a.shape()) +
                            " vs " + shape_string(b.shape()));
}

template <class F>
Tensor map_unary(const Tensor& a, F f) {
  Tensor out(a.shape());
  auto src = a.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

void add_into(Tensor& dst, const Tensor& src) {
  if (dst.empty()) {
    dst = src;
    return;
  }
  auto d = dst.values();
  auto s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

}  // namespace

Tape::Node Tape::make_node(Op op, std::vector<std::uint32_t> inputs) {
  Node n;
  n.op = op;
  n.inputs = std::move(inputs);
  return n;
}

Var Tape::push(Node node) {
  std::vector<const Tensor*> in;
  in.reserve(node.inputs.size());
  bool needs = false;
  for (auto id : node.inputs) {
    in.push_back(&nodes_[id].get());
    needs = needs || nodes_[id].requires_grad;
  }
  node.requires_grad = needs;
  node.value = compute(node, in);
  const auto id = static_cast<std::uint32_t>(nodes_.size());
  if (!node.value.all_finite())
    throw NumericFault(std::string(op_name(node.op)) + "#" + std::to_string(id),
                       "non-finite output");
  nodes_.push_back(std::move(node));
  return Var{id};
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  const auto id = static_cast<std::uint32_t>(nodes_.size());
  if (value.empty()) throw ContractViolation("leaf tensor must be non-empty");
  if (!value.all_finite())
    throw NumericFault("leaf#" + std::to_string(id), "non-finite leaf value");
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{id};
}

// Not scanned for non-finite values; referenced tensors are model weights
// that were checked when they were produced or loaded.
Var Tape::constant_ref(const Tensor& value) {
  const auto id = static_cast<std::uint32_t>(nodes_.size());
  if (value.empty()) throw ContractViolation("leaf tensor must be non-empty");
  Node n;
  n.op = Op::Leaf;
  n.external = &value;
  nodes_.push_back(std::move(n));
  return Var{id};
}

Var Tape::matmul(Var a, Var b) {
  const auto& A = value(a);
  const auto& B = value(b);
  if (A.cols() != B.rows())
    throw ContractViolation("matmul: inner extents differ " + shape_string(A.shape()) + " x " +
                            shape_string(B.shape()));
  return push(make_node(Op::MatMul, {a.id, b.id}));
}

Var Tape::matmul_transpose_b(Var a, Var b) {
  const auto& A = value(a);
  const auto& B = value(b);
  if (A.cols() != B.cols())
    throw ContractViolation("matmul_bt: inner extents differ " + shape_string(A.shape()) + " x " +
                            shape_string(B.shape()) + "^T");
  return push(make_node(Op::MatMulTransposeB, {a.id, b.id}));
}

Var Tape::add(Var a, Var b) {
  require_same_shape(value(a), value(b), "add");
  return push(make_node(Op::Add, {a.id, b.id}));
}

Var Tape::sub(Var a, Var b) {
  require_same_shape(value(a), value(b), "sub");
  return push(make_node(Op::Sub, {a.id, b.id}));
}

Var Tape::mul(Var a, Var b) {
  require_same_shape(value(a), value(b), "mul");
  return push(make_node(Op::Mul, {a.id, b.id}));
}

Var Tape::add_row(Var a, Var row) {
  const auto& R = value(row);
  if (R.rows() != 1 || R.cols() != value(a).cols())
    throw ContractViolation("add_row: row shape " + shape_string(R.shape()) +
                            " incompatible with " + shape_string(value(a).shape()));
  return push(make_node(Op::AddRow, {a.id, row.id}));
}

Var Tape::scale(Var a, double c) {
  Node n = make_node(Op::Scale, {a.id});
  n.scalar = c;
  return push(std::move(n));
}

Var Tape::add_scalar(Var a, double c) {
  Node n = make_node(Op::AddScalar, {a.id});
  n.scalar = c;
  return push(std::move(n));
}

Var Tape::relu(Var a) { return push(make_node(Op::Relu, {a.id})); }
Var Tape::tanh(Var a) { return push(make_node(Op::Tanh, {a.id})); }
Var Tape::sigmoid(Var a) { return push(make_node(Op::Sigmoid, {a.id})); }
Var Tape::exp(Var a) { return push(make_node(Op::Exp, {a.id})); }
Var Tape::log(Var a) { return push(make_node(Op::Log, {a.id})); }
Var Tape::abs(Var a) { return push(make_node(Op::Abs, {a.id})); }
Var Tape::sqrt(Var a) { return push(make_node(Op::Sqrt, {a.id})); }
Var Tape::square(Var a) { return push(make_node(Op::Square, {a.id})); }
Var Tape::arcsin(Var a) { return push(make_node(Op::Arcsin, {a.id})); }
Var Tape::l2_normalize_rows(Var a) { return push(make_node(Op::L2NormalizeRows, {a.id})); }
Var Tape::sum(Var a) { return push(make_node(Op::Sum, {a.id})); }
Var Tape::mean(Var a) { return push(make_node(Op::Mean, {a.id})); }
Var Tape::row_sums(Var a) { return push(make_node(Op::RowSums, {a.id})); }
Var Tape::softmax_rows(Var a) { return push(make_node(Op::SoftmaxRows, {a.id})); }
Var Tape::log_softmax_rows(Var a) { return push(make_node(Op::LogSoftmaxRows, {a.id})); }

Var Tape::scale_by(Var a, Var s) {
  if (value(s).size() != 1)
    throw ContractViolation("scale_by: factor must be 1x1, got " + shape_string(value(s).shape()));
  return push(make_node(Op::ScaleBy, {a.id, s.id}));
}

Var Tape::gather_rows(Var table, std::vector<std::size_t> ids) {
  const auto rows = value(table).rows();
  if (ids.empty()) throw ContractViolation("gather_rows: empty id list");
  for (auto id : ids)
    if (id >= rows)
      throw ContractViolation("gather_rows: id " + std::to_string(id) + " out of range " +
                              std::to_string(rows));
  Node n = make_node(Op::GatherRows, {table.id});
  n.ids = std::move(ids);
  return push(std::move(n));
}

Var Tape::concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ContractViolation("concat_rows: no inputs");
  Node n = make_node(Op::ConcatRows, {});
  const auto cols = value(parts[0]).cols();
  for (auto p : parts) {
    if (value(p).cols() != cols) throw ContractViolation("concat_rows: column counts differ");
    n.inputs.push_back(p.id);
  }
  return push(std::move(n));
}

Var Tape::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ContractViolation("concat_cols: no inputs");
  Node n = make_node(Op::ConcatCols, {});
  const auto rows = value(parts[0]).rows();
  for (auto p : parts) {
    if (value(p).rows() != rows) throw ContractViolation("concat_cols: row counts differ");
    n.inputs.push_back(p.id);
  }
  return push(std::move(n));
}

Var Tape::slice_cols(Var a, std::size_t start, std::size_t count) {
  if (count == 0 || start + count > value(a).cols())
    throw ContractViolation("slice_cols: range out of bounds");
  Node n = make_node(Op::SliceCols, {a.id});
  n.start = start;
  n.count = count;
  return push(std::move(n));
}

Var Tape::standardize_rows(Var a, double eps) {
  if (!(eps > 0.0)) throw ContractViolation("standardize_rows: eps must be positive");
  Node n = make_node(Op::StandardizeRows, {a.id});
  n.scalar = eps;
  return push(std::move(n));
}

Var Tape::tile_cols(Var a, std::size_t reps) {
  if (reps == 0) throw ContractViolation("tile_cols: reps must be >= 1");
  Node n = make_node(Op::TileCols, {a.id});
  n.count = reps;
  return push(std::move(n));
}

double Tape::scalar(Var v) const {
  const auto& t = value(v);
  if (t.size() != 1) throw ContractViolation("scalar(): node is not scalar " + node_label(v));
  return t[0];
}

std::string Tape::node_label(Var v) const {
  return std::string(op_name(nodes_.at(v.id).op)) + "#" + std::to_string(v.id);
}

Tensor Tape::compute(const Node& n, const std::vector<const Tensor*>& in) const {
  switch (n.op) {
    case Op::Leaf:
      return n.get();
    case Op::MatMul: {
      Tensor out = Tensor::matrix(in[0]->rows(), in[1]->cols());
      out.mat().noalias() = in[0]->mat() * in[1]->mat();
      return out;
    }
    case Op::MatMulTransposeB: {
      Tensor out = Tensor::matrix(in[0]->rows(), in[1]->rows());
      out.mat().noalias() = in[0]->mat() * in[1]->mat().transpose();
      return out;
    }
    case Op::Add: {
      Tensor out = *in[0];
      add_into(out, *in[1]);
      return out;
    }
    case Op::Sub: {
      Tensor out = *in[0];
      auto d = out.values();
      auto s = in[1]->values();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= s[i];
      return out;
    }
    case Op::Mul: {
      Tensor out = *in[0];
      auto d = out.values();
      auto s = in[1]->values();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] *= s[i];
      return out;
    }
    case Op::AddRow: {
      Tensor out = *in[0];
      out.mat().rowwise() += in[1]->mat().row(0);
      return out;
    }
    case Op::Scale:
      return map_unary(*in[0], [c = n.scalar](double x) { return c * x; });
    case Op::AddScalar:
      return map_unary(*in[0], [c = n.scalar](double x) { return x + c; });
    case Op::Relu:
      return map_unary(*in[0], [](double x) { return x > 0.0 ? x : 0.0; });
    case Op::Tanh:
      return map_unary(*in[0], [](double x) { return std::tanh(x); });
    case Op::Sigmoid: {
      // Eigen's packet exp; several times faster than std::exp per element.
      Tensor out(in[0]->shape());
      out.mat().array() = 1.0 / (1.0 + (-in[0]->mat().array()).exp());
      return out;
    }
    case Op::Exp: {
      Tensor out(in[0]->shape());
      out.mat().array() = in[0]->mat().array().exp();
      return out;
    }
    case Op::Log:
      return map_unary(*in[0], [](double x) { return std::log(x); });
    case Op::Abs:
      return map_unary(*in[0], [](double x) { return std::fabs(x); });
    case Op::Sqrt:
      return map_unary(*in[0], [](double x) { return std::sqrt(x); });
    case Op::Square:
      return map_unary(*in[0], [](double x) { return x * x; });
    case Op::Arcsin:
      return map_unary(*in[0], [](double x) { return std::asin(std::clamp(x, -1.0, 1.0)); });
    case Op::L2NormalizeRows: {
      Tensor out = *in[0];
      const auto R = out.rows();
      for (std::size_t r = 0; r < R; ++r) {
        auto row = out.row_span(r);
        double ss = 0.0;
        for (double v : row) ss += v * v;
        const double norm = std::sqrt(ss);
        // A zero row has no direction; leave NaNs for push() to report.
        const double inv = norm > 0.0 ? 1.0 / norm : std::numeric_limits<double>::quiet_NaN();
        for (double& v : row) v *= inv;
      }
      return out;
    }
    case Op::Sum: {
      double s = 0.0;
      for (double v : in[0]->values()) s += v;
      return Tensor::scalar(s);
    }
    case Op::Mean: {
      double s = 0.0;
      for (double v : in[0]->values()) s += v;
      return Tensor::scalar(s / static_cast<double>(in[0]->size()));
    }
    case Op::RowSums: {
      const auto R = in[0]->rows();
      Tensor out = Tensor::matrix(R, 1);
      for (std::size_t r = 0; r < R; ++r) {
        double s = 0.0;
        for (double v : in[0]->row_span(r)) s += v;
        out[r] = s;
      }
      return out;
    }
    case Op::SoftmaxRows: {
      Tensor out = *in[0];
      const auto R = out.rows();
      for (std::size_t r = 0; r < R; ++r) {
        auto row = out.row_span(r);
        const double mx = *std::max_element(row.begin(), row.end());
        double z = 0.0;
        for (double& v : row) {
          v = std::exp(v - mx);
          z += v;
        }
        for (double& v : row) v /= z;
      }
      return out;
    }
    case Op::LogSoftmaxRows: {
      Tensor out = *in[0];
      for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row_span(r);
        const double mx = *std::max_element(row.begin(), row.end());
        double z = 0.0;
        for (double v : row) z += std::exp(v - mx);
        const double lse = mx + std::log(z);
        for (double& v : row) v -= lse;
      }
      return out;
    }
    case Op::ScaleBy:
      return map_unary(*in[0], [c = (*in[1])[0]](double x) { return c * x; });
    case Op::GatherRows: {
      const auto C = in[0]->cols();
      Tensor out = Tensor::matrix(n.ids.size(), C);
      for (std::size_t i = 0; i < n.ids.size(); ++i) {
        auto src = in[0]->row_span(n.ids[i]);
        std::copy(src.begin(), src.end(), out.row_span(i).begin());
      }
      return out;
    }
    case Op::ConcatRows: {
      std::size_t R = 0;
      for (auto* t : in) R += t->rows();
      Tensor out = Tensor::matrix(R, in[0]->cols());
      auto dst = out.values().begin();
      for (auto* t : in) dst = std::copy(t->values().begin(), t->values().end(), dst);
      return out;
    }
    case Op::ConcatCols: {
      std::size_t C = 0;
      for (auto* t : in) C += t->cols();
      const auto R = in[0]->rows();
      Tensor out = Tensor::matrix(R, C);
      for (std::size_t r = 0; r < R; ++r) {
        auto dst = out.row_span(r).begin();
        for (auto* t : in) {
          auto src = t->row_span(r);
          dst = std::copy(src.begin(), src.end(), dst);
        }
      }
      return out;
    }
    case Op::SliceCols: {
      const auto R = in[0]->rows();
      Tensor out = Tensor::matrix(R, n.count);
      for (std::size_t r = 0; r < R; ++r) {
        auto src = in[0]->row_span(r).subspan(n.start, n.count);
        std::copy(src.begin(), src.end(), out.row_span(r).begin());
      }
      return out;
    }
    case Op::StandardizeRows: {
      Tensor out = *in[0];
      const auto C = out.cols();
      for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row_span(r);
        double mean = 0.0;
        for (double v : row) mean += v;
        mean /= static_cast<double>(C);
        double var = 0.0;
        for (double v : row) var += (v - mean) * (v - mean);
        const double inv = 1.0 / std::sqrt(var / static_cast<double>(C) + n.scalar);
        for (double& v : row) v = (v - mean) * inv;
      }
      return out;
    }
    case Op::TileCols: {
      const auto R = in[0]->rows();
      const auto C = in[0]->cols();
      Tensor out = Tensor::matrix(R, C * n.count);
      for (std::size_t r = 0; r < R; ++r) {
        auto src = in[0]->row_span(r);
        auto dst = out.row_span(r);
        for (std::size_t k = 0; k < n.count; ++k) std::copy(src.begin(), src.end(), dst.begin() + k * C);
      }
      return out;
    }
  }
  throw ContractViolation("unknown op");
}

void Tape::accumulate_inputs(std::size_t index, const Tensor& g, std::vector<Tensor>& grads) const {
  const Node& n = nodes_[index];
  auto wants = [&](std::size_t k) { return nodes_[n.inputs[k]].requires_grad; };
  auto in = [&](std::size_t k) -> const Tensor& { return nodes_[n.inputs[k]].get(); };
  auto slot = [&](std::size_t k) -> Tensor& { return grads[n.inputs[k]]; };
  const Tensor& y = n.value;

  auto elementwise = [&](auto dydx) {
    if (!wants(0)) return;
    Tensor d(in(0).shape());
    auto x = in(0).values();
    auto yv = y.values();
    auto gv = g.values();
    auto dv = d.values();
    for (std::size_t i = 0; i < dv.size(); ++i) dv[i] = gv[i] * dydx(x[i], yv[i]);
    add_into(slot(0), d);
  };

  switch (n.op) {
    case Op::Leaf:
      return;
    case Op::MatMul: {
      if (wants(0)) {
        Tensor d = Tensor::matrix(in(0).rows(), in(0).cols());
        d.mat().noalias() = g.mat() * in(1).mat().transpose();
        add_into(slot(0), d);
      }
      if (wants(1)) {
        Tensor d = Tensor::matrix(in(1).rows(), in(1).cols());
        d.mat().noalias() = in(0).mat().transpose() * g.mat();
        add_into(slot(1), d);
      }
      return;
    }
    case Op::MatMulTransposeB: {
      if (wants(0)) {
        Tensor d = Tensor::matrix(in(0).rows(), in(0).cols());
        d.mat().noalias() = g.mat() * in(1).mat();
        add_into(slot(0), d);
      }
      if (wants(1)) {
        Tensor d = Tensor::matrix(in(1).rows(), in(1).cols());
        d.mat().noalias() = g.mat().transpose() * in(0).mat();
        add_into(slot(1), d);
      }
      return;
    }
    case Op::Add:
      if (wants(0)) add_into(slot(0), g.reshaped(in(0).shape()));
      if (wants(1)) add_into(slot(1), g.reshaped(in(1).shape()));
      return;
    case Op::Sub:
      if (wants(0)) add_into(slot(0), g.reshaped(in(0).shape()));
      if (wants(1)) {
        Tensor d = map_unary(g, [](double v) { return -v; });
        add_into(slot(1), d.reshaped(in(1).shape()));
      }
      return;
    case Op::Mul:
      for (std::size_t k = 0; k < 2; ++k) {
        if (!wants(k)) continue;
        Tensor d = g.reshaped(in(k).shape());
        auto dv = d.values();
        auto other = in(1 - k).values();
        for (std::size_t i = 0; i < dv.size(); ++i) dv[i] *= other[i];
        add_into(slot(k), d);
      }
      return;
    case Op::AddRow:
      if (wants(0)) add_into(slot(0), g.reshaped(in(0).shape()));
      if (wants(1)) {
        Tensor d(in(1).shape());
        d.mat().row(0) = g.mat().colwise().sum();
        add_into(slot(1), d);
      }
      return;
    case Op::Scale:
      elementwise([c = n.scalar](double, double) { return c; });
      return;
    case Op::AddScalar:
      elementwise([](double, double) { return 1.0; });
      return;
    case Op::Relu:
      elementwise([](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
      return;
    case Op::Tanh:
      elementwise([](double, double t) { return 1.0 - t * t; });
      return;
    case Op::Sigmoid:
      elementwise([](double, double s) { return s * (1.0 - s); });
      return;
    case Op::Exp:
      elementwise([](double, double e) { return e; });
      return;
    case Op::Log:
      elementwise([](double x, double) { return 1.0 / x; });
      return;
    case Op::Abs:
      elementwise([](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
      return;
    case Op::Sqrt:
      elementwise([](double, double s) { return 0.5 / std::max(s, kSqrtFloor); });
      return;
    case Op::Square:
      elementwise([](double x, double) { return 2.0 * x; });
      return;
    case Op::Arcsin:
      elementwise([](double x, double) {
        const double c = clamp_arcsin(x);
        return 1.0 / std::sqrt(1.0 - c * c);
      });
      return;
    case Op::L2NormalizeRows: {
      if (!wants(0)) return;
      Tensor d(in(0).shape());
      for (std::size_t r = 0; r < y.rows(); ++r) {
        auto x = in(0).row_span(r);
        auto yr = y.row_span(r);
        auto gr = g.row_span(r);
        auto dr = d.row_span(r);
        double ss = 0.0, yg = 0.0;
        for (std::size_t c = 0; c < x.size(); ++c) {
          ss += x[c] * x[c];
          yg += yr[c] * gr[c];
        }
        const double inv = 1.0 / std::sqrt(ss);
        for (std::size_t c = 0; c < x.size(); ++c) dr[c] = (gr[c] - yr[c] * yg) * inv;
      }
      add_into(slot(0), d);
      return;
    }
    case Op::Sum:
      if (wants(0)) add_into(slot(0), Tensor(in(0).shape(), g[0]));
      return;
    case Op::Mean:
      if (wants(0))
        add_into(slot(0), Tensor(in(0).shape(), g[0] / static_cast<double>(in(0).size())));
      return;
    case Op::RowSums: {
      if (!wants(0)) return;
      Tensor d(in(0).shape());
      for (std::size_t r = 0; r < d.rows(); ++r)
        for (double& v : d.row_span(r)) v = g[r];
      add_into(slot(0), d);
      return;
    }
    case Op::SoftmaxRows: {
      if (!wants(0)) return;
      Tensor d(in(0).shape());
      for (std::size_t r = 0; r < y.rows(); ++r) {
        auto yr = y.row_span(r);
        auto gr = g.row_span(r);
        auto dr = d.row_span(r);
        double dot = 0.0;
        for (std::size_t c = 0; c < yr.size(); ++c) dot += yr[c] * gr[c];
        for (std::size_t c = 0; c < yr.size(); ++c) dr[c] = yr[c] * (gr[c] - dot);
      }
      add_into(slot(0), d);
      return;
    }
    case Op::LogSoftmaxRows: {
      if (!wants(0)) return;
      Tensor d(in(0).shape());
      for (std::size_t r = 0; r < y.rows(); ++r) {
        auto yr = y.row_span(r);
        auto gr = g.row_span(r);
        auto dr = d.row_span(r);
        double gs = 0.0;
        for (double v : gr) gs += v;
        for (std::size_t c = 0; c < yr.size(); ++c) dr[c] = gr[c] - std::exp(yr[c]) * gs;
      }
      add_into(slot(0), d);
      return;
    }
    case Op::ScaleBy: {
      const double c = in(1)[0];
      if (wants(0)) add_into(slot(0), map_unary(g, [c](double v) { return c * v; }));
      if (wants(1)) {
        double acc = 0.0;
        auto gv = g.values();
        auto xv = in(0).values();
        for (std::size_t i = 0; i < gv.size(); ++i) acc += gv[i] * xv[i];
        add_into(slot(1), Tensor(in(1).shape(), acc));
      }
      return;
    }
    case Op::GatherRows: {
      if (!wants(0)) return;
      Tensor& dst = slot(0);
      if (dst.empty()) dst = Tensor(in(0).shape());
      for (std::size_t i = 0; i < n.ids.size(); ++i) {
        auto src = g.row_span(i);
        auto row = dst.row_span(n.ids[i]);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] += src[c];
      }
      return;
    }
    case Op::ConcatRows: {
      std::size_t offset = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        const auto count = in(k).size();
        if (wants(k)) {
          Tensor d(in(k).shape());
          std::copy_n(g.values().begin() + static_cast<std::ptrdiff_t>(offset), count,
                      d.values().begin());
          add_into(slot(k), d);
        }
        offset += count;
      }
      return;
    }
    case Op::ConcatCols: {
      std::size_t offset = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        const auto C = in(k).cols();
        if (wants(k)) {
          Tensor d(in(k).shape());
          for (std::size_t r = 0; r < d.rows(); ++r) {
            auto src = g.row_span(r).subspan(offset, C);
            std::copy(src.begin(), src.end(), d.row_span(r).begin());
          }
          add_into(slot(k), d);
        }
        offset += C;
      }
      return;
    }
    case Op::SliceCols: {
      if (!wants(0)) return;
      Tensor d(in(0).shape());
      for (std::size_t r = 0; r < d.rows(); ++r) {
        auto src = g.row_span(r);
        std::copy(src.begin(), src.end(), d.row_span(r).begin() + static_cast<std::ptrdiff_t>(n.start));
      }
      add_into(slot(0), d);
      return;
    }
    case Op::StandardizeRows: {
      if (!wants(0)) return;
      const auto C = y.cols();
      const double inv_c = 1.0 / static_cast<double>(C);
      Tensor d(y.shape());
      for (std::size_t r = 0; r < y.rows(); ++r) {
        auto x = in(0).row_span(r);
        auto yr = y.row_span(r);
        auto gr = g.row_span(r);
        auto dr = d.row_span(r);
        double mean = 0.0, gm = 0.0, gy = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
          mean += x[c];
          gm += gr[c];
          gy += gr[c] * yr[c];
        }
        mean *= inv_c;
        double var = 0.0;
        for (double v : x) var += (v - mean) * (v - mean);
        const double inv = 1.0 / std::sqrt(var * inv_c + n.scalar);
        gm *= inv_c;
        gy *= inv_c;
        for (std::size_t c = 0; c < C; ++c) dr[c] = inv * (gr[c] - gm - yr[c] * gy);
      }
      add_into(slot(0), d);
      return;
    }
    case Op::TileCols: {
      if (!wants(0)) return;
      const auto C = in(0).cols();
      Tensor d(in(0).shape());
      for (std::size_t r = 0; r < d.rows(); ++r) {
        auto gr = g.row_span(r);
        auto dr = d.row_span(r);
        for (std::size_t k = 0; k < n.count; ++k)
          for (std::size_t c = 0; c < C; ++c) dr[c] += gr[k * C + c];
      }
      add_into(slot(0), d);
      return;
    }
  }
}

Gradients Tape::backward(Var out) const {
  if (value(out).size() != 1)
    throw ContractViolation("backward: output " + node_label(out) + " is not scalar, shape " +
                            shape_string(value(out).shape()));
  std::vector<Tensor> grads(nodes_.size());
  grads[out.id] = Tensor(value(out).shape(), 1.0);
  for (std::size_t i = out.id + 1; i-- > 0;) {
    if (grads[i].empty() || !nodes_[i].requires_grad) continue;
    if (!grads[i].all_finite())
      throw NumericFault(node_label(Var{static_cast<std::uint32_t>(i)}), "non-finite gradient");
    accumulate_inputs(i, grads[i], grads);
    if (nodes_[i].op != Op::Leaf) grads[i] = Tensor();  // free interior grads early
  }
  return Gradients(this, std::move(grads));
}

Tensor Tape::replay(Var out) const {
  std::vector<Tensor> values(out.id + 1);
  for (std::size_t i = 0; i <= out.id; ++i) {
    const Node& n = nodes_[i];
    if (n.op == Op::Leaf) {
      values[i] = n.get();
      continue;
    }
    std::vector<const Tensor*> in;
    in.reserve(n.inputs.size());
    for (auto id : n.inputs) in.push_back(&values[id]);
    values[i] = compute(n, in);
  }
  return values[out.id];
}

Tensor Gradients::of(Var v) const {
  if (has(v)) return grads_[v.id];
  return Tensor(tape_->value(v).shape());
}

ValueAndGradients evaluate_with_gradients(const Tape& tape, Var out, std::span<const Var> leaves) {
  ValueAndGradients r;
  r.value = tape.scalar(out);
  const auto g = tape.backward(out);
  r.gradients.reserve(leaves.size());
  for (auto l : leaves) r.gradients.push_back(g.of(l));
  return r;
}

}  // namespace promptforge::numerics
