#include "promptforge/distill.hpp"

#include "promptforge/error.hpp"
#include "promptforge/numerics/hash.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <set>

namespace promptforge::distill {

using numerics::Activation;

std::vector<double> build_soft_label(std::span<const double> image_embedding, const Tensor& class_embeddings,
                                     double scale, double temperature) {
  const std::size_t M = class_embeddings.rows();
  if (M < 2) throw ContractViolation("soft labels need at least two classes");
  if (!(scale > 0.0) || !(temperature > 0.0)) throw ValidationError("soft-label scale and temperature must be positive");
  std::vector<double> z(M);
  for (std::size_t m = 0; m < M; ++m)
    z[m] = scale * teacher::cosine_similarity(image_embedding, class_embeddings.row_span(m)) / temperature;
  const double mx = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double& v : z) s += (v = std::exp(v - mx));
  for (double& v : z) v /= s;
  return z;
}

Tensor soft_labels(const teacher::TeacherModel& teacher, const Tensor& pixels,
                   const std::vector<std::string>& categories, double temperature) {
  const Tensor cls = teacher.class_embeddings(categories);
  const Tensor emb = teacher.encode_images(pixels);
  Tensor y = Tensor::matrix(emb.rows(), categories.size());
  for (std::size_t i = 0; i < emb.rows(); ++i) {
    const auto row = build_soft_label(emb.row_span(i), cls, teacher.logit_scale(), temperature);
    std::copy(row.begin(), row.end(), y.row_span(i).begin());
  }
  return y;
}

Var distill_loss(Tape& tape, Var logits, Var targets) {
  if (tape.value(logits).shape() != tape.value(targets).shape())
    throw ContractViolation("distill_loss: student output and soft label widths differ");
  return tape.mean(tape.abs(tape.sub(tape.softmax_rows(logits), targets)));
}

double distill_loss(std::span<const double> probs, std::span<const double> target) {
  if (probs.size() != target.size() || probs.empty()) throw ContractViolation("distill_loss: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) s += std::abs(probs[i] - target[i]);
  return s / static_cast<double>(probs.size());
}

Var cross_entropy(Tape& tape, Var logits, const std::vector<std::size_t>& labels) {
  const auto& v = tape.value(logits);
  if (labels.size() != v.rows()) throw ContractViolation("cross_entropy: label count mismatch");
  Tensor onehot = Tensor::matrix(v.rows(), v.cols());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= v.cols()) throw ContractViolation("cross_entropy: label out of range");
    onehot.at(i, labels[i]) = 1.0;
  }
  Var picked = tape.sum(tape.mul(tape.log_softmax_rows(logits), tape.constant(std::move(onehot))));
  return tape.scale(picked, -1.0 / static_cast<double>(labels.size()));
}

StudentModel StudentModel::create(std::size_t image_dim, std::size_t classes, const std::vector<std::size_t>& hidden,
                                  RngStream& stream) {
  if (classes < 2) throw ValidationError("student needs at least two classes");
  std::vector<std::size_t> sizes{image_dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(classes);
  StudentModel s;
  s.net = numerics::Mlp::create(sizes, Activation::Relu, Activation::Identity, stream);
  return s;
}

Var student_forward(Tape& tape, const StudentModel& s, const numerics::MlpVars& vars, Var x, std::size_t first,
                    std::size_t last) {
  if (first == 0 && s.standardize) x = tape.standardize_rows(x, 1e-4);
  return numerics::forward(tape, s.net, vars, x, first, last);
}

Tensor StudentModel::logits(const Tensor& pixels) const {
  const std::size_t D = net.input_dim();
  if (pixels.size() % D != 0) throw ContractViolation("student: pixel count not a multiple of the input width");
  Tape tape;
  const auto vars = numerics::bind(tape, net, false);
  return tape.value(student_forward(tape, *this, vars, tape.constant(pixels.reshaped({pixels.size() / D, D}))));
}

std::vector<std::size_t> StudentModel::predict(const Tensor& pixels) const {
  const Tensor z = logits(pixels);
  std::vector<std::size_t> out(z.rows());
  for (std::size_t i = 0; i < z.rows(); ++i) {
    const auto r = z.row_span(i);
    out[i] = static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
  }
  return out;
}

namespace {

std::string layers_digest(const numerics::Mlp& net, std::size_t count) {
  std::string bytes;
  for (std::size_t l = 0; l < count; ++l)
    for (const auto* t : {&net.layers[l].weight, &net.layers[l].bias})
      bytes.append(reinterpret_cast<const char*>(t->values().data()), t->size() * sizeof(double));
  return numerics::sha256_hex(bytes);
}

Tensor gather(const Tensor& X, const std::vector<std::size_t>& perm, std::size_t start, std::size_t count) {
  Tensor out = Tensor::matrix(count, X.cols());
  for (std::size_t i = 0; i < count; ++i)
    std::copy_n(X.row_span(perm[start + i]).begin(), X.cols(), out.row_span(i).begin());
  return out;
}

}  // namespace

std::string StudentModel::digest() const { return layers_digest(net, net.layers.size()); }
std::string StudentModel::trunk_digest() const { return layers_digest(net, net.layers.size() - 1); }

void DistillSchedule::validate() const {
  if (!(lr > 0.0) || !(finetune_factor > 0.0)) throw ValidationError("distill learning rates must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("momentum must lie in [0, 1)");
  if (batch_size < 1) throw ValidationError("distill batch size must be >= 1");
  if (warmup_epochs + finetune_epochs < 1) throw ValidationError("distill needs at least one epoch");
  if (!(label_temperature > 0.0)) throw ValidationError("label temperature must be positive");
}

TrainedStudent train_student(const Tensor& X, const Tensor& Y, const DistillSchedule& sch, const RngStream& stream) {
  sch.validate();
  if (X.rows() == 0 || X.rows() != Y.rows()) throw ValidationError("distillation data is empty or misaligned");
  auto init = stream.child("init");
  TrainedStudent out{StudentModel::create(X.cols(), Y.cols(), sch.hidden, init), {}};
  StudentModel& s = out.model;
  const std::size_t L = s.net.layers.size();
  const std::size_t N = X.rows();
  out.report.init_trunk_digest = s.trunk_digest();
  RngStream order = stream.child("order");

  auto run_epoch = [&](const Tensor& inputs, std::size_t first, auto&& make_vars, auto&& step) {
    const auto perm = order.permutation(N);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < N; start += sch.batch_size) {
      const std::size_t B = std::min(sch.batch_size, N - start);
      Tape tape;
      auto vars = make_vars(tape);
      Var x = tape.constant(gather(inputs, perm, start, B));
      Var y = tape.constant(gather(Y, perm, start, B));
      Var loss = distill_loss(tape, student_forward(tape, s, vars, x, first), y);
      step(tape.backward(loss), vars);
      total += tape.scalar(loss);
      ++batches;
    }
    out.report.epoch_loss.push_back(total / static_cast<double>(batches));
  };

  if (!sch.single_phase && sch.warmup_epochs > 0) {
    // The trunk is frozen, so its features are computed once.
    Tape ft;
    const auto fv = numerics::bind(ft, s.net, false);
    const Tensor features = ft.value(student_forward(ft, s, fv, ft.constant_ref(X), 0, L - 1));
    numerics::MomentumGroup head({&s.net.layers[L - 1].weight, &s.net.layers[L - 1].bias},
                                 {.lr = sch.lr, .momentum = sch.momentum});
    for (std::size_t e = 0; e < sch.warmup_epochs; ++e)
      run_epoch(
          features, L - 1,
          [&](Tape& tape) {
            auto v = numerics::bind(tape, s.net, false);
            v.weights[L - 1] = tape.param(s.net.layers[L - 1].weight);
            v.biases[L - 1] = tape.param(s.net.layers[L - 1].bias);
            return v;
          },
          [&](const numerics::Gradients& g, const numerics::MlpVars& v) {
            head.step(numerics::collect(g, {v.weights[L - 1], v.biases[L - 1]}));
          });
  }
  out.report.warmup_trunk_digest = s.trunk_digest();

  const std::size_t full_epochs = sch.single_phase ? sch.warmup_epochs + sch.finetune_epochs : sch.finetune_epochs;
  numerics::MomentumGroup all(s.net.parameters(), {.lr = sch.finetune_lr(), .momentum = sch.momentum});
  for (std::size_t e = 0; e < full_epochs; ++e)
    run_epoch(
        X, 0, [&](Tape& tape) { return numerics::bind(tape, s.net, true); },
        [&](const numerics::Gradients& g, const numerics::MlpVars& v) { all.step(numerics::collect(g, v.all())); });
  return out;
}

EvalEntry evaluate(const StudentModel& s, const world::Dataset& data, const std::string& domain, std::size_t classes) {
  if (data.empty()) throw ValidationError("evaluation set is empty");
  EvalEntry e;
  e.domain = domain;
  e.n_eval = data.size();
  e.per_class.assign(classes, 0.0);
  e.per_class_count.assign(classes, 0);
  const auto pred = s.predict(world::stack_pixels(data));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto c = data[i].category;
    if (c >= classes) throw ValidationError("evaluation label outside the student's classes");
    ++e.per_class_count[c];
    if (pred[i] == c) {
      ++hits;
      e.per_class[c] += 1.0;
    }
  }
  for (std::size_t c = 0; c < classes; ++c)
    if (e.per_class_count[c]) e.per_class[c] /= static_cast<double>(e.per_class_count[c]);
  e.accuracy = static_cast<double>(hits) / static_cast<double>(data.size());
  return e;
}

namespace {

void fit_cross_entropy(StudentModel& s, const Tensor& X, const std::vector<std::size_t>& labels, std::size_t epochs,
                       std::size_t batch, double lr, double momentum, RngStream& order) {
  numerics::MomentumGroup opt(s.net.parameters(), {.lr = lr, .momentum = momentum});
  const std::size_t N = X.rows();
  for (std::size_t e = 0; e < epochs; ++e) {
    const auto perm = order.permutation(N);
    for (std::size_t start = 0; start < N; start += batch) {
      const std::size_t B = std::min(batch, N - start);
      std::vector<std::size_t> y(B);
      for (std::size_t i = 0; i < B; ++i) y[i] = labels[perm[start + i]];
      Tape tape;
      const auto v = numerics::bind(tape, s.net, true);
      Var loss = cross_entropy(tape, student_forward(tape, s, v, tape.constant(gather(X, perm, start, B))), y);
      opt.step(numerics::collect(tape.backward(loss), v.all()));
    }
  }
}

std::vector<std::size_t> labels_of(const world::Dataset& d) {
  std::vector<std::size_t> y;
  for (const auto& img : d) y.push_back(img.category);
  return y;
}

}  // namespace

EvalEntry few_shot_finetune(const StudentModel& s, const world::FewShotSplit& split, std::size_t k,
                            const std::string& domain, const FewShotConfig& cfg, const RngStream& stream) {
  if (std::find(std::begin(kFewShotK), std::end(kFewShotK), k) == std::end(kFewShotK))
    throw ValidationError("few-shot k must be one of 1, 2, 4, 8, 16");
  std::set<std::string> support_ids;
  for (const auto& img : split.support) support_ids.insert(img.stream);
  for (const auto& img : split.query)
    if (support_ids.count(img.stream)) throw ContractViolation("few-shot support and query sets overlap");
  std::vector<std::size_t> per_class(s.classes(), 0);
  for (const auto& img : split.support) ++per_class.at(img.category);
  for (auto n : per_class)
    if (n != k) throw ContractViolation("few-shot support set is not k per class");

  StudentModel tuned = s;
  RngStream order = stream.child("order");
  fit_cross_entropy(tuned, world::stack_pixels(split.support), labels_of(split.support), cfg.epochs,
                    split.support.size(), cfg.lr, cfg.momentum, order);
  auto e = evaluate(tuned, split.query, domain, s.classes());
  e.k = k;
  return e;
}

StudentModel train_supervised(const world::Dataset& data, std::size_t classes, const DistillSchedule& sch,
                              std::size_t epochs, const RngStream& stream) {
  sch.validate();
  if (data.empty()) throw ValidationError("supervised training set is empty");
  auto init = stream.child("init");
  const Tensor X = world::stack_pixels(data);
  StudentModel s = StudentModel::create(X.cols(), classes, sch.hidden, init);
  RngStream order = stream.child("order");
  fit_cross_entropy(s, X, labels_of(data), epochs, sch.batch_size, sch.finetune_lr(), sch.momentum, order);
  return s;
}

void save_student(const std::filesystem::path& path, const StudentModel& s, const DistillReport* report) {
  nlohmann::json h;
  h["kind"] = "student";
  h["sizes"] = s.net.sizes();
  h["standardize"] = s.standardize;
  if (report) h["report"] = {{"epoch_loss", report->epoch_loss}, {"init_trunk_digest", report->init_trunk_digest},
                             {"warmup_trunk_digest", report->warmup_trunk_digest}};
  numerics::Checkpoint ck;
  ck.header = h.dump();
  s.net.export_to(ck.tensors, "net");
  numerics::save_checkpoint(path, ck);
}

StudentModel load_student(const std::filesystem::path& path) {
  const auto ck = numerics::load_checkpoint(path);
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(ck.header);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("student checkpoint header: " + std::string(e.what()));
  }
  if (h.value("kind", "") != "student") throw ValidationError(path.string() + " is not a student checkpoint");
  StudentModel s;
  const auto sizes = h.at("sizes").get<std::vector<std::size_t>>();
  s.standardize = h.value("standardize", true);
  s.net = numerics::Mlp::import_from(ck, "net", sizes.size() - 1, Activation::Relu, Activation::Identity);
  return s;
}

}  // namespace promptforge::distill
