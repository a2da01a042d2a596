#pragma once

// Transfer from the frozen teacher to a small student over synthesized
// images, and the zero-shot / few-shot evaluation protocols.

#include "promptforge/numerics/mlp.hpp"
#include "promptforge/numerics/rng.hpp"
#include "promptforge/teacher.hpp"
#include "promptforge/world.hpp"

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace promptforge::distill {

using numerics::RngStream;
using numerics::Tape;
using numerics::Tensor;
using numerics::Var;

inline constexpr std::size_t kFewShotK[] = {1, 2, 4, 8, 16};

// softmax(scale * cos(I, T_m) / temperature) over the M class embeddings.
std::vector<double> build_soft_label(std::span<const double> image_embedding, const Tensor& class_embeddings,
                                     double scale, double temperature = 1.0);
// One row per image of `pixels` (N x image_dim).
Tensor soft_labels(const teacher::TeacherModel& teacher, const Tensor& pixels,
                   const std::vector<std::string>& categories, double temperature = 1.0);

// Mean over rows and components of |softmax(logits) - targets|.
Var distill_loss(Tape& tape, Var logits, Var targets);
double distill_loss(std::span<const double> probs, std::span<const double> target);

// Mean cross-entropy against integer labels.
Var cross_entropy(Tape& tape, Var logits, const std::vector<std::size_t>& labels);

struct StudentModel {
  numerics::Mlp net;  // image_dim -> 128 -> 64 -> M, relu hidden
  bool standardize = true;  // per-image standardization of the input

  static StudentModel create(std::size_t image_dim, std::size_t classes, const std::vector<std::size_t>& hidden,
                             RngStream& stream);
  std::size_t classes() const { return net.output_dim(); }
  Tensor logits(const Tensor& pixels) const;  // N x M
  std::vector<std::size_t> predict(const Tensor& pixels) const;
  std::string digest() const;
  std::string trunk_digest() const;  // every layer but the last
};

Var student_forward(Tape& tape, const StudentModel& s, const numerics::MlpVars& vars, Var x,
                    std::size_t first = 0, std::size_t last = static_cast<std::size_t>(-1));

struct DistillSchedule {
  std::size_t warmup_epochs = 150;   // head only
  std::size_t finetune_epochs = 150; // everything, at finetune_factor * lr
  double lr = 0.1;
  double finetune_factor = 0.1;
  double momentum = 0.9;
  std::size_t batch_size = 64;
  bool single_phase = false;  // skip warm-up; train everything at lr * finetune_factor for both budgets
  std::vector<std::size_t> hidden{128, 64};
  double label_temperature = 1.0;

  double finetune_lr() const { return lr * finetune_factor; }
  void validate() const;
};

struct DistillReport {
  std::vector<double> epoch_loss;
  std::string init_trunk_digest;
  std::string warmup_trunk_digest;  // after phase one; equals init when the trunk is frozen
  double first_epoch_loss() const { return epoch_loss.empty() ? 0.0 : epoch_loss.front(); }
  double final_epoch_loss() const { return epoch_loss.empty() ? 0.0 : epoch_loss.back(); }
};

struct TrainedStudent {
  StudentModel model;
  DistillReport report;
};

// X is N x image_dim, Y is N x M soft labels.
TrainedStudent train_student(const Tensor& X, const Tensor& Y, const DistillSchedule& schedule,
                             const RngStream& stream);

struct EvalEntry {
  std::string domain;
  std::size_t k = 0;  // 0 for zero-shot
  double accuracy = 0.0;
  std::vector<double> per_class;
  std::vector<std::size_t> per_class_count;
  std::size_t n_eval = 0;
};

EvalEntry evaluate(const StudentModel& s, const world::Dataset& data, const std::string& domain, std::size_t classes);

struct FewShotConfig {
  std::size_t epochs = 60;
  double lr = 0.01;  // 0.1 x the distillation base rate
  double momentum = 0.9;
};

// Fine-tunes a copy of `s` on the support set with cross-entropy, then scores the query set.
EvalEntry few_shot_finetune(const StudentModel& s, const world::FewShotSplit& split, std::size_t k,
                            const std::string& domain, const FewShotConfig& cfg, const RngStream& stream);

// Supervised student on real labelled images, used as the few-shot comparison arm.
StudentModel train_supervised(const world::Dataset& data, std::size_t classes, const DistillSchedule& schedule,
                              std::size_t epochs, const RngStream& stream);

void save_student(const std::filesystem::path& path, const StudentModel& s, const DistillReport* report = nullptr);
StudentModel load_student(const std::filesystem::path& path);

}  // namespace promptforge::distill
