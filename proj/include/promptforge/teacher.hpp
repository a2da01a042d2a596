#pragma once

// Toy vision-language teacher: character tokenizer, token codebook,
// position-pooled sentence encoder, dense image encoder, and a learned logit
// scale, trained with a symmetric contrastive objective on captioned
// teacher-train images.

#include "promptforge/numerics/checkpoint.hpp"
#include "promptforge/numerics/mlp.hpp"
#include "promptforge/numerics/tape.hpp"
#include "promptforge/world.hpp"

#include <array>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace promptforge::teacher {

using numerics::Tape;
using numerics::Tensor;
using numerics::Var;

inline constexpr std::size_t kMaxSequence = 64;
inline constexpr char kPseudoMarker = '*';

struct TokenSequence {
  static constexpr std::size_t kSlot = std::numeric_limits<std::size_t>::max();

  std::vector<std::size_t> ids;  // kSlot marks the pseudo-word position
  std::optional<Tensor> injected;  // 1 x D_tok, fills the slot

  std::size_t size() const noexcept { return ids.size(); }
  std::optional<std::size_t> slot() const;
  void fill(Tensor v);
};

// Lowercase letters, space, hyphen and digits 0-3 map to codebook rows; the
// pseudo marker becomes a slot.
class Tokenizer {
 public:
  Tokenizer();

  std::size_t vocab_size() const noexcept { return alphabet_.size(); }
  const std::string& alphabet() const noexcept { return alphabet_; }
  std::string alphabet_hash() const;
  std::optional<std::size_t> id(char c) const;
  char symbol(std::size_t id) const { return alphabet_.at(id); }
  bool permitted(std::string_view text) const;

  TokenSequence tokenize(std::string_view text) const;
  std::string detokenize(const TokenSequence& seq) const;

 private:
  std::string alphabet_;
  std::array<int, 256> table_{};
};

struct TeacherDims {
  std::size_t image_side = world::kDefaultImageSide;
  std::vector<std::size_t> image_hidden{32, 32};
  std::size_t embed_dim = 32;
  std::size_t token_dim = 16;
  std::size_t text_hidden = 64;
  bool standardize = true;  // per-image zero mean / unit variance before the image encoder
  bool contrast_map = true;  // also feed |x - border mean|, which ignores polarity

  std::size_t image_dim() const { return image_side * image_side * 3; }
  std::size_t encoder_input_dim() const { return contrast_map ? 2 * image_dim() : image_dim(); }
};

struct TeacherModel {
  TeacherDims dims;
  Tokenizer tokenizer;
  Tensor codebook;   // K x D_tok
  Tensor positions;  // 1 x kMaxSequence
  numerics::Mlp text;   // D_tok -> hidden -> embed
  numerics::Mlp image;  // image_dim -> ... -> embed
  double log_scale = 0.0;

  static TeacherModel init(const TeacherDims& dims, numerics::RngStream& stream);

  double logit_scale() const { return std::exp(log_scale); }

  // Row-wise unit embeddings. Pixels are N x image_dim (or a single image).
  Tensor encode_images(const Tensor& pixels) const;
  Tensor encode_texts(const std::vector<std::string>& texts) const;
  Tensor encode_text(std::string_view text) const { return encode_texts({std::string(text)}); }
  Tensor encode_sequences(const std::vector<TokenSequence>& seqs) const;

  // Vanilla "a <cls>" embeddings, one row per category.
  Tensor class_embeddings(const std::vector<std::string>& categories) const;

  std::string digest() const;  // hash of every weight, for frozen-ness checks
};

// Tape bindings of a model's weights.
struct TeacherVars {
  Var codebook;
  Var positions;
  numerics::MlpVars text;
  numerics::MlpVars image;
  Var log_scale;
  std::vector<Var> all() const;
};

TeacherVars bind(Tape& tape, const TeacherModel& model, bool trainable);

// E_token: L x D_tok rows, with the slot taken from `injected` when given.
Var token_embed(Tape& tape, const TeacherVars& vars, const TokenSequence& seq,
                std::optional<Var> injected = std::nullopt);
// E_sentence over several token matrices; one unit row per sequence.
Var sentence_embed(Tape& tape, const TeacherModel& model, const TeacherVars& vars,
                   std::span<const Var> token_rows);
// E_img over an N x image_dim batch.
Var encode_image(Tape& tape, const TeacherModel& model, const TeacherVars& vars, Var pixels);

// Per-row (x - mean) / sqrt(var + eps), built from differentiable primitives.
Var standardize_rows(Tape& tape, Var x, double eps = 1e-4);

// |x - b| where b is each image's per-channel mean over its one-pixel border.
Var contrast_map(Tape& tape, Var pixels, std::size_t side);

// Row-wise (2 asin(|u-v|/2))^2, R x 1.
Var spherical_distance_sq(Tape& tape, Var u, Var v);
// Row-wise cosine similarity, R x 1.
Var cosine_similarity(Tape& tape, Var u, Var v);

// Plain-value versions. Inputs to the distance must be unit norm within 1e-6.
double spherical_distance_sq(std::span<const double> u, std::span<const double> v);
double cosine_similarity(std::span<const double> u, std::span<const double> v);

// Index of the most similar class prompt.
std::size_t zero_shot_classify(std::span<const double> image_embedding, const Tensor& class_embeddings);
std::vector<std::size_t> zero_shot_classify(const Tensor& image_embeddings, const Tensor& class_embeddings);

struct TeacherConfig {
  TeacherDims dims;
  std::size_t train_per_class = 120;  // per teacher-train domain
  std::size_t eval_per_class = 30;
  std::size_t epochs = 60;
  std::size_t batch_size = 64;
  double lr = 2e-3;
  double vanilla_fraction = 0.3;
  double init_logit_scale = 10.0;
  double max_logit_scale = 100.0;
  double gate_train_accuracy = 0.90;
  double gate_heldout_accuracy = 0.60;
};

struct TeacherReport {
  double first_epoch_loss = 0.0;
  double final_epoch_loss = 0.0;
  double train_accuracy = 0.0;    // vanilla zero-shot, fresh teacher-train images
  double heldout_accuracy = 0.0;  // vanilla zero-shot, held-out domains
  double pair_match_rate = 0.0;   // matched caption beats a mismatched one
};

struct PretrainedTeacher {
  TeacherModel model;
  TeacherReport report;
};

// Trains on captioned teacher-train images and applies the calibration gates;
// throws GateFailure when either accuracy threshold is missed.
PretrainedTeacher pretrain_teacher(const world::WorldSpec& world, const TeacherConfig& config,
                                   const numerics::RngStream& stream);

// Accuracy / matching measurements used by the gates.
TeacherReport evaluate_teacher(const TeacherModel& model, const world::WorldSpec& world,
                               std::size_t per_class, const numerics::RngStream& stream);

double zero_shot_accuracy(const TeacherModel& model, const world::Dataset& data,
                          const std::vector<std::string>& categories);

void save_teacher(const std::filesystem::path& path, const TeacherModel& model, const TeacherReport* report = nullptr);
TeacherModel load_teacher(const std::filesystem::path& path);

}  // namespace promptforge::teacher
