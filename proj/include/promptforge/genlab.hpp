#pragma once

// Frozen toy image generator and the latent-code synthesis loop that turns
// prompt embeddings into surrogate training images.

#include "promptforge/numerics/mlp.hpp"
#include "promptforge/numerics/rng.hpp"
#include "promptforge/teacher.hpp"
#include "promptforge/world.hpp"

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace promptforge::genlab {

using numerics::RngStream;
using numerics::Tape;
using numerics::Tensor;
using numerics::Var;

struct GeneratorDims {
  std::size_t image_side = world::kDefaultImageSide;
  std::size_t latent_dim = 32;
  std::vector<std::size_t> hidden{32, 64};  // decoder hidden widths; the encoder mirrors them

  std::size_t image_dim() const { return image_side * image_side * 3; }
};

// Only the decoder survives pretraining.
struct GeneratorModel {
  GeneratorDims dims;
  numerics::Mlp decoder;  // latent -> hidden... -> image_dim, sigmoid output

  Tensor decode(const Tensor& z) const;  // N x latent -> N x image_dim
  std::string digest() const;
};

// Tape version; z is N x latent.
Var decode(Tape& tape, const GeneratorModel& g, const numerics::MlpVars& vars, Var z);

struct GeneratorConfig {
  GeneratorDims dims;
  std::size_t train_per_class = 200;
  std::size_t val_per_class = 20;
  std::size_t epochs = 40;
  std::size_t batch_size = 64;
  double lr = 2e-3;
  double kl_weight = 0.02;  // on per-image KL, relative to per-image summed squared error
  double gate_mse = 0.02;
};

struct GeneratorReport {
  double first_epoch_loss = 0.0;
  double final_epoch_loss = 0.0;
  double validation_mse = 0.0;
};

struct PretrainedGenerator {
  GeneratorModel model;
  GeneratorReport report;
};

// Variational autoencoder on generator-train domains; throws GateFailure when
// the validation reconstruction error is too high.
PretrainedGenerator pretrain_generator(const world::WorldSpec& world, const GeneratorConfig& config,
                                       const RngStream& stream);

void save_generator(const std::filesystem::path& path, const GeneratorModel& g,
                    const GeneratorReport* report = nullptr);
GeneratorModel load_generator(const std::filesystem::path& path);

// One unit-norm text embedding that conditions one synthesized image.
struct PromptEntry {
  Tensor embedding;  // 1 x embed_dim
  std::size_t category = 0;
  std::string provenance;  // "vanilla", "mix:<a>|<b>:<lambda>", "random", "contrastive"
};

// Prompt embeddings grouped by category id.
using PromptsByClass = std::vector<std::vector<PromptEntry>>;

struct SynthesisPlan {
  std::size_t per_class = 200;
  std::size_t iterations = 500;
  double lr = 0.15;
  std::size_t batch_size = 8;
  std::size_t workers = 1;  // batches run in parallel; results do not depend on this

  std::size_t total(std::size_t classes) const { return per_class * classes; }
  void validate(std::size_t classes) const;
};

struct SynthesizedImage {
  Tensor pixels;  // side x side x 3
  std::size_t category = 0;
  std::size_t prompt_index = 0;
  std::string provenance;
  double initial_loss = 0.0;
  double final_loss = 0.0;  // loss at the last iteration
  std::string stream;       // label of the latent-init stream
};

struct SynthesisResult {
  std::vector<SynthesizedImage> images;
  std::size_t diverged = 0;  // final loss above initial

  double diverged_fraction() const {
    return images.empty() ? 0.0 : static_cast<double>(diverged) / static_cast<double>(images.size());
  }
};

// Per-image prompt choice: each class cycles through a shuffled copy of its
// pool, so a pool at least as large as per_class is used without repeats.
std::vector<std::pair<std::size_t, std::size_t>> assign_prompts(const PromptsByClass& prompts,
                                                                const SynthesisPlan& plan, const RngStream& stream);

// Optimizes one latent per image against its prompt with Adam on the squared
// spherical distance between the teacher's image embedding and the prompt.
SynthesisResult synthesize(const PromptsByClass& prompts, const SynthesisPlan& plan,
                           const teacher::TeacherModel& teacher, const GeneratorModel& generator,
                           const RngStream& stream);

// Dataset view of a synthesized set (domain "synth", style = provenance).
world::Dataset to_dataset(const SynthesisResult& r);

// Writes the dataset directory plus synthesis.json with per-image provenance and losses.
void save_synthesis(const std::filesystem::path& dir, const SynthesisResult& r,
                    const std::vector<std::string>& categories);
SynthesisResult load_synthesis(const std::filesystem::path& dir);

// Number of workers from PROMPTFORGE_WORKERS, default 1.
std::size_t workers_from_env();

}  // namespace promptforge::genlab
