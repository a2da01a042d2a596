#pragma once

// Prompt diversification: pools of per-category text embeddings built from
// the vanilla caption, mixed style captions, random pseudo-word tokens, or
// pseudo-word tokens pushed apart by a contrastive objective.

#include "promptforge/genlab.hpp"
#include "promptforge/numerics/rng.hpp"
#include "promptforge/teacher.hpp"

#include <json.hpp>

#include <cstddef>
#include <deque>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace promptforge::prompts {

using genlab::PromptEntry;
using genlab::PromptsByClass;
using numerics::RngStream;
using numerics::Tape;
using numerics::Tensor;
using numerics::Var;

inline constexpr const char* kTemplate = "in the style of";

// 32 words, none of them a held-out style name.
std::vector<std::string> default_style_dictionary();
std::vector<std::string> load_style_dictionary(const std::filesystem::path& path);
void save_style_dictionary(const std::filesystem::path& path, const std::vector<std::string>& words);
// Throws when a word is empty, duplicated, untokenizable, or one of `forbidden`.
void validate_dictionary(const std::vector<std::string>& words, const teacher::Tokenizer& tok,
                         const std::vector<std::string>& forbidden);

// lambda * a + (1 - lambda) * b, renormalized to unit length.
Tensor mix_prompt(const Tensor& a, const Tensor& b, double lambda);

struct CodebookStats {
  std::vector<double> mean;
  std::vector<double> stddev;  // population
};

CodebookStats estimate_codebook_stats(const Tensor& codebook);

struct PseudoToken {
  Tensor value;  // 1 x D_tok
  std::string provenance;  // "random" or "contrastive"
  std::vector<double> eps;  // the N(0,1) draws when random
  double scale = 0.0;
};

// V_d = mean_d + e * eps_d * stddev_d
PseudoToken sample_pseudo_token(const CodebookStats& stats, double e, RngStream& stream);

std::string pseudo_caption(const std::string& category);  // "<cls> in the style of *"

// Unit embedding of "<cls> in the style of *" with the slot filled by V.
Tensor compose_prompt(const std::string& category, const Tensor& v, const teacher::TeacherModel& teacher);

enum class Augmentation { Shuffle, Substitute };
std::string augmentation_name(Augmentation a);
Augmentation parse_augmentation(const std::string& name);

// Letters of each template word are permuted (perms[w] maps output slot to
// source letter); everything outside the template is left alone.
std::string apply_template_permutation(const std::string& text, const std::vector<std::vector<std::size_t>>& perms);
std::string shuffle_template_augment(const std::string& text, RngStream& stream);
// Every template letter replaced by a uniformly drawn letter.
std::string substitute_template_augment(const std::string& text, RngStream& stream);

// Mean over rows of -log softmax(pos, negatives)[pos], where logits are
// cosine similarity / tau. The positive stays in the denominator. `mask` is
// rows x K with 1 for usable negatives and 0 for excluded ones.
Var contrastive_prompt_loss(Tape& tape, Var anchors, Var positives, Var negatives, const Tensor& mask, double tau);
double contrastive_prompt_loss(std::span<const double> anchor, std::span<const double> positive,
                               const std::vector<std::span<const double>>& negatives, double tau);

// FIFO ring of detached unit embeddings, each tagged with its category.
class MemoryBank {
 public:
  MemoryBank(std::size_t capacity, std::size_t embed_dim);

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t size() const noexcept { return rows_.size(); }
  std::size_t pushed() const noexcept { return pushed_; }
  void push(const Tensor& rows, const std::vector<std::size_t>& categories);
  const std::vector<double>& row(std::size_t i) const { return rows_.at(i); }
  std::size_t category(std::size_t i) const { return cats_.at(i); }
  // Up to k distinct indices, oldest-first order of the bank.
  std::vector<std::size_t> sample(std::size_t k, RngStream& stream) const;

 private:
  std::size_t capacity_;
  std::size_t dim_;
  std::deque<std::vector<double>> rows_;
  std::deque<std::size_t> cats_;
  std::size_t pushed_ = 0;
};

struct ContrastiveConfig {
  double tau = 0.1;
  double lr = 0.1;
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  std::size_t bank_sample = 256;
  std::size_t bank_capacity = 4096;
  bool intra_class = false;  // negatives only from the anchor's own category
  Augmentation augmentation = Augmentation::Shuffle;
};

struct ContrastiveTrace {
  std::vector<double> epoch_loss;
  std::size_t steps = 0;
  std::size_t bank_size = 0;
  std::vector<std::size_t> negatives_per_step;  // in-batch plus bank, before masking
  bool flagged = false;  // final epoch loss not below the first
};

struct PoolConfig {
  double scale_e = 10.0;
  double beta_alpha = 1.0;
  std::vector<std::string> dictionary = default_style_dictionary();
  ContrastiveConfig contrastive;
};

struct PromptPool {
  std::string method;
  std::vector<std::string> categories;
  PromptsByClass entries;
  std::vector<std::vector<Tensor>> pseudo_tokens;  // random / contrastive only
  std::optional<ContrastiveTrace> trace;

  std::size_t per_class() const { return entries.empty() ? 0 : entries.front().size(); }
};

// Starting from pseudo tokens per category, pushes prompts apart. Updates
// `tokens` in place and returns the run's trace.
ContrastiveTrace optimize_contrastive_prompts(const std::vector<std::string>& categories,
                                              std::vector<std::vector<Tensor>>& tokens, const ContrastiveConfig& cfg,
                                              MemoryBank& bank, const teacher::TeacherModel& teacher,
                                              const RngStream& stream);

inline const std::vector<std::string>& pool_methods() {
  static const std::vector<std::string> m{"vanilla", "mix", "random", "contrastive"};
  return m;
}

PromptPool build_pool(const std::string& method, const std::vector<std::string>& categories, std::size_t size,
                      const PoolConfig& cfg, const teacher::TeacherModel& teacher, const RngStream& stream);

// Mean pairwise cosine distance (1 - cos) within each group, averaged over
// groups with at least two rows.
double mean_pairwise_cosine_distance(const std::vector<std::vector<std::span<const double>>>& groups);
double pool_diversity(const PromptPool& pool);

nlohmann::json pool_config_json(const PoolConfig& cfg);
// Writes <path> (JSON manifest) and <path with .ten extension> (embeddings).
void save_pool(const std::filesystem::path& path, const PromptPool& pool, const PoolConfig& cfg);
PromptPool load_pool(const std::filesystem::path& path);

}  // namespace promptforge::prompts
