#include "promptforge/error.hpp"
#include "promptforge/harness.hpp"
#include "promptforge/numerics/hash.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <type_traits>

namespace promptforge::harness {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

bool non_negative_integer(const json& x) {
  return x.is_number_integer() && (x.is_number_unsigned() || x.get<long long>() >= 0);
}

template <class T>
struct is_unsigned_vector : std::false_type {};
template <class U>
struct is_unsigned_vector<std::vector<U>> : std::is_unsigned<U> {};

// Reads known keys out of one JSON object and rejects anything else.
class Section {
 public:
  Section(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ValidationError("config section '" + where_ + "' must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
      if (!non_negative_integer(*it)) throw ValidationError(path(key) + " must be a non-negative integer");
    }
    if constexpr (is_unsigned_vector<T>::value) {
      if (!it->is_array()) throw ValidationError(path(key) + " must be a list");
      for (const auto& x : *it)
        if (!non_negative_integer(x)) throw ValidationError(path(key) + " must hold non-negative integers");
    }
    try {
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw ValidationError(path(key) + ": " + e.what());
    }
  }

  // Nested section, or nullptr when absent.
  const json* sub(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ValidationError("unknown config key '" + path(k.c_str()) + "'");
  }

  std::string path(const char* key) const { return where_.empty() ? key : where_ + "." + key; }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

json teacher_json(const teacher::TeacherConfig& t, std::uint64_t seed) {
  return {{"seed", seed},
          {"image_hidden", t.dims.image_hidden},
          {"embed_dim", t.dims.embed_dim},
          {"token_dim", t.dims.token_dim},
          {"text_hidden", t.dims.text_hidden},
          {"standardize", t.dims.standardize},
          {"contrast_map", t.dims.contrast_map},
          {"train_per_class", t.train_per_class},
          {"eval_per_class", t.eval_per_class},
          {"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"lr", t.lr},
          {"vanilla_fraction", t.vanilla_fraction},
          {"init_logit_scale", t.init_logit_scale},
          {"max_logit_scale", t.max_logit_scale},
          {"gate_train_accuracy", t.gate_train_accuracy},
          {"gate_heldout_accuracy", t.gate_heldout_accuracy}};
}

void read_teacher(const json& j, teacher::TeacherConfig& t, std::uint64_t& seed) {
  Section s(j, "teacher");
  s.get("seed", seed);
  s.get("image_hidden", t.dims.image_hidden);
  s.get("embed_dim", t.dims.embed_dim);
  s.get("token_dim", t.dims.token_dim);
  s.get("text_hidden", t.dims.text_hidden);
  s.get("standardize", t.dims.standardize);
  s.get("contrast_map", t.dims.contrast_map);
  s.get("train_per_class", t.train_per_class);
  s.get("eval_per_class", t.eval_per_class);
  s.get("epochs", t.epochs);
  s.get("batch_size", t.batch_size);
  s.get("lr", t.lr);
  s.get("vanilla_fraction", t.vanilla_fraction);
  s.get("init_logit_scale", t.init_logit_scale);
  s.get("max_logit_scale", t.max_logit_scale);
  s.get("gate_train_accuracy", t.gate_train_accuracy);
  s.get("gate_heldout_accuracy", t.gate_heldout_accuracy);
  s.finish();
}

json generator_json(const genlab::GeneratorConfig& g, std::uint64_t seed) {
  return {{"seed", seed},
          {"latent_dim", g.dims.latent_dim},
          {"hidden", g.dims.hidden},
          {"train_per_class", g.train_per_class},
          {"val_per_class", g.val_per_class},
          {"epochs", g.epochs},
          {"batch_size", g.batch_size},
          {"lr", g.lr},
          {"kl_weight", g.kl_weight},
          {"gate_mse", g.gate_mse}};
}

void read_generator(const json& j, genlab::GeneratorConfig& g, std::uint64_t& seed) {
  Section s(j, "generator");
  s.get("seed", seed);
  s.get("latent_dim", g.dims.latent_dim);
  s.get("hidden", g.dims.hidden);
  s.get("train_per_class", g.train_per_class);
  s.get("val_per_class", g.val_per_class);
  s.get("epochs", g.epochs);
  s.get("batch_size", g.batch_size);
  s.get("lr", g.lr);
  s.get("kl_weight", g.kl_weight);
  s.get("gate_mse", g.gate_mse);
  s.finish();
}

json prompts_json(const ExperimentConfig& c) {
  const auto& p = c.prompts;
  const auto& k = p.contrastive;
  return {{"pool_size", c.pool_size},
          {"scale_e", p.scale_e},
          {"beta_alpha", p.beta_alpha},
          {"dictionary", p.dictionary},
          {"dictionary_size", c.dictionary_size},
          {"contrastive",
           {{"tau", k.tau},
            {"lr", k.lr},
            {"epochs", k.epochs},
            {"batch_size", k.batch_size},
            {"bank_sample", k.bank_sample},
            {"bank_capacity", k.bank_capacity},
            {"intra_class", k.intra_class},
            {"augmentation", prompts::augmentation_name(k.augmentation)}}}};
}

void read_prompts(const json& j, ExperimentConfig& c) {
  Section s(j, "prompts");
  s.get("pool_size", c.pool_size);
  s.get("scale_e", c.prompts.scale_e);
  s.get("beta_alpha", c.prompts.beta_alpha);
  s.get("dictionary", c.prompts.dictionary);
  s.get("dictionary_size", c.dictionary_size);
  if (const json* cj = s.sub("contrastive")) {
    auto& k = c.prompts.contrastive;
    Section cs(*cj, "prompts.contrastive");
    cs.get("tau", k.tau);
    cs.get("lr", k.lr);
    cs.get("epochs", k.epochs);
    cs.get("batch_size", k.batch_size);
    cs.get("bank_sample", k.bank_sample);
    cs.get("bank_capacity", k.bank_capacity);
    cs.get("intra_class", k.intra_class);
    std::string aug = prompts::augmentation_name(k.augmentation);
    cs.get("augmentation", aug);
    k.augmentation = prompts::parse_augmentation(aug);
    cs.finish();
  }
  s.finish();
}

json distill_json(const distill::DistillSchedule& d) {
  return {{"warmup_epochs", d.warmup_epochs},     {"finetune_epochs", d.finetune_epochs},
          {"lr", d.lr},                           {"finetune_factor", d.finetune_factor},
          {"momentum", d.momentum},               {"batch_size", d.batch_size},
          {"single_phase", d.single_phase},       {"hidden", d.hidden},
          {"label_temperature", d.label_temperature}};
}

void read_distill(const json& j, distill::DistillSchedule& d) {
  Section s(j, "distill");
  s.get("warmup_epochs", d.warmup_epochs);
  s.get("finetune_epochs", d.finetune_epochs);
  s.get("lr", d.lr);
  s.get("finetune_factor", d.finetune_factor);
  s.get("momentum", d.momentum);
  s.get("batch_size", d.batch_size);
  s.get("single_phase", d.single_phase);
  s.get("hidden", d.hidden);
  s.get("label_temperature", d.label_temperature);
  s.finish();
}

}  // namespace

void ExperimentConfig::validate() const {
  if (image_side < 4) throw ValidationError("image_side must be >= 4");
  if (methods.empty()) throw ValidationError("config lists no prompt methods");
  for (const auto& m : methods)
    if (std::find(prompts::pool_methods().begin(), prompts::pool_methods().end(), m) == prompts::pool_methods().end())
      throw ValidationError("unknown prompt method '" + m + "'");
  if (std::set<std::string>(methods.begin(), methods.end()).size() != methods.size())
    throw ValidationError("duplicate prompt method in config");
  if (seeds.empty()) throw ValidationError("config lists no seeds");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
    throw ValidationError("duplicate seed in config");
  synthesis.validate(7);
  distill.validate();
  if (evaluation.per_class < 2) throw ValidationError("evaluation.per_class must be >= 2");
  if (fewshot.enabled) {
    for (auto k : fewshot.ks) {
      if (std::find(std::begin(distill::kFewShotK), std::end(distill::kFewShotK), k) == std::end(distill::kFewShotK))
        throw ValidationError("few-shot k must be one of 1, 2, 4, 8, 16");
      if (k >= evaluation.per_class) throw ValidationError("few-shot k leaves no query images");
    }
    for (const auto& m : fewshot.methods)
      if (std::find(methods.begin(), methods.end(), m) == methods.end())
        throw ValidationError("few-shot method '" + m + "' is not among the run's methods");
  }
  if (!(prompts.scale_e >= 0.0)) throw ValidationError("prompts.scale_e must be >= 0");
  if (!(prompts.contrastive.tau > 0.0)) throw ValidationError("prompts.contrastive.tau must be positive");
  if (dictionary_size == 1) throw ValidationError("prompts.dictionary_size must be 0 or >= 2");
}

json to_json(const ExperimentConfig& c) {
  json fs_json = {{"enabled", c.fewshot.enabled},
                  {"methods", c.fewshot.methods},
                  {"ks", c.fewshot.ks},
                  {"epochs", c.fewshot.finetune.epochs},
                  {"lr", c.fewshot.finetune.lr},
                  {"momentum", c.fewshot.finetune.momentum},
                  {"baseline_epochs", c.fewshot.baseline_epochs},
                  {"baseline_per_class", c.fewshot.baseline_per_class}};
  return {{"schema", kSchema},
          {"world", {{"image_side", c.image_side}}},
          {"teacher", teacher_json(c.teacher, c.teacher_seed)},
          {"generator", generator_json(c.generator, c.generator_seed)},
          {"prompts", prompts_json(c)},
          {"synthesis",
           {{"per_class", c.synthesis.per_class},
            {"iterations", c.synthesis.iterations},
            {"lr", c.synthesis.lr},
            {"batch_size", c.synthesis.batch_size}}},
          {"distill", distill_json(c.distill)},
          {"evaluation", {{"per_class", c.evaluation.per_class}, {"seed", c.evaluation.seed}}},
          {"fewshot", fs_json},
          {"methods", c.methods},
          {"seeds", c.seeds}};
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  Section top(j, "");
  std::string schema;
  top.get("schema", schema);
  if (schema != kSchema) throw ValidationError("config schema must be '" + std::string(kSchema) + "', got '" + schema + "'");
  if (const json* w = top.sub("world")) {
    Section s(*w, "world");
    s.get("image_side", c.image_side);
    s.finish();
  }
  if (const json* t = top.sub("teacher")) read_teacher(*t, c.teacher, c.teacher_seed);
  if (const json* g = top.sub("generator")) read_generator(*g, c.generator, c.generator_seed);
  if (const json* p = top.sub("prompts")) read_prompts(*p, c);
  if (const json* sj = top.sub("synthesis")) {
    Section s(*sj, "synthesis");
    s.get("per_class", c.synthesis.per_class);
    s.get("iterations", c.synthesis.iterations);
    s.get("lr", c.synthesis.lr);
    s.get("batch_size", c.synthesis.batch_size);
    s.finish();
  }
  if (const json* d = top.sub("distill")) read_distill(*d, c.distill);
  if (const json* e = top.sub("evaluation")) {
    Section s(*e, "evaluation");
    s.get("per_class", c.evaluation.per_class);
    s.get("seed", c.evaluation.seed);
    s.finish();
  }
  if (const json* f = top.sub("fewshot")) {
    Section s(*f, "fewshot");
    s.get("enabled", c.fewshot.enabled);
    s.get("methods", c.fewshot.methods);
    s.get("ks", c.fewshot.ks);
    s.get("epochs", c.fewshot.finetune.epochs);
    s.get("lr", c.fewshot.finetune.lr);
    s.get("momentum", c.fewshot.finetune.momentum);
    s.get("baseline_epochs", c.fewshot.baseline_epochs);
    s.get("baseline_per_class", c.fewshot.baseline_per_class);
    s.finish();
  }
  top.get("methods", c.methods);
  top.get("seeds", c.seeds);
  top.finish();
  // Dimensions that must agree across stages follow the world.
  c.teacher.dims.image_side = c.image_side;
  c.generator.dims.image_side = c.image_side;
  c.validate();
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ValidationError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

void save_config(const fs::path& path, const ExperimentConfig& c) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw ValidationError("cannot write " + path.string());
  os << to_json(c).dump(2) << "\n";
}

std::string config_hash(const ExperimentConfig& c) { return numerics::sha256_hex(to_json(c).dump()); }

std::vector<std::string> effective_dictionary(const ExperimentConfig& c, std::uint64_t seed) {
  const auto& words = c.prompts.dictionary;
  if (c.dictionary_size == 0 || c.dictionary_size >= words.size()) return words;
  numerics::RngStream s(seed, "dictionary");
  auto perm = s.permutation(words.size());
  perm.resize(c.dictionary_size);
  std::sort(perm.begin(), perm.end());
  std::vector<std::string> out;
  for (auto i : perm) out.push_back(words[i]);
  return out;
}

}  // namespace promptforge::harness
