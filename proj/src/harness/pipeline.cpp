#include "promptforge/error.hpp"
#include "promptforge/harness.hpp"
#include "promptforge/numerics/hash.hpp"
#include "promptforge/numerics/parallel.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

namespace promptforge::harness {

using nlohmann::json;
namespace fs = std::filesystem;
using numerics::RngStream;
using numerics::Tensor;

namespace {

// Bump when a code change makes old artifacts stale.
constexpr const char* kCacheVersion = "pf-cache/1";

std::string hash_json(const json& j) { return numerics::sha256_hex(j.dump()); }
std::string short_key(const std::string& key) { return key.substr(0, 16); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path meta_path(const fs::path& artifact) {
  fs::path p = artifact;
  p.replace_extension();
  p += ".meta.json";
  return p;
}

std::optional<json> read_meta(const fs::path& artifact, const std::string& key) {
  const fs::path mp = meta_path(artifact);
  if (!fs::exists(mp) || !fs::exists(artifact)) return std::nullopt;
  std::ifstream is(mp);
  json j = json::parse(is, nullptr, false);
  if (j.is_discarded() || j.value("key", "") != key) return std::nullopt;
  return j;
}

// Metadata goes last and via rename, so a crash mid-build never yields a hit.
void write_meta(const fs::path& artifact, const StageInfo& info) {
  const fs::path mp = meta_path(artifact);
  std::ostringstream tid;
  tid << std::this_thread::get_id();
  fs::path tmp = mp;
  tmp += ".tmp" + tid.str();
  {
    std::ofstream os(tmp);
    if (!os) throw ValidationError("cannot write " + tmp.string());
    os << json{{"key", info.key}, {"stage", info.name}, {"seconds", info.seconds}, {"meta", info.meta}}.dump(1)
       << "\n";
  }
  fs::rename(tmp, mp);
}

json trace_json(const prompts::ContrastiveTrace& t, const prompts::ContrastiveConfig& cfg, std::size_t pool_total) {
  return {{"epoch_loss", t.epoch_loss},
          {"first_epoch_loss", t.epoch_loss.empty() ? 0.0 : t.epoch_loss.front()},
          {"final_epoch_loss", t.epoch_loss.empty() ? 0.0 : t.epoch_loss.back()},
          {"flagged", t.flagged},
          {"steps", t.steps},
          {"bank_size", t.bank_size},
          {"bank_capacity", cfg.bank_capacity},
          {"bank_sample", cfg.bank_sample},
          {"batch_size", cfg.batch_size},
          {"epochs", cfg.epochs},
          {"pool_total", pool_total},
          {"intra_class", cfg.intra_class},
          {"augmentation", prompts::augmentation_name(cfg.augmentation)},
          {"negatives_per_step", t.negatives_per_step}};
}

double image_diversity(const teacher::TeacherModel& t, const world::Dataset& ds, std::size_t classes) {
  const Tensor emb = t.encode_images(world::stack_pixels(ds));
  std::vector<std::vector<std::span<const double>>> groups(classes);
  for (std::size_t i = 0; i < ds.size(); ++i) groups[ds[i].category].push_back(emb.row_span(i));
  return prompts::mean_pairwise_cosine_distance(groups);
}

}  // namespace

json StageInfo::summary() const {
  return {{"key", key}, {"artifact", artifact.string()}, {"hit", hit}, {"seconds", seconds}};
}

StageRunner::StageRunner(ExperimentConfig config, fs::path cache_dir, bool verbose)
    : config_(std::move(config)), cache_(std::move(cache_dir)), verbose_(verbose) {
  config_.validate();
  world_ = world::default_world(config_.image_side);
  world_.validate();
  categories_ = world_.category_names();
  for (const auto* d : world_.domains_with_role(world::DomainRole::HeldOutEval)) {
    held_ids_.push_back(d->id);
    held_[d->id] = world::build_domain_dataset(*d, world_.categories, config_.evaluation.per_class,
                                               RngStream(config_.evaluation.seed, "eval").child(d->id),
                                               config_.image_side);
  }
  for (const char* sub : {"checkpoints", "prompts", "synth"}) fs::create_directories(cache_ / sub);
}

void StageRunner::log(const std::string& msg) const {
  if (!verbose_) return;
  static std::mutex m;
  std::lock_guard<std::mutex> lk(m);
  std::cerr << "[promptforge] " << msg << "\n";
}

const world::Dataset& StageRunner::held_out(const std::string& domain) const {
  const auto it = held_.find(domain);
  if (it == held_.end()) throw ValidationError("'" + domain + "' is not a held-out domain");
  return it->second;
}

std::string StageRunner::world_key() const {
  return hash_json({{"v", kCacheVersion}, {"stage", "world"}, {"image_side", config_.image_side}});
}

std::string StageRunner::teacher_key() const {
  return hash_json({{"stage", "teacher"}, {"world", world_key()}, {"config", to_json(config_)["teacher"]}});
}

std::string StageRunner::generator_key() const {
  return hash_json({{"stage", "generator"}, {"world", world_key()}, {"config", to_json(config_)["generator"]}});
}

std::string StageRunner::pool_key(const std::string& method, std::uint64_t seed) const {
  const auto& p = config_.prompts;
  // Only the settings a method reads enter its key.
  json params = json::object();
  if (method == "mix") {
    params = {{"dictionary", effective_dictionary(config_, seed)}, {"beta_alpha", p.beta_alpha}};
  } else if (method == "random") {
    params = {{"scale_e", p.scale_e}};
  } else if (method == "contrastive") {
    params = {{"scale_e", p.scale_e}, {"contrastive", to_json(config_)["prompts"]["contrastive"]}};
  }
  const std::size_t size = config_.pool_size ? config_.pool_size : config_.synthesis.per_class;
  return hash_json({{"stage", "prompts"},
                    {"teacher", teacher_key()},
                    {"method", method},
                    {"size", size},
                    {"seed", seed},
                    {"params", params}});
}

std::string StageRunner::synth_key(const std::string& method, std::uint64_t seed) const {
  const auto& s = config_.synthesis;
  return hash_json({{"stage", "synth"},
                    {"prompts", pool_key(method, seed)},
                    {"generator", generator_key()},
                    {"seed", seed},
                    {"plan", {{"per_class", s.per_class}, {"iterations", s.iterations}, {"lr", s.lr}, {"batch_size", s.batch_size}}}});
}

std::string StageRunner::student_key(const std::string& method, std::uint64_t seed) const {
  return hash_json({{"stage", "distill"},
                    {"synth", synth_key(method, seed)},
                    {"teacher", teacher_key()},
                    {"seed", seed},
                    {"schedule", to_json(config_)["distill"]}});
}

std::string StageRunner::baseline_key(std::uint64_t seed) const {
  return hash_json({{"stage", "baseline"},
                    {"world", world_key()},
                    {"seed", seed},
                    {"epochs", config_.fewshot.baseline_epochs},
                    {"per_class", config_.fewshot.baseline_per_class},
                    {"schedule", to_json(config_)["distill"]}});
}

const Staged<teacher::TeacherModel>& StageRunner::teacher() {
  std::lock_guard<std::mutex> lk(mu_);
  if (teacher_) return *teacher_;
  Staged<teacher::TeacherModel> out;
  out.info.name = "teacher";
  out.info.key = teacher_key();
  out.info.artifact = cache_ / "checkpoints" / ("teacher-" + short_key(out.info.key) + ".ckpt");
  if (auto m = read_meta(out.info.artifact, out.info.key)) {
    out.value = teacher::load_teacher(out.info.artifact);
    out.info.hit = true;
    out.info.seconds = m->value("seconds", 0.0);
    out.info.meta = (*m)["meta"];
  } else {
    log("pretraining teacher");
    const auto t0 = std::chrono::steady_clock::now();
    auto pt = teacher::pretrain_teacher(world_, config_.teacher, RngStream(config_.teacher_seed, "teacher"));
    out.info.seconds = seconds_since(t0);
    teacher::save_teacher(out.info.artifact, pt.model, &pt.report);
    const auto& r = pt.report;
    out.info.meta = {{"first_epoch_loss", r.first_epoch_loss}, {"final_epoch_loss", r.final_epoch_loss},
                     {"train_accuracy", r.train_accuracy},     {"heldout_accuracy", r.heldout_accuracy},
                     {"pair_match_rate", r.pair_match_rate},   {"digest", pt.model.digest()}};
    write_meta(out.info.artifact, out.info);
    out.value = std::move(pt.model);
  }
  teacher_ = std::move(out);
  return *teacher_;
}

const Staged<genlab::GeneratorModel>& StageRunner::generator() {
  std::lock_guard<std::mutex> lk(mu_);
  if (generator_) return *generator_;
  Staged<genlab::GeneratorModel> out;
  out.info.name = "generator";
  out.info.key = generator_key();
  out.info.artifact = cache_ / "checkpoints" / ("generator-" + short_key(out.info.key) + ".ckpt");
  if (auto m = read_meta(out.info.artifact, out.info.key)) {
    out.value = genlab::load_generator(out.info.artifact);
    out.info.hit = true;
    out.info.seconds = m->value("seconds", 0.0);
    out.info.meta = (*m)["meta"];
  } else {
    log("pretraining generator");
    const auto t0 = std::chrono::steady_clock::now();
    auto pg = genlab::pretrain_generator(world_, config_.generator, RngStream(config_.generator_seed, "generator"));
    out.info.seconds = seconds_since(t0);
    genlab::save_generator(out.info.artifact, pg.model, &pg.report);
    const auto& r = pg.report;
    out.info.meta = {{"first_epoch_loss", r.first_epoch_loss}, {"final_epoch_loss", r.final_epoch_loss},
                     {"validation_mse", r.validation_mse},     {"digest", pg.model.digest()}};
    write_meta(out.info.artifact, out.info);
    out.value = std::move(pg.model);
  }
  generator_ = std::move(out);
  return *generator_;
}

Staged<prompts::PromptPool> StageRunner::pool(const std::string& method, std::uint64_t seed) {
  Staged<prompts::PromptPool> out;
  out.info.name = "prompts";
  out.info.key = pool_key(method, seed);
  out.info.artifact =
      cache_ / "prompts" / (method + "-s" + std::to_string(seed) + "-" + short_key(out.info.key) + ".json");
  if (auto m = read_meta(out.info.artifact, out.info.key)) {
    out.value = prompts::load_pool(out.info.artifact);
    out.info.hit = true;
    out.info.seconds = m->value("seconds", 0.0);
    out.info.meta = (*m)["meta"];
    return out;
  }
  const auto& t = teacher().value;
  prompts::PoolConfig pc = config_.prompts;
  if (method == "mix") {
    pc.dictionary = effective_dictionary(config_, seed);
    prompts::validate_dictionary(pc.dictionary, t.tokenizer, world_.style_names(world::DomainRole::HeldOutEval));
  }
  const std::size_t size = config_.pool_size ? config_.pool_size : config_.synthesis.per_class;
  log("prompts " + method + " seed " + std::to_string(seed));
  const auto t0 = std::chrono::steady_clock::now();
  out.value = prompts::build_pool(method, categories_, size, pc, t, RngStream(seed, "prompts"));
  out.info.seconds = seconds_since(t0);
  prompts::save_pool(out.info.artifact, out.value, pc);
  out.info.meta = {{"method", method}, {"per_class", out.value.per_class()},
                   {"pool_diversity", prompts::pool_diversity(out.value)}};
  if (method == "mix") out.info.meta["dictionary"] = pc.dictionary;
  if (out.value.trace) out.info.meta["trace"] = trace_json(*out.value.trace, pc.contrastive, size * categories_.size());
  write_meta(out.info.artifact, out.info);
  return out;
}

Staged<genlab::SynthesisResult> StageRunner::synth(const std::string& method, std::uint64_t seed,
                                                   const prompts::PromptPool* built) {
  Staged<genlab::SynthesisResult> out;
  out.info.name = "synth";
  out.info.key = synth_key(method, seed);
  out.info.artifact = cache_ / "synth" / (method + "-s" + std::to_string(seed) + "-" + short_key(out.info.key));
  if (auto m = read_meta(out.info.artifact, out.info.key)) {
    out.value = genlab::load_synthesis(out.info.artifact);
    out.info.hit = true;
    out.info.seconds = m->value("seconds", 0.0);
    out.info.meta = (*m)["meta"];
    return out;
  }
  std::optional<Staged<prompts::PromptPool>> own;
  if (!built) built = &own.emplace(pool(method, seed)).value;
  const auto& t = teacher().value;
  const auto& g = generator().value;
  genlab::SynthesisPlan plan = config_.synthesis;
  plan.workers = 1;  // cells already run in parallel
  log("synth " + method + " seed " + std::to_string(seed));
  const auto t0 = std::chrono::steady_clock::now();
  out.value = genlab::synthesize(built->entries, plan, t, g, RngStream(seed, "synth"));
  out.info.seconds = seconds_since(t0);
  fs::remove_all(out.info.artifact);
  genlab::save_synthesis(out.info.artifact, out.value, categories_);

  const auto ds = genlab::to_dataset(out.value);
  std::vector<std::size_t> counts(categories_.size(), 0);
  std::size_t improved = 0;
  double init = 0.0, fin = 0.0;
  for (const auto& im : out.value.images) {
    ++counts[im.category];
    improved += im.final_loss < im.initial_loss;
    init += im.initial_loss;
    fin += im.final_loss;
  }
  const double n = static_cast<double>(out.value.images.size());
  out.info.meta = {{"n_images", out.value.images.size()},
                   {"per_class", plan.per_class},
                   {"per_class_counts", counts},
                   {"diverged", out.value.diverged},
                   {"diverged_fraction", out.value.diverged_fraction()},
                   {"improved_fraction", improved / n},
                   {"mean_initial_loss", init / n},
                   {"mean_final_loss", fin / n},
                   {"image_diversity", image_diversity(t, ds, categories_.size())},
                   {"teacher_accuracy", teacher::zero_shot_accuracy(t, ds, categories_)}};
  write_meta(out.info.artifact, out.info);
  return out;
}

namespace {

json schedule_json(const distill::DistillSchedule& d) {
  return {{"warmup_epochs", d.warmup_epochs}, {"finetune_epochs", d.finetune_epochs},
          {"lr", d.lr},                       {"finetune_lr", d.finetune_lr()},
          {"momentum", d.momentum},           {"batch_size", d.batch_size},
          {"single_phase", d.single_phase},   {"hidden", d.hidden}};
}

}  // namespace

Staged<distill::StudentModel> StageRunner::student(const std::string& method, std::uint64_t seed,
                                                  const genlab::SynthesisResult* built) {
  Staged<distill::StudentModel> out;
  out.info.name = "distill";
  out.info.key = student_key(method, seed);
  out.info.artifact = cache_ / "checkpoints" /
                      ("student-" + method + "-s" + std::to_string(seed) + "-" + short_key(out.info.key) + ".ckpt");
  if (auto m = read_meta(out.info.artifact, out.info.key)) {
    out.value = distill::load_student(out.info.artifact);
    out.info.hit = true;
    out.info.seconds = m->value("seconds", 0.0);
    out.info.meta = (*m)["meta"];
    return out;
  }
  std::optional<Staged<genlab::SynthesisResult>> own;
  if (!built) built = &own.emplace(synth(method, seed)).value;
  const auto& t = teacher().value;
  const auto& sched = config_.distill;
  log("distill " + method + " seed " + std::to_string(seed));
  const auto t0 = std::chrono::steady_clock::now();
  const Tensor X = world::stack_pixels(genlab::to_dataset(*built));
  const Tensor Y = distill::soft_labels(t, X, categories_, sched.label_temperature);
  auto trained = distill::train_student(X, Y, sched, RngStream(seed, "distill"));
  out.info.seconds = seconds_since(t0);
  distill::save_student(out.info.artifact, trained.model, &trained.report);
  const auto& r = trained.report;
  const std::size_t warm = sched.single_phase ? 0 : sched.warmup_epochs;
  out.info.meta = {{"schedule", schedule_json(sched)},
                   {"epochs_run", r.epoch_loss.size()},
                   {"n_train", X.rows()},
                   {"first_epoch_loss", r.first_epoch_loss()},
                   {"warmup_final_loss", warm && warm <= r.epoch_loss.size() ? r.epoch_loss[warm - 1] : 0.0},
                   {"final_epoch_loss", r.final_epoch_loss()},
                   {"init_trunk_digest", r.init_trunk_digest},
                   {"warmup_trunk_digest", r.warmup_trunk_digest},
                   {"final_trunk_digest", trained.model.trunk_digest()},
                   {"trunk_frozen_in_warmup", r.init_trunk_digest == r.warmup_trunk_digest}};
  write_meta(out.info.artifact, out.info);
  out.value = std::move(trained.model);
  return out;
}

Staged<distill::StudentModel> StageRunner::baseline(std::uint64_t seed) {
  Staged<distill::StudentModel> out;
  out.info.name = "baseline";
  out.info.key = baseline_key(seed);
  out.info.artifact =
      cache_ / "checkpoints" / ("baseline-s" + std::to_string(seed) + "-" + short_key(out.info.key) + ".ckpt");
  if (auto m = read_meta(out.info.artifact, out.info.key)) {
    out.value = distill::load_student(out.info.artifact);
    out.info.hit = true;
    out.info.seconds = m->value("seconds", 0.0);
    out.info.meta = (*m)["meta"];
    return out;
  }
  world::Dataset data;
  const RngStream ds(seed, "baseline-data");
  for (const auto* d : world_.domains_with_role(world::DomainRole::TeacherTrain)) {
    auto part = world::build_domain_dataset(*d, world_.categories, config_.fewshot.baseline_per_class, ds.child(d->id),
                                            config_.image_side);
    data.insert(data.end(), part.begin(), part.end());
  }
  log("domain-trained baseline seed " + std::to_string(seed));
  const auto t0 = std::chrono::steady_clock::now();
  out.value = distill::train_supervised(data, categories_.size(), config_.distill, config_.fewshot.baseline_epochs,
                                        RngStream(seed, "baseline"));
  out.info.seconds = seconds_since(t0);
  distill::save_student(out.info.artifact, out.value);
  out.info.meta = {{"n_train", data.size()}, {"epochs", config_.fewshot.baseline_epochs}};
  write_meta(out.info.artifact, out.info);
  return out;
}

std::vector<ResultRow> StageRunner::evaluate(const distill::StudentModel& s, const std::string& method,
                                             std::uint64_t seed, bool few_shot) const {
  std::vector<ResultRow> rows;
  const std::size_t M = categories_.size();
  for (const auto& d : held_ids_) {
    const auto e = distill::evaluate(s, held_.at(d), d, M);
    rows.push_back({method, d, seed, 0, e.accuracy, e.n_eval});
  }
  if (!few_shot) return rows;
  for (const auto& d : held_ids_) {
    for (const auto k : config_.fewshot.ks) {
      // Same split for every arm of a seed, so arms are paired.
      RngStream split_rng = RngStream(seed, "fewshot").child(d).child(std::to_string(k));
      const auto split = world::few_shot_split(held_.at(d), k, split_rng);
      const auto e = distill::few_shot_finetune(s, split, k, d, config_.fewshot.finetune,
                                                RngStream(seed, "fewshot-train").child(d).child(std::to_string(k)));
      rows.push_back({method, d, seed, k, e.accuracy, e.n_eval});
    }
  }
  return rows;
}

namespace {

json read_record_file(const fs::path& path) {
  if (!fs::exists(path)) return {{"runs", json::array()}};
  std::ifstream is(path);
  json j = json::parse(is, nullptr, false);
  if (j.is_discarded() || !j.contains("runs") || !j["runs"].is_array())
    throw ValidationError("record.json in " + path.parent_path().string() + " is malformed");
  return j;
}

struct Cell {
  std::string method;  // "domain-trained" for the supervised arm
  std::uint64_t seed = 0;
  std::vector<ResultRow> rows;
  json record;
};

}  // namespace

RunRecord run_pipeline(const ExperimentConfig& config, const fs::path& run_dir, const RunOptions& options) {
  config.validate();
  fs::create_directories(run_dir);
  const std::string hash = config_hash(config);
  const fs::path cfg_path = run_dir / "config.json";
  if (fs::exists(cfg_path) && config_hash(load_config(cfg_path)) != hash)
    throw ValidationError("run directory " + run_dir.string() + " already holds a different config");
  save_config(cfg_path, config);

  const auto t_start = std::chrono::steady_clock::now();
  const std::size_t workers = options.workers ? options.workers : genlab::workers_from_env();
  StageRunner runner(config, options.cache_dir.empty() ? run_dir : options.cache_dir, options.verbose);
  const auto& teacher = runner.teacher();
  const auto& generator = runner.generator();

  std::vector<Cell> cells;
  for (const auto& m : config.methods)
    for (const auto s : config.seeds) cells.push_back({m, s, {}, {}});
  if (config.fewshot.enabled)
    for (const auto s : config.seeds) cells.push_back({"domain-trained", s, {}, {}});

  numerics::parallel_for(cells.size(), workers, [&](std::size_t i) {
    Cell& c = cells[i];
    c.record = {{"method", c.method}, {"seed", c.seed}};
    if (c.method == "domain-trained") {
      const auto b = runner.baseline(c.seed);
      c.record["stages"] = {{"baseline", b.info.summary()}};
      c.record["baseline"] = b.info.meta;
      c.rows = runner.evaluate(b.value, c.method, c.seed, true);
    } else {
      const auto p = runner.pool(c.method, c.seed);
      const auto sy = runner.synth(c.method, c.seed, &p.value);
      const auto st = runner.student(c.method, c.seed, &sy.value);
      const json stages = {{"prompts", p.info.summary()}, {"synth", sy.info.summary()}, {"distill", st.info.summary()}};
      const bool fs_method =
          config.fewshot.enabled && std::find(config.fewshot.methods.begin(), config.fewshot.methods.end(),
                                              c.method) != config.fewshot.methods.end();
      c.rows = runner.evaluate(st.value, c.method, c.seed, fs_method);
      c.record["stages"] = stages;
      c.record["prompts"] = p.info.meta;
      c.record["synthesis"] = sy.info.meta;
      c.record["synthesis"]["dir"] = sy.info.artifact.string();
      c.record["distill"] = st.info.meta;
    }
    json ev = json::array();
    for (const auto& r : c.rows)
      ev.push_back({{"domain", r.domain}, {"k", r.k}, {"accuracy", r.accuracy}, {"n_eval", r.n_eval}});
    c.record["eval"] = ev;
  });

  RunRecord out;
  out.run_dir = run_dir;
  json flags = json::array();
  json cell_records = json::array();
  for (auto& c : cells) {
    out.rows.insert(out.rows.end(), c.rows.begin(), c.rows.end());
    const std::string tag = c.method + " seed " + std::to_string(c.seed);
    if (c.record.contains("prompts") && c.record["prompts"].contains("trace") &&
        c.record["prompts"]["trace"].value("flagged", false))
      flags.push_back("contrastive prompt loss did not decrease: " + tag);
    if (c.record.contains("synthesis") && c.record["synthesis"].value("diverged_fraction", 0.0) > 0.05)
      flags.push_back("more than 5% of synthesized images diverged: " + tag);
    cell_records.push_back(std::move(c.record));
  }

  // Results go through this single writer after every cell has finished.
  write_results_csv(run_dir / "results.csv", out.rows);

  out.record = {{"config_hash", hash},
                {"started_utc", ""},
                {"workers", workers},
                {"seconds", seconds_since(t_start)},
                {"stages", {{"teacher", teacher.info.summary()}, {"generator", generator.info.summary()}}},
                {"teacher", teacher.info.meta},
                {"generator", generator.info.meta},
                {"held_out", runner.held_out_domains()},
                {"cells", cell_records},
                {"flags", flags}};
  {
    const std::time_t now = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    out.record["started_utc"] = buf;
  }
  json rec = read_record_file(run_dir / "record.json");
  rec["runs"].push_back(out.record);
  {
    const fs::path tmp = run_dir / "record.json.tmp";
    std::ofstream os(tmp);
    os << rec.dump(1) << "\n";
    os.close();
    fs::rename(tmp, run_dir / "record.json");
  }
  return out;
}

void write_results_csv(const fs::path& path, const std::vector<ResultRow>& rows) {
  std::ofstream os(path);
  if (!os) throw ValidationError("cannot write " + path.string());
  os << "method,domain,seed,k,accuracy,n_eval\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g", r.accuracy);
    os << r.method << "," << r.domain << "," << r.seed << "," << r.k << "," << buf << "," << r.n_eval << "\n";
  }
}

std::vector<ResultRow> read_results_csv(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot read " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != "method,domain,seed,k,accuracy,n_eval")
    throw ValidationError(path.string() + " has an unexpected header");
  std::vector<ResultRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
    if (f.size() != 6) throw ValidationError(path.string() + ": malformed row '" + line + "'");
    try {
      rows.push_back({f[0], f[1], std::stoull(f[2]), std::stoull(f[3]), std::stod(f[4]), std::stoull(f[5])});
    } catch (const std::exception&) {
      throw ValidationError(path.string() + ": malformed row '" + line + "'");
    }
  }
  return rows;
}

}  // namespace promptforge::harness
