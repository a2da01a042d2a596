#pragma once

// Experiment orchestration: strict JSON configs, hash-keyed stage caching,
// the end-to-end pipeline, ablation suites and report emission.

#include "promptforge/distill.hpp"
#include "promptforge/genlab.hpp"
#include "promptforge/prompts.hpp"
#include "promptforge/teacher.hpp"

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace promptforge::harness {

inline constexpr const char* kSchema = "promptforge-config/1";

struct EvalConfig {
  std::size_t per_class = 100;  // per held-out domain
  std::uint64_t seed = 7;       // held-out sets are shared by every cell
};

struct FewShotSettings {
  bool enabled = true;
  std::vector<std::string> methods{"contrastive"};
  std::vector<std::size_t> ks{1, 2, 4, 8, 16};
  distill::FewShotConfig finetune;
  std::size_t baseline_epochs = 30;      // domain-trained comparison arm
  std::size_t baseline_per_class = 100;  // per teacher-train domain
};

struct ExperimentConfig {
  std::size_t image_side = world::kDefaultImageSide;
  teacher::TeacherConfig teacher;
  std::uint64_t teacher_seed = 1;
  genlab::GeneratorConfig generator;
  std::uint64_t generator_seed = 1;
  prompts::PoolConfig prompts;
  std::size_t pool_size = 0;        // 0: one prompt per synthesized image
  std::size_t dictionary_size = 0;  // 0: whole dictionary; else a per-seed random subset
  genlab::SynthesisPlan synthesis;
  distill::DistillSchedule distill;
  EvalConfig evaluation;
  FewShotSettings fewshot;
  std::vector<std::string> methods = prompts::pool_methods();
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};

  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& c);
// Missing keys keep their defaults; unknown keys and a wrong schema throw ValidationError.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const ExperimentConfig& c);
std::string config_hash(const ExperimentConfig& c);

// Dictionary actually used by mix prompts for one seed.
std::vector<std::string> effective_dictionary(const ExperimentConfig& c, std::uint64_t seed);

struct ResultRow {
  std::string method;
  std::string domain;
  std::uint64_t seed = 0;
  std::size_t k = 0;
  double accuracy = 0.0;
  std::size_t n_eval = 0;
};

void write_results_csv(const std::filesystem::path& path, const std::vector<ResultRow>& rows);
std::vector<ResultRow> read_results_csv(const std::filesystem::path& path);

struct StageInfo {
  std::string name;
  std::string key;  // sha-256 over the stage's config subtree and upstream keys
  std::filesystem::path artifact;
  bool hit = false;
  double seconds = 0.0;  // build time, also reported on a hit
  nlohmann::json meta;   // stage metrics persisted next to the artifact

  nlohmann::json summary() const;
};

template <class T>
struct Staged {
  T value;
  StageInfo info;
};

// Builds or loads each stage of one config. Artifacts live under cache_dir
// and are trusted only when their metadata file carries the expected key.
// Safe to call from several threads once teacher() and generator() have run.
class StageRunner {
 public:
  StageRunner(ExperimentConfig config, std::filesystem::path cache_dir, bool verbose = false);

  const ExperimentConfig& config() const { return config_; }
  const world::WorldSpec& world() const { return world_; }
  const std::vector<std::string>& categories() const { return categories_; }
  const std::filesystem::path& cache_dir() const { return cache_; }

  const Staged<teacher::TeacherModel>& teacher();
  const Staged<genlab::GeneratorModel>& generator();
  Staged<prompts::PromptPool> pool(const std::string& method, std::uint64_t seed);
  // `built` skips loading an upstream artifact the caller already holds.
  Staged<genlab::SynthesisResult> synth(const std::string& method, std::uint64_t seed,
                                        const prompts::PromptPool* built = nullptr);
  Staged<distill::StudentModel> student(const std::string& method, std::uint64_t seed,
                                        const genlab::SynthesisResult* built = nullptr);
  // Supervised student on labelled teacher-train domains.
  Staged<distill::StudentModel> baseline(std::uint64_t seed);

  std::string world_key() const;
  std::string teacher_key() const;
  std::string generator_key() const;
  std::string pool_key(const std::string& method, std::uint64_t seed) const;
  std::string synth_key(const std::string& method, std::uint64_t seed) const;
  std::string student_key(const std::string& method, std::uint64_t seed) const;
  std::string baseline_key(std::uint64_t seed) const;

  const std::vector<std::string>& held_out_domains() const { return held_ids_; }
  const world::Dataset& held_out(const std::string& domain) const;

  // Zero-shot rows per held-out domain, then few-shot rows when asked.
  std::vector<ResultRow> evaluate(const distill::StudentModel& s, const std::string& method, std::uint64_t seed,
                                  bool few_shot) const;

 private:
  void log(const std::string& msg) const;

  ExperimentConfig config_;
  std::filesystem::path cache_;
  bool verbose_;
  world::WorldSpec world_;
  std::vector<std::string> categories_;
  std::vector<std::string> held_ids_;
  std::map<std::string, world::Dataset> held_;
  std::mutex mu_;
  std::optional<Staged<teacher::TeacherModel>> teacher_;
  std::optional<Staged<genlab::GeneratorModel>> generator_;
};

struct RunOptions {
  std::filesystem::path cache_dir;  // empty: the run directory itself
  std::size_t workers = 0;          // 0: PROMPTFORGE_WORKERS
  bool verbose = false;
};

struct RunRecord {
  std::filesystem::path run_dir;
  std::vector<ResultRow> rows;
  nlohmann::json record;  // the entry appended to record.json
};

// world -> teacher -> generator -> prompts -> synth -> distill -> eval for
// every (method, seed) cell, plus the domain-trained few-shot arm.
RunRecord run_pipeline(const ExperimentConfig& config, const std::filesystem::path& run_dir,
                       const RunOptions& options = {});

struct AblationSuite {
  std::string id;
  std::string axis;  // JSON pointer into the serialized config
  std::vector<std::string> methods;  // methods the axis applies to
  std::vector<nlohmann::json> values;
};

const std::vector<AblationSuite>& ablation_suites();
const AblationSuite& ablation_suite(const std::string& id);
// Base config with the suite's axis set to `value`; throws on axis/method mismatch.
ExperimentConfig apply_axis(const AblationSuite& suite, const ExperimentConfig& base, const nlohmann::json& value);

struct AblationResult {
  std::string suite;
  std::vector<std::string> labels;
  std::vector<RunRecord> runs;
};

std::string axis_label(const AblationSuite& suite, const nlohmann::json& value);

// One pipeline per swept value, sharing the stage cache under `out`.
AblationResult run_ablation(const std::string& suite, const ExperimentConfig& base, const std::filesystem::path& out,
                            const RunOptions& options = {}, const std::vector<nlohmann::json>& values = {});

struct ReportFiles {
  std::vector<std::filesystem::path> written;
};

// Reads results.csv and record.json of a run directory and writes report/.
ReportFiles emit_report(const std::filesystem::path& run_dir);

// Sample mean and standard deviation (n - 1), 0 std for a single value.
std::pair<double, double> mean_std(const std::vector<double>& v);

}  // namespace promptforge::harness
