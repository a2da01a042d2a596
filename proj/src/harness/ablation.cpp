#include "promptforge/error.hpp"
#include "promptforge/harness.hpp"

#include <algorithm>
#include <fstream>
#include <map>

namespace promptforge::harness {

using nlohmann::json;
namespace fs = std::filesystem;

const std::vector<AblationSuite>& ablation_suites() {
  static const std::vector<AblationSuite> s{
      {"data-scale", "/synthesis/per_class", prompts::pool_methods(), {25, 50, 100, 200, 400}},
      {"dict-size", "/prompts/dictionary_size", {"mix"}, {4, 16, 32}},
      {"scale-e", "/prompts/scale_e", {"random", "contrastive"}, {1.0, 10.0, 100.0}},
      {"augmentation", "/prompts/contrastive/augmentation", {"contrastive"}, {"shuffle", "substitute"}},
      {"intra-vs-instance", "/prompts/contrastive/intra_class", {"contrastive"}, {false, true}},
  };
  return s;
}

const AblationSuite& ablation_suite(const std::string& id) {
  for (const auto& s : ablation_suites())
    if (s.id == id) return s;
  std::string known;
  for (const auto& s : ablation_suites()) known += (known.empty() ? "" : ", ") + s.id;
  throw ValidationError("unknown ablation suite '" + id + "' (known: " + known + ")");
}

std::string axis_label(const AblationSuite& suite, const json& value) {
  if (suite.id == "intra-vs-instance") return value.get<bool>() ? "intra" : "instance";
  if (value.is_string()) return value.get<std::string>();
  if (value.is_number_float()) {
    const double v = value.get<double>();
    if (v == static_cast<double>(static_cast<long long>(v))) return std::to_string(static_cast<long long>(v));
  }
  return value.dump();
}

ExperimentConfig apply_axis(const AblationSuite& suite, const ExperimentConfig& base, const json& value) {
  ExperimentConfig filtered = base;
  filtered.methods.clear();
  for (const auto& m : base.methods)
    if (std::find(suite.methods.begin(), suite.methods.end(), m) != suite.methods.end()) filtered.methods.push_back(m);
  if (filtered.methods.empty()) {
    std::string have;
    for (const auto& m : base.methods) have += (have.empty() ? "" : ", ") + m;
    throw ValidationError("ablation '" + suite.id + "' does not apply to method(s) " + have);
  }
  // Sub-runs measure zero-shot accuracy only.
  filtered.fewshot.enabled = false;
  filtered.fewshot.methods.clear();
  json j = to_json(filtered);
  const json::json_pointer ptr(suite.axis);
  if (!j.contains(ptr)) throw ContractViolation("suite axis " + suite.axis + " is not a config key");
  j[ptr] = value;
  return config_from_json(j);
}

AblationResult run_ablation(const std::string& suite_id, const ExperimentConfig& base, const fs::path& out,
                            const RunOptions& options, const std::vector<json>& values) {
  const auto& suite = ablation_suite(suite_id);
  const auto& sweep = values.empty() ? suite.values : values;
  // Validate every sub-config before any work starts.
  std::vector<ExperimentConfig> configs;
  for (const auto& v : sweep) configs.push_back(apply_axis(suite, base, v));

  AblationResult res;
  res.suite = suite.id;
  RunOptions opts = options;
  if (opts.cache_dir.empty()) opts.cache_dir = out;
  const fs::path dir = out / suite.id;
  for (std::size_t i = 0; i < sweep.size(); ++i) {
    const std::string label = axis_label(suite, sweep[i]);
    res.labels.push_back(label);
    res.runs.push_back(run_pipeline(configs[i], dir / label, opts));
  }

  fs::create_directories(dir);
  std::ofstream raw(dir / "ablation.csv");
  raw << "value,method,domain,seed,accuracy,n_eval\n";
  std::ofstream sum(dir / "summary.csv");
  sum << "value,method,mean,std,n_seeds\n";
  char buf[96];
  for (std::size_t i = 0; i < res.runs.size(); ++i) {
    // Per seed, the mean over held-out domains; then mean/std across seeds.
    std::map<std::string, std::map<std::uint64_t, std::vector<double>>> by;
    std::vector<std::string> order;
    for (const auto& r : res.runs[i].rows) {
      if (r.k != 0) continue;
      std::snprintf(buf, sizeof buf, "%.17g", r.accuracy);
      raw << res.labels[i] << "," << r.method << "," << r.domain << "," << r.seed << "," << buf << "," << r.n_eval
          << "\n";
      if (!by.count(r.method)) order.push_back(r.method);
      by[r.method][r.seed].push_back(r.accuracy);
    }
    for (const auto& m : order) {
      std::vector<double> per_seed;
      for (const auto& [seed, accs] : by[m]) per_seed.push_back(mean_std(accs).first);
      const auto [mu, sd] = mean_std(per_seed);
      std::snprintf(buf, sizeof buf, "%.17g,%.17g", mu, sd);
      sum << res.labels[i] << "," << m << "," << buf << "," << per_seed.size() << "\n";
    }
  }
  return res;
}

}  // namespace promptforge::harness
