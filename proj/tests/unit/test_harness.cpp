#include "promptforge/error.hpp"
#include "promptforge/harness.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <map>
#include <sys/wait.h>

using namespace promptforge;
using namespace promptforge::harness;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Small enough to run end to end in a few seconds.
ExperimentConfig tiny() {
  ExperimentConfig c;
  c.teacher.epochs = 3;
  c.teacher.train_per_class = 10;
  c.teacher.eval_per_class = 4;
  c.teacher.gate_train_accuracy = 0.0;
  c.teacher.gate_heldout_accuracy = 0.0;
  c.generator.epochs = 2;
  c.generator.train_per_class = 10;
  c.generator.val_per_class = 4;
  c.generator.gate_mse = 1.0;
  c.synthesis.per_class = 3;
  c.synthesis.iterations = 5;
  c.prompts.contrastive.epochs = 2;
  c.distill.warmup_epochs = 2;
  c.distill.finetune_epochs = 2;
  c.evaluation.per_class = 6;
  c.fewshot.ks = {1, 2};
  c.fewshot.finetune.epochs = 2;
  c.fewshot.baseline_epochs = 1;
  c.fewshot.baseline_per_class = 4;
  c.seeds = {1, 2};
  return c;
}

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("pf_harness_" + name);
  fs::remove_all(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

TEST(Config, DefaultRoundTripIsLossless) {
  const ExperimentConfig c;
  const json j = to_json(c);
  const auto back = config_from_json(j);
  EXPECT_EQ(to_json(back), j);
  EXPECT_EQ(config_hash(back), config_hash(c));

  const auto path = fs::temp_directory_path() / "pf_cfg_rt.json";
  auto t = tiny();
  t.prompts.contrastive.augmentation = prompts::Augmentation::Substitute;
  t.prompts.scale_e = 0.37;
  save_config(path, t);
  EXPECT_EQ(config_hash(load_config(path)), config_hash(t));
  fs::remove(path);
}

TEST(Config, MissingKeysKeepDefaults) {
  const auto c = config_from_json({{"schema", kSchema}, {"synthesis", {{"per_class", 7}}}});
  EXPECT_EQ(c.synthesis.per_class, 7u);
  EXPECT_EQ(c.synthesis.iterations, ExperimentConfig{}.synthesis.iterations);
  EXPECT_EQ(c.seeds.size(), 5u);
}

TEST(Config, RejectsTyposWrongTypesAndBadValues) {
  const json ok = {{"schema", kSchema}};
  EXPECT_NO_THROW(config_from_json(ok));
  EXPECT_THROW(config_from_json(json{{"schema", "promptforge-config/0"}}), ValidationError);
  EXPECT_THROW(config_from_json(json::object()), ValidationError);
  EXPECT_THROW(config_from_json({{"schema", kSchema}, {"seedz", {1}}}), ValidationError);
  EXPECT_THROW(config_from_json({{"schema", kSchema}, {"prompts", {{"contrastive", {{"tua", 0.1}}}}}}), ValidationError);
  EXPECT_THROW(config_from_json({{"schema", kSchema}, {"synthesis", {{"per_class", -3}}}}), ValidationError);
  EXPECT_THROW(config_from_json({{"schema", kSchema}, {"synthesis", {{"per_class", "many"}}}}), ValidationError);
  EXPECT_THROW(config_from_json({{"schema", kSchema}, {"methods", {"fancy"}}}), ValidationError);
  EXPECT_THROW(config_from_json({{"schema", kSchema}, {"seeds", {1, -2}}}), ValidationError);
  EXPECT_THROW(config_from_json({{"schema", kSchema}, {"distill", {{"hidden", 64}}}}), ValidationError);
  EXPECT_THROW(config_from_json({{"schema", kSchema}, {"seeds", {1, 1}}}), ValidationError);
  EXPECT_THROW(config_from_json({{"schema", kSchema}, {"fewshot", {{"ks", {3}}}}}), ValidationError);
  EXPECT_THROW(config_from_json({{"schema", kSchema}, {"prompts", {{"contrastive", {{"augmentation", "reverse"}}}}}}),
               ValidationError);
  EXPECT_THROW(load_config("/nonexistent/pf.json"), ValidationError);
}

TEST(Config, EffectiveDictionary) {
  ExperimentConfig c;
  EXPECT_EQ(effective_dictionary(c, 1), c.prompts.dictionary);
  c.dictionary_size = 32;
  EXPECT_EQ(effective_dictionary(c, 1), c.prompts.dictionary);
  c.dictionary_size = 4;
  const auto a = effective_dictionary(c, 1);
  ASSERT_EQ(a.size(), 4u);
  EXPECT_EQ(a, effective_dictionary(c, 1));
  for (const auto& w : a)
    EXPECT_NE(std::find(c.prompts.dictionary.begin(), c.prompts.dictionary.end(), w), c.prompts.dictionary.end());
  bool differs = false;
  for (std::uint64_t s = 2; s < 6; ++s) differs |= effective_dictionary(c, s) != a;
  EXPECT_TRUE(differs);
}

TEST(Results, CsvRoundTripIsExact) {
  std::vector<ResultRow> rows{{"mix", "carnival", 3, 0, 0.1 + 0.2, 700}, {"contrastive", "sketchbook", 5, 16, 1.0 / 3.0, 588}};
  const auto p = fs::temp_directory_path() / "pf_results_rt.csv";
  write_results_csv(p, rows);
  const auto back = read_results_csv(p);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].method, rows[i].method);
    EXPECT_EQ(back[i].domain, rows[i].domain);
    EXPECT_EQ(back[i].seed, rows[i].seed);
    EXPECT_EQ(back[i].k, rows[i].k);
    EXPECT_EQ(back[i].accuracy, rows[i].accuracy);
    EXPECT_EQ(back[i].n_eval, rows[i].n_eval);
  }
  fs::remove(p);
}

TEST(Report, MeanStdClosedForms) {
  EXPECT_EQ(mean_std({0.5}), std::make_pair(0.5, 0.0));
  const auto [m, s] = mean_std({1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(m, 2.5);
  EXPECT_NEAR(s, std::sqrt(5.0 / 3.0), 1e-15);
  EXPECT_THROW(mean_std({}), ContractViolation);
}

TEST(StageKeys, ChangingMethodLeavesUpstreamKeysAlone) {
  const auto c = tiny();
  StageRunner r(c, fresh_dir("keys"));
  EXPECT_NE(r.pool_key("mix", 1), r.pool_key("random", 1));
  EXPECT_NE(r.synth_key("mix", 1), r.synth_key("random", 1));
  EXPECT_NE(r.student_key("mix", 1), r.student_key("random", 1));
  EXPECT_NE(r.pool_key("mix", 1), r.pool_key("mix", 2));

  auto d = c;
  d.methods = {"random"};
  d.fewshot.enabled = false;
  StageRunner r2(d, fresh_dir("keys2"));
  EXPECT_EQ(r2.world_key(), r.world_key());
  EXPECT_EQ(r2.teacher_key(), r.teacher_key());
  EXPECT_EQ(r2.generator_key(), r.generator_key());
  EXPECT_EQ(r2.student_key("random", 1), r.student_key("random", 1));

  // Method-specific settings reach only the methods that read them.
  auto e = c;
  e.prompts.scale_e = 1.0;
  StageRunner r3(e, fresh_dir("keys3"));
  EXPECT_EQ(r3.pool_key("vanilla", 1), r.pool_key("vanilla", 1));
  EXPECT_EQ(r3.pool_key("mix", 1), r.pool_key("mix", 1));
  EXPECT_NE(r3.pool_key("random", 1), r.pool_key("random", 1));
  EXPECT_NE(r3.pool_key("contrastive", 1), r.pool_key("contrastive", 1));

  auto f = c;
  f.dictionary_size = 4;
  StageRunner r4(f, fresh_dir("keys4"));
  EXPECT_NE(r4.pool_key("mix", 1), r.pool_key("mix", 1));
  EXPECT_EQ(r4.pool_key("random", 1), r.pool_key("random", 1));
  f.dictionary_size = 32;  // the whole dictionary
  StageRunner r5(f, fresh_dir("keys5"));
  EXPECT_EQ(r5.pool_key("mix", 1), r.pool_key("mix", 1));

  auto g = c;
  g.distill.lr = 0.05;
  StageRunner r6(g, fresh_dir("keys6"));
  EXPECT_EQ(r6.synth_key("mix", 1), r.synth_key("mix", 1));
  EXPECT_NE(r6.student_key("mix", 1), r.student_key("mix", 1));
}

TEST(Pipeline, RerunHitsEveryStageAndReproducesResults) {
  const auto dir = fresh_dir("rerun");
  const auto c = tiny();
  const auto a = run_pipeline(c, dir);
  const std::string first = slurp(dir / "results.csv");
  EXPECT_FALSE(a.record["stages"]["teacher"]["hit"].get<bool>());
  // 4 methods x 2 seeds x 2 domains, few-shot 2 seeds x 2 domains x 2 k, and the supervised arm.
  EXPECT_EQ(a.rows.size(), 16u + 8u + (4u + 8u));

  const auto b = run_pipeline(c, dir, {.workers = 3});
  EXPECT_EQ(slurp(dir / "results.csv"), first);
  EXPECT_TRUE(b.record["stages"]["teacher"]["hit"].get<bool>());
  EXPECT_TRUE(b.record["stages"]["generator"]["hit"].get<bool>());
  for (const auto& cell : b.record["cells"])
    for (const auto& [name, st] : cell["stages"].items()) EXPECT_TRUE(st["hit"].get<bool>()) << name;

  std::ifstream is(dir / "record.json");
  const json rec = json::parse(is);
  ASSERT_EQ(rec["runs"].size(), 2u);  // appended, never rewritten
  EXPECT_EQ(rec["runs"][0]["config_hash"], config_hash(load_config(dir / "config.json")));

  auto other = c;
  other.seeds = {1};
  EXPECT_THROW(run_pipeline(other, dir), ValidationError);
}

TEST(Pipeline, MethodChangeReusesWorldTeacherGenerator) {
  const auto cache = fresh_dir("scope_cache");
  auto c = tiny();
  c.methods = {"vanilla"};
  c.fewshot.enabled = false;
  c.seeds = {1};
  run_pipeline(c, fresh_dir("scope_a"), {.cache_dir = cache});
  c.methods = {"random"};
  const auto b = run_pipeline(c, fresh_dir("scope_b"), {.cache_dir = cache});
  EXPECT_TRUE(b.record["stages"]["teacher"]["hit"].get<bool>());
  EXPECT_TRUE(b.record["stages"]["generator"]["hit"].get<bool>());
  for (const auto& [name, st] : b.record["cells"][0]["stages"].items()) EXPECT_FALSE(st["hit"].get<bool>()) << name;
}

TEST(Pipeline, GateFailureNamesTheGate) {
  auto c = tiny();
  c.teacher.gate_train_accuracy = 1.01;
  try {
    run_pipeline(c, fresh_dir("gate"));
    FAIL() << "expected a gate failure";
  } catch (const GateFailure& e) {
    EXPECT_FALSE(e.gate().empty());
  }
}

TEST(Report, TablesMatchRawRows) {
  const auto dir = fresh_dir("report");
  const auto c = tiny();
  const auto rec = run_pipeline(c, dir);
  const auto files = emit_report(dir);
  EXPECT_FALSE(files.written.empty());

  std::ifstream zs(dir / "report" / "zero_shot.json");
  const json z = json::parse(zs);
  const std::size_t domains = 2;
  EXPECT_EQ(z["rows"].size(), (c.methods.size() + 1) * domains);
  for (const auto& row : z["rows"]) {
    std::vector<double> raw;
    for (const auto& r : rec.rows)
      if (r.k == 0 && r.method == row["method"] && r.domain == row["domain"]) raw.push_back(r.accuracy);
    const auto [m, s] = mean_std(raw);
    EXPECT_NEAR(row["mean"].get<double>(), m, 1e-12);
    EXPECT_NEAR(row["std"].get<double>(), s, 1e-12);
  }

  std::ifstream fs_in(dir / "report" / "fewshot.json");
  const json f = json::parse(fs_in);
  std::map<std::string, std::vector<std::size_t>> ks;
  for (const auto& row : f["rows"])
    if (row["domain"] == "all") ks[row["method"]].push_back(row["k"]);
  EXPECT_EQ(ks["contrastive"], c.fewshot.ks);
  EXPECT_EQ(ks["domain-trained"], c.fewshot.ks);
  EXPECT_TRUE(fs::exists(dir / "report" / "grids" / "mix.ppm"));
  EXPECT_TRUE(fs::exists(dir / "report" / "diversity.csv"));

  const auto empty = fresh_dir("report_empty");
  fs::create_directories(empty);
  write_results_csv(empty / "results.csv", {});
  EXPECT_THROW(emit_report(empty), ValidationError);
  EXPECT_THROW(emit_report(fresh_dir("report_missing")), ValidationError);
}

TEST(Ablation, SuitesSweepExactlyOneAxis) {
  ASSERT_EQ(ablation_suites().size(), 5u);
  const ExperimentConfig base;
  for (const auto& s : ablation_suites()) {
    for (const auto& v : s.values) {
      const auto c = apply_axis(s, base, v);
      json a = to_json(base), b = to_json(c);
      EXPECT_EQ(b[json::json_pointer(s.axis)], v) << s.id;
      // Beyond the axis only the method filter and the few-shot switch move.
      for (json* j : {&a, &b}) {
        (*j)[json::json_pointer(s.axis)] = nullptr;
        j->erase("methods");
        j->erase("fewshot");
      }
      EXPECT_EQ(a, b) << s.id;
      for (const auto& m : c.methods)
        EXPECT_NE(std::find(s.methods.begin(), s.methods.end(), m), s.methods.end());
    }
  }
  EXPECT_EQ(ablation_suite("data-scale").values.size(), 5u);
  EXPECT_THROW(ablation_suite("learning-rate"), ValidationError);
}

TEST(Ablation, AxisMethodMismatchIsAnError) {
  ExperimentConfig c;
  c.methods = {"random"};
  c.fewshot.methods.clear();
  EXPECT_THROW(apply_axis(ablation_suite("dict-size"), c, 4), ValidationError);
  EXPECT_THROW(run_ablation("dict-size", c, fresh_dir("mismatch")), ValidationError);
  EXPECT_NO_THROW(apply_axis(ablation_suite("scale-e"), c, 1.0));
}

TEST(Ablation, SubRunsShareTheCache) {
  const auto out = fresh_dir("ablate");
  auto c = tiny();
  c.seeds = {1};
  const auto res = run_ablation("scale-e", c, out, {}, {1.0, 10.0});
  ASSERT_EQ(res.runs.size(), 2u);
  EXPECT_EQ(res.labels, (std::vector<std::string>{"1", "10"}));
  EXPECT_TRUE(res.runs[1].record["stages"]["teacher"]["hit"].get<bool>());
  EXPECT_TRUE(fs::exists(out / "scale-e" / "summary.csv"));
  EXPECT_TRUE(fs::exists(out / "scale-e" / "1" / "results.csv"));
  for (const auto& r : res.runs[0].rows) EXPECT_TRUE(r.method == "random" || r.method == "contrastive");
}

#ifdef PF_CLI_PATH
int cli(const std::string& args) {
  const int status = std::system((std::string(PF_CLI_PATH) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(cli("--help"), 0);
  EXPECT_EQ(cli(""), 2);
  EXPECT_EQ(cli("frobnicate"), 2);
  EXPECT_EQ(cli("run --config /nonexistent/config.json"), 2);
  EXPECT_EQ(cli("run --bogus-flag"), 2);
  EXPECT_EQ(cli("ablate"), 2);

  const auto dir = fresh_dir("cli");
  fs::create_directories(dir);
  std::ofstream(dir / "typo.json") << R"({"schema": "promptforge-config/1", "sedes": [1]})";
  EXPECT_EQ(cli("run --config " + (dir / "typo.json").string() + " --out " + (dir / "run").string()), 1);
  std::ofstream(dir / "random.json") << R"({"schema": "promptforge-config/1", "methods": ["random"],
                                            "fewshot": {"methods": []}})";
  EXPECT_EQ(cli("ablate --suite dict-size --config " + (dir / "random.json").string() + " --out " +
                (dir / "abl").string()),
            1);
  EXPECT_EQ(cli("report --out " + (dir / "nothing").string()), 1);

  save_config(dir / "tiny.json", tiny());
  EXPECT_EQ(cli("run --seed 1 --config " + (dir / "tiny.json").string() + " --out " + (dir / "tiny").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "tiny" / "results.csv"));
  EXPECT_TRUE(fs::exists(dir / "tiny" / "report" / "zero_shot.csv"));
  EXPECT_EQ(load_config(dir / "tiny" / "config.json").seeds, std::vector<std::uint64_t>{1});
}
#endif

}  // namespace
