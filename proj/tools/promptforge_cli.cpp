// promptforge command line: every pipeline stage plus run / ablate / report.
// Exit codes: 0 ok, 1 gate or validation failure, 2 usage error.

#include "promptforge/error.hpp"
#include "promptforge/harness.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace promptforge;
using nlohmann::json;

namespace {

struct Globals {
  std::string config_path;
  std::string out = "runs/default";
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::size_t workers = 0;
  bool verbose = false;
};

harness::ExperimentConfig load(const Globals& g) {
  harness::ExperimentConfig c = g.config_path.empty() ? harness::ExperimentConfig{} : harness::load_config(g.config_path);
  if (g.seed_set) c.seeds = {g.seed};
  c.validate();
  return c;
}

harness::RunOptions options(const Globals& g) {
  harness::RunOptions o;
  o.workers = g.workers;
  o.verbose = g.verbose;
  return o;
}

void print_stage(const harness::StageInfo& info) {
  std::cout << json{{"stage", info.name}, {"hit", info.hit}, {"artifact", info.artifact.string()},
                    {"seconds", info.seconds}, {"meta", info.meta}}
                   .dump(2)
            << "\n";
}

void print_rows(const std::vector<harness::ResultRow>& rows) {
  std::cout << "method,domain,seed,k,accuracy,n_eval\n";
  for (const auto& r : rows)
    std::printf("%s,%s,%llu,%zu,%.17g,%zu\n", r.method.c_str(), r.domain.c_str(),
                static_cast<unsigned long long>(r.seed), r.k, r.accuracy, r.n_eval);
  std::fflush(stdout);
}

int run_cli(int argc, char** argv) {
  CLI::App app{"promptforge: data-free distillation from a toy vision-language teacher"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand
  Globals g;
  app.add_option("--config", g.config_path, "experiment config (JSON)")->check(CLI::ExistingFile);
  app.add_option("--out", g.out, "run or artifact directory");
  auto* seed_opt = app.add_option("--seed", g.seed, "restrict to a single seed");
  app.add_option("--workers", g.workers, "parallel cells (default PROMPTFORGE_WORKERS)");
  app.add_flag("-v,--verbose", g.verbose, "log stage progress to stderr");

  std::function<int()> action;

  auto* world_cmd = app.add_subcommand("world", "procedural world");
  world_cmd->require_subcommand(1);
  std::size_t world_per_class = 20;
  auto* world_build = world_cmd->add_subcommand("build", "render every domain to <out>/world");
  world_build->add_option("--per-class", world_per_class, "images per category per domain");
  world_build->callback([&] {
    action = [&] {
      const auto c = load(g);
      const auto w = world::default_world(c.image_side);
      w.validate();
      const fs::path dir = fs::path(g.out) / "world";
      json summary = {{"image_side", w.image_side}, {"categories", w.category_names()}, {"domains", json::array()}};
      const std::uint64_t seed = g.seed_set ? g.seed : c.evaluation.seed;
      for (const auto& d : w.domains) {
        const auto data = world::build_domain_dataset(d, w.categories, world_per_class,
                                                      numerics::RngStream(seed, "world").child(d.id), w.image_side);
        world::save_dataset(dir / d.id, data, w.category_names());
        json styles = json::array();
        for (const auto& s : d.styles) styles.push_back(s.name);
        summary["domains"].push_back({{"id", d.id}, {"role", world::role_name(d.role)}, {"styles", styles},
                                      {"images", data.size()}});
      }
      std::ofstream(dir / "world.json") << summary.dump(2) << "\n";
      std::cout << summary.dump(2) << "\n";
      return 0;
    };
  });

  auto* teacher_cmd = app.add_subcommand("teacher", "vision-language teacher");
  teacher_cmd->require_subcommand(1);
  teacher_cmd->add_subcommand("pretrain", "pretrain (or load) the teacher")->callback([&] {
    action = [&] {
      harness::StageRunner r(load(g), g.out, g.verbose);
      print_stage(r.teacher().info);
      return 0;
    };
  });
  std::string teacher_ckpt;
  std::size_t teacher_eval_per_class = 30;
  auto* teacher_eval = teacher_cmd->add_subcommand("eval", "zero-shot accuracy of a teacher checkpoint");
  teacher_eval->add_option("--checkpoint", teacher_ckpt, "teacher checkpoint (default: the cached one)")
      ->check(CLI::ExistingFile);
  teacher_eval->add_option("--per-class", teacher_eval_per_class, "images per category per domain");
  teacher_eval->callback([&] {
    action = [&] {
      const auto c = load(g);
      teacher::TeacherModel model;
      if (teacher_ckpt.empty()) {
        harness::StageRunner r(c, g.out, g.verbose);
        model = r.teacher().value;
      } else {
        model = teacher::load_teacher(teacher_ckpt);
      }
      const auto rep = teacher::evaluate_teacher(model, world::default_world(c.image_side), teacher_eval_per_class,
                                                 numerics::RngStream(g.seed_set ? g.seed : 0, "teacher-eval"));
      std::cout << json{{"train_accuracy", rep.train_accuracy},
                        {"heldout_accuracy", rep.heldout_accuracy},
                        {"pair_match_rate", rep.pair_match_rate}}
                       .dump(2)
                << "\n";
      return 0;
    };
  });

  auto* gen_cmd = app.add_subcommand("gen", "latent image generator");
  gen_cmd->require_subcommand(1);
  gen_cmd->add_subcommand("pretrain", "pretrain (or load) the generator")->callback([&] {
    action = [&] {
      harness::StageRunner r(load(g), g.out, g.verbose);
      print_stage(r.generator().info);
      return 0;
    };
  });

  // prompts / synth / distill / eval act on one method across the config's seeds.
  std::string method;
  auto per_method = [&](CLI::App* cmd, std::function<void(harness::StageRunner&, std::uint64_t)> fn) {
    cmd->add_option("--method", method, "vanilla, mix, random or contrastive")->required();
    cmd->callback([&, fn] {
      action = [&, fn] {
        harness::StageRunner r(load(g), g.out, g.verbose);
        for (const auto s : r.config().seeds) fn(r, s);
        return 0;
      };
    });
  };
  auto* prompts_cmd = app.add_subcommand("prompts", "prompt pools");
  prompts_cmd->require_subcommand(1);
  per_method(prompts_cmd->add_subcommand("build", "build a prompt pool per seed"),
             [&](harness::StageRunner& r, std::uint64_t s) { print_stage(r.pool(method, s).info); });
  per_method(app.add_subcommand("synth", "synthesize images per seed"),
             [&](harness::StageRunner& r, std::uint64_t s) { print_stage(r.synth(method, s).info); });
  per_method(app.add_subcommand("distill", "distill a student per seed"),
             [&](harness::StageRunner& r, std::uint64_t s) { print_stage(r.student(method, s).info); });
  bool eval_few_shot = false;
  auto* eval_cmd = app.add_subcommand("eval", "held-out accuracy of the distilled students");
  eval_cmd->add_flag("--few-shot", eval_few_shot, "also fine-tune on k labelled images per class");
  per_method(eval_cmd, [&](harness::StageRunner& r, std::uint64_t s) {
    print_rows(r.evaluate(r.student(method, s).value, method, s, eval_few_shot));
  });

  app.add_subcommand("config", "print the effective config as JSON")->callback([&] {
    action = [&] {
      std::cout << harness::to_json(load(g)).dump(2) << "\n";
      return 0;
    };
  });

  auto* run_cmd = app.add_subcommand("run", "end-to-end pipeline plus report");
  run_cmd->callback([&] {
    action = [&] {
      const auto rec = harness::run_pipeline(load(g), g.out, options(g));
      harness::emit_report(rec.run_dir);
      std::cout << "run directory: " << rec.run_dir.string() << " (" << rec.rows.size() << " result rows)\n";
      for (const auto& f : rec.record["flags"]) std::cout << "flag: " << f.get<std::string>() << "\n";
      return 0;
    };
  });

  std::string suite;
  auto* ablate_cmd = app.add_subcommand("ablate", "sweep one ablation axis");
  std::string suites_help = "one of:";
  for (const auto& s : harness::ablation_suites()) suites_help += " " + s.id;
  ablate_cmd->add_option("--suite", suite, suites_help)->required();
  ablate_cmd->callback([&] {
    action = [&] {
      const auto res = harness::run_ablation(suite, load(g), g.out, options(g));
      for (std::size_t i = 0; i < res.labels.size(); ++i)
        std::cout << res.suite << " " << res.labels[i] << ": " << res.runs[i].run_dir.string() << "\n";
      std::cout << "summary: " << (fs::path(g.out) / res.suite / "summary.csv").string() << "\n";
      return 0;
    };
  });

  app.add_subcommand("report", "write report/ for a finished run")->callback([&] {
    action = [&] {
      for (const auto& f : harness::emit_report(g.out).written) std::cout << f.string() << "\n";
      return 0;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 2;
  }
  g.seed_set = seed_opt->count() > 0;
  try {
    return action ? action() : 2;
  } catch (const GateFailure& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) { return run_cli(argc, argv); }
