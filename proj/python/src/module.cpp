// Python bindings: closed-form building blocks plus the experiment harness.
// Configs and records cross the boundary as JSON text; the package's
// __init__ turns them into dicts.

#include "promptforge/distill.hpp"
#include "promptforge/error.hpp"
#include "promptforge/harness.hpp"
#include "promptforge/prompts.hpp"
#include "promptforge/teacher.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace promptforge;
using numerics::Tensor;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  if (a.ndim() == 1) return Tensor::row(std::vector<double>(a.data(), a.data() + a.size()));
  if (a.ndim() != 2) throw ContractViolation("expected a 1-d or 2-d array");
  const auto r = static_cast<std::size_t>(a.shape(0)), c = static_cast<std::size_t>(a.shape(1));
  return Tensor({r, c}, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

std::vector<double> to_vec(const Array& a) { return {a.data(), a.data() + a.size()}; }

harness::ExperimentConfig parse_config(const std::string& text) {
  return harness::config_from_json(nlohmann::json::parse(text));
}

std::vector<py::dict> rows_out(const std::vector<harness::ResultRow>& rows) {
  std::vector<py::dict> out;
  for (const auto& r : rows) {
    py::dict d;
    d["method"] = r.method;
    d["domain"] = r.domain;
    d["seed"] = r.seed;
    d["k"] = r.k;
    d["accuracy"] = r.accuracy;
    d["n_eval"] = r.n_eval;
    out.push_back(d);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  py::register_exception<ContractViolation>(m, "ContractViolation", PyExc_ValueError);
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<GateFailure>(m, "GateFailure", PyExc_RuntimeError);
  py::register_exception<NumericFault>(m, "NumericFault", PyExc_ArithmeticError);

  m.def("mix_prompt", [](const Array& a, const Array& b, double lam) {
    return to_array(prompts::mix_prompt(to_tensor(a), to_tensor(b), lam));
  });
  m.def("spherical_distance_sq", [](const Array& u, const Array& v) {
    return teacher::spherical_distance_sq(to_vec(u), to_vec(v));
  });
  m.def("cosine_similarity", [](const Array& u, const Array& v) { return teacher::cosine_similarity(to_vec(u), to_vec(v)); });
  m.def("codebook_stats", [](const Array& codebook) {
    const auto s = prompts::estimate_codebook_stats(to_tensor(codebook));
    return py::make_tuple(s.mean, s.stddev);
  });
  m.def("contrastive_prompt_loss", [](const Array& anchor, const Array& positive, const Array& negatives, double tau) {
    const Tensor n = to_tensor(negatives);
    std::vector<std::span<const double>> rows;
    for (std::size_t i = 0; i < n.rows(); ++i) rows.push_back(n.row_span(i));
    return prompts::contrastive_prompt_loss(to_vec(anchor), to_vec(positive), rows, tau);
  });
  m.def("soft_label", [](const Array& embedding, const Array& classes, double scale, double temperature) {
    return distill::build_soft_label(to_vec(embedding), to_tensor(classes), scale, temperature);
  }, py::arg("embedding"), py::arg("classes"), py::arg("scale"), py::arg("temperature") = 1.0);
  m.def("distill_loss", [](const Array& probs, const Array& target) {
    return distill::distill_loss(to_vec(probs), to_vec(target));
  });

  m.def("categories", [] { return world::default_world().category_names(); });
  m.def("domains", [] {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& d : world::default_world().domains) out.emplace_back(d.id, std::string(world::role_name(d.role)));
    return out;
  });
  m.def("render_domain", [](const std::string& domain, std::size_t per_class, std::uint64_t seed) {
    const auto w = world::default_world();
    const auto data = world::build_domain_dataset(w.domain(domain), w.categories, per_class,
                                                  numerics::RngStream(seed, "python").child(domain), w.image_side);
    const Tensor X = world::stack_pixels(data);
    Array px({static_cast<py::ssize_t>(data.size()), static_cast<py::ssize_t>(w.image_side),
              static_cast<py::ssize_t>(w.image_side), py::ssize_t{3}});
    std::copy(X.values().begin(), X.values().end(), px.mutable_data());
    std::vector<std::size_t> labels;
    for (const auto& im : data) labels.push_back(im.category);
    return py::make_tuple(px, labels);
  });

  m.def("default_config_json", [] { return harness::to_json(harness::ExperimentConfig{}).dump(); });
  m.def("normalize_config_json", [](const std::string& text) { return harness::to_json(parse_config(text)).dump(); });
  m.def("config_hash", [](const std::string& text) { return harness::config_hash(parse_config(text)); });
  m.def("ablation_suites", [] {
    std::vector<std::string> ids;
    for (const auto& s : harness::ablation_suites()) ids.push_back(s.id);
    return ids;
  });
  m.def("run_pipeline", [](const std::string& config, const std::string& run_dir, std::size_t workers,
                           const std::string& cache_dir) {
    const auto cfg = parse_config(config);
    harness::RunRecord rec;
    {
      py::gil_scoped_release release;
      rec = harness::run_pipeline(cfg, run_dir, {.cache_dir = cache_dir, .workers = workers});
    }
    return py::make_tuple(rows_out(rec.rows), rec.record.dump());
  }, py::arg("config"), py::arg("run_dir"), py::arg("workers") = 0, py::arg("cache_dir") = "");
  m.def("run_ablation", [](const std::string& suite, const std::string& config, const std::string& out) {
    const auto cfg = parse_config(config);
    harness::AblationResult res;
    {
      py::gil_scoped_release release;
      res = harness::run_ablation(suite, cfg, out);
    }
    std::vector<std::pair<std::string, std::string>> runs;
    for (std::size_t i = 0; i < res.runs.size(); ++i) runs.emplace_back(res.labels[i], res.runs[i].run_dir.string());
    return runs;
  });
  m.def("emit_report", [](const std::string& run_dir) {
    std::vector<std::string> out;
    for (const auto& p : harness::emit_report(run_dir).written) out.push_back(p.string());
    return out;
  });
  m.def("read_results", [](const std::string& path) { return rows_out(harness::read_results_csv(path)); });
}
