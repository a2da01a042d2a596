#include "promptforge/error.hpp"
#include "promptforge/harness.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <set>

namespace promptforge::harness {

using nlohmann::json;
namespace fs = std::filesystem;

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) throw ContractViolation("mean_std of an empty sample");
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  if (v.size() == 1) return {m, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Keeps first-seen order, which follows the run's config.
template <class T>
void note(std::vector<T>& order, const T& v) {
  if (std::find(order.begin(), order.end(), v) == order.end()) order.push_back(v);
}

struct Stat {
  double mean = 0.0, std = 0.0;
  std::vector<std::uint64_t> seeds;
  std::vector<double> values;
};

Stat stat_of(const std::map<std::uint64_t, double>& by_seed) {
  Stat s;
  for (const auto& [seed, v] : by_seed) {
    s.seeds.push_back(seed);
    s.values.push_back(v);
  }
  std::tie(s.mean, s.std) = mean_std(s.values);
  return s;
}

json stat_json(const Stat& s) { return {{"mean", s.mean}, {"std", s.std}, {"seeds", s.seeds}, {"values", s.values}}; }

void write_ppm_grid(const fs::path& path, const genlab::SynthesisResult& r, std::size_t classes, std::size_t per_row) {
  if (r.images.empty()) return;
  const std::size_t side = static_cast<std::size_t>(std::lround(std::sqrt(r.images.front().pixels.size() / 3.0)));
  constexpr std::size_t kScale = 3, kGap = 2;
  const std::size_t cell = side * kScale + kGap;
  const std::size_t W = per_row * cell + kGap, H = classes * cell + kGap;
  std::vector<unsigned char> img(W * H * 3, 255);
  std::vector<std::size_t> used(classes, 0);
  for (const auto& im : r.images) {
    const std::size_t c = im.category;
    if (c >= classes || used[c] >= per_row) continue;
    const std::size_t ox = kGap + used[c]++ * cell, oy = kGap + c * cell;
    for (std::size_t y = 0; y < side * kScale; ++y)
      for (std::size_t x = 0; x < side * kScale; ++x)
        for (std::size_t ch = 0; ch < 3; ++ch) {
          const double v = im.pixels[((y / kScale) * side + x / kScale) * 3 + ch];
          img[((oy + y) * W + ox + x) * 3 + ch] = static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255));
        }
  }
  std::ofstream os(path, std::ios::binary);
  os << "P6\n" << W << " " << H << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.data()), static_cast<std::streamsize>(img.size()));
}

}  // namespace

ReportFiles emit_report(const fs::path& run_dir) {
  const fs::path csv = run_dir / "results.csv";
  if (!fs::exists(csv)) throw ValidationError("no results.csv in " + run_dir.string());
  const auto rows = read_results_csv(csv);
  if (rows.empty()) throw ValidationError("results.csv in " + run_dir.string() + " is empty");

  json record;
  if (fs::exists(run_dir / "record.json")) {
    std::ifstream is(run_dir / "record.json");
    record = json::parse(is, nullptr, false);
  }
  const json* last = nullptr;
  if (record.is_object() && record.contains("runs") && !record["runs"].empty()) last = &record["runs"].back();

  const fs::path out = run_dir / "report";
  fs::create_directories(out);
  ReportFiles files;

  // Zero-shot table: methods x domains, plus the per-seed domain average.
  std::vector<std::string> methods, domains;
  std::map<std::string, std::map<std::string, std::map<std::uint64_t, double>>> zs;
  std::map<std::string, std::map<std::string, std::map<std::size_t, std::map<std::uint64_t, double>>>> fsr;
  for (const auto& r : rows) {
    note(methods, r.method);
    note(domains, r.domain);
    if (r.k == 0)
      zs[r.method][r.domain][r.seed] = r.accuracy;
    else
      fsr[r.method][r.domain][r.k][r.seed] = r.accuracy;
  }
  {
    json j = json::array();
    std::ofstream z(out / "zero_shot.csv");
    z << "method,domain,mean,std,n_seeds\n";
    std::ofstream sm(out / "summary.csv");
    sm << "method,mean,std,n_seeds\n";
    json summary = json::array();
    for (const auto& m : methods) {
      if (!zs.count(m)) continue;
      std::map<std::uint64_t, std::vector<double>> per_seed;
      for (const auto& d : domains) {
        if (!zs[m].count(d)) continue;
        const Stat s = stat_of(zs[m][d]);
        z << m << "," << d << "," << num(s.mean) << "," << num(s.std) << "," << s.seeds.size() << "\n";
        json e = stat_json(s);
        e["method"] = m;
        e["domain"] = d;
        j.push_back(e);
        for (const auto& [seed, v] : zs[m][d]) per_seed[seed].push_back(v);
      }
      std::map<std::uint64_t, double> avg;
      for (const auto& [seed, v] : per_seed) avg[seed] = mean_std(v).first;
      const Stat s = stat_of(avg);
      sm << m << "," << num(s.mean) << "," << num(s.std) << "," << s.seeds.size() << "\n";
      json e = stat_json(s);
      e["method"] = m;
      summary.push_back(e);
    }
    std::ofstream(out / "zero_shot.json") << json{{"rows", j}, {"domain_average", summary}}.dump(1) << "\n";
    files.written.insert(files.written.end(), {out / "zero_shot.csv", out / "zero_shot.json", out / "summary.csv"});
  }

  // Few-shot curves: per domain and averaged over domains.
  if (!fsr.empty()) {
    std::ofstream f(out / "fewshot.csv");
    f << "method,domain,k,mean,std,n_seeds\n";
    json j = json::array();
    for (const auto& m : methods) {
      if (!fsr.count(m)) continue;
      std::map<std::size_t, std::map<std::uint64_t, std::vector<double>>> pooled;
      for (const auto& d : domains) {
        if (!fsr[m].count(d)) continue;
        for (const auto& [k, by_seed] : fsr[m][d]) {
          const Stat s = stat_of(by_seed);
          f << m << "," << d << "," << k << "," << num(s.mean) << "," << num(s.std) << "," << s.seeds.size() << "\n";
          json e = stat_json(s);
          e["method"] = m;
          e["domain"] = d;
          e["k"] = k;
          j.push_back(e);
          for (const auto& [seed, v] : by_seed) pooled[k][seed].push_back(v);
        }
      }
      for (const auto& [k, by_seed] : pooled) {
        std::map<std::uint64_t, double> avg;
        for (const auto& [seed, v] : by_seed) avg[seed] = mean_std(v).first;
        const Stat s = stat_of(avg);
        f << m << ",all," << k << "," << num(s.mean) << "," << num(s.std) << "," << s.seeds.size() << "\n";
        json e = stat_json(s);
        e["method"] = m;
        e["domain"] = "all";
        e["k"] = k;
        j.push_back(e);
      }
    }
    std::ofstream(out / "fewshot.json") << json{{"rows", j}}.dump(1) << "\n";
    files.written.insert(files.written.end(), {out / "fewshot.csv", out / "fewshot.json"});
  }

  // Diversity and image grids come from the latest run record.
  if (last && last->contains("cells")) {
    std::vector<std::string> order;
    std::map<std::string, std::map<std::uint64_t, double>> pool_div, img_div;
    std::map<std::string, std::string> grid_src;
    for (const auto& c : (*last)["cells"]) {
      if (!c.contains("synthesis")) continue;
      const std::string m = c["method"];
      const std::uint64_t seed = c["seed"];
      note(order, m);
      pool_div[m][seed] = c["prompts"].value("pool_diversity", 0.0);
      img_div[m][seed] = c["synthesis"].value("image_diversity", 0.0);
      if (!grid_src.count(m)) grid_src[m] = c["synthesis"].value("dir", "");
    }
    if (!order.empty()) {
      std::ofstream d(out / "diversity.csv");
      d << "method,pool_diversity_mean,pool_diversity_std,image_diversity_mean,image_diversity_std,n_seeds\n";
      json j = json::array();
      for (const auto& m : order) {
        const Stat p = stat_of(pool_div[m]), i = stat_of(img_div[m]);
        d << m << "," << num(p.mean) << "," << num(p.std) << "," << num(i.mean) << "," << num(i.std) << ","
          << p.seeds.size() << "\n";
        j.push_back({{"method", m}, {"pool_diversity", stat_json(p)}, {"image_diversity", stat_json(i)}});
      }
      std::ofstream(out / "diversity.json") << json{{"rows", j}}.dump(1) << "\n";
      files.written.insert(files.written.end(), {out / "diversity.csv", out / "diversity.json"});

      fs::create_directories(out / "grids");
      const std::size_t classes = world::default_world().categories.size();
      for (const auto& m : order) {
        const fs::path src = grid_src[m];
        if (src.empty() || !fs::exists(src)) continue;
        const fs::path p = out / "grids" / (m + ".ppm");
        write_ppm_grid(p, genlab::load_synthesis(src), classes, 10);
        files.written.push_back(p);
      }
    }
  }
  return files;
}

}  // namespace promptforge::harness
