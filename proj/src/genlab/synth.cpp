#include "promptforge/error.hpp"
#include "promptforge/genlab.hpp"
#include "promptforge/numerics/optim.hpp"
#include "promptforge/numerics/parallel.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>

namespace promptforge::genlab {

namespace fs = std::filesystem;
using nlohmann::json;

void SynthesisPlan::validate(std::size_t classes) const {
  if (classes < 1) throw ValidationError("synthesis needs at least one category");
  if (per_class < 1) throw ValidationError("synthesis needs at least one image per category");
  if (iterations < 1) throw ValidationError("synthesis iterations must be >= 1");
  if (batch_size < 1) throw ValidationError("synthesis batch size must be >= 1");
  if (!(lr > 0.0)) throw ValidationError("synthesis learning rate must be positive");
}

std::size_t workers_from_env() {
  const char* v = std::getenv("PROMPTFORGE_WORKERS");
  if (!v || !*v) return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1) throw ValidationError("PROMPTFORGE_WORKERS must be a positive integer, got '" + std::string(v) + "'");
  return static_cast<std::size_t>(n);
}

std::vector<std::pair<std::size_t, std::size_t>> assign_prompts(const PromptsByClass& prompts,
                                                                const SynthesisPlan& plan, const RngStream& stream) {
  plan.validate(prompts.size());
  std::vector<std::pair<std::size_t, std::size_t>> out;
  out.reserve(plan.total(prompts.size()));
  for (std::size_t c = 0; c < prompts.size(); ++c) {
    if (prompts[c].empty()) throw ValidationError("no prompts for category " + std::to_string(c));
    auto s = stream.child("assign").child(std::to_string(c));
    const auto perm = s.permutation(prompts[c].size());
    for (std::size_t i = 0; i < plan.per_class; ++i) out.emplace_back(c, perm[i % perm.size()]);
  }
  return out;
}

SynthesisResult synthesize(const PromptsByClass& prompts, const SynthesisPlan& plan,
                           const teacher::TeacherModel& teacher, const GeneratorModel& generator,
                           const RngStream& stream) {
  const auto assignment = assign_prompts(prompts, plan, stream);
  if (generator.dims.image_dim() != teacher.dims.image_dim())
    throw ValidationError("generator and teacher disagree on image size");
  const std::size_t E = teacher.dims.embed_dim;
  for (const auto& cls : prompts)
    for (const auto& p : cls) {
      if (p.embedding.size() != E) throw ContractViolation("prompt embedding width differs from the teacher's");
      double n2 = 0.0;
      for (double v : p.embedding.values()) n2 += v * v;
      if (std::abs(std::sqrt(n2) - 1.0) > 1e-6) throw ContractViolation("prompt embeddings must be unit norm");
    }

  const std::size_t N = assignment.size();
  const std::size_t L = generator.dims.latent_dim;
  const std::size_t side = generator.dims.image_side;
  SynthesisResult result;
  result.images.resize(N);
  const std::size_t batches = (N + plan.batch_size - 1) / plan.batch_size;

  numerics::parallel_for(batches, plan.workers, [&](std::size_t b) {
    const std::size_t start = b * plan.batch_size;
    const std::size_t B = std::min(plan.batch_size, N - start);
    Tensor z = Tensor::matrix(B, L);
    Tensor target = Tensor::matrix(B, E);
    for (std::size_t i = 0; i < B; ++i) {
      auto& out = result.images[start + i];
      const auto [c, p] = assignment[start + i];
      out.category = c;
      out.prompt_index = p;
      out.provenance = prompts[c][p].provenance;
      auto zs = stream.child("latent").child(std::to_string(start + i));
      out.stream = zs.label();
      for (double& v : z.row_span(i)) v = zs.gaussian();
      std::copy_n(prompts[c][p].embedding.values().begin(), E, target.row_span(i).begin());
    }
    numerics::AdamState adam(z.shape(), {.lr = plan.lr});
    for (std::size_t it = 0; it < plan.iterations; ++it) {
      Tape tape;
      const auto tv = teacher::bind(tape, teacher, false);
      const auto gv = numerics::bind(tape, generator.decoder, false);
      Var zv = tape.param(z);
      Var img = teacher::encode_image(tape, teacher, tv, decode(tape, generator, gv, zv));
      Var d = teacher::spherical_distance_sq(tape, img, tape.constant_ref(target));
      Var loss = tape.sum(d);
      const auto& dv = tape.value(d);
      for (std::size_t i = 0; i < B; ++i) {
        if (it == 0) result.images[start + i].initial_loss = dv[i];
        if (it + 1 == plan.iterations) result.images[start + i].final_loss = dv[i];
      }
      const auto g = tape.backward(loss);
      numerics::adam_step(adam, z, g.of(zv));
    }
    const Tensor px = generator.decode(z);
    for (std::size_t i = 0; i < B; ++i) result.images[start + i].pixels = px.row_copy(i).reshaped({side, side, 3});
  });
  for (const auto& img : result.images) result.diverged += img.final_loss > img.initial_loss;
  return result;
}

world::Dataset to_dataset(const SynthesisResult& r) {
  world::Dataset out;
  out.reserve(r.images.size());
  for (const auto& s : r.images) {
    world::LabeledImage img;
    img.pixels = s.pixels;
    img.category = s.category;
    img.domain = "synth";
    img.style = s.provenance.substr(0, s.provenance.find(':'));
    img.stream = s.stream;
    out.push_back(std::move(img));
  }
  return out;
}

void save_synthesis(const fs::path& dir, const SynthesisResult& r, const std::vector<std::string>& categories) {
  world::save_dataset(dir, to_dataset(r), categories);
  json j;
  j["format"] = "promptforge-synthesis";
  j["version"] = 1;
  j["diverged"] = r.diverged;
  json items = json::array();
  for (const auto& s : r.images)
    items.push_back({{"category", s.category},
                     {"prompt_index", s.prompt_index},
                     {"provenance", s.provenance},
                     {"initial_loss", s.initial_loss},
                     {"final_loss", s.final_loss},
                     {"stream", s.stream}});
  j["images"] = std::move(items);
  std::ofstream os(dir / "synthesis.json");
  if (!os) throw ValidationError("cannot write " + (dir / "synthesis.json").string());
  os << j.dump(1) << '\n';
}

SynthesisResult load_synthesis(const fs::path& dir) {
  const auto data = world::load_dataset(dir);
  std::ifstream is(dir / "synthesis.json");
  if (!is) throw ValidationError("missing " + (dir / "synthesis.json").string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ValidationError("malformed synthesis.json: " + std::string(e.what()));
  }
  const auto& items = j.at("images");
  if (items.size() != data.size()) throw ValidationError("synthesis.json and manifest disagree on image count");
  SynthesisResult r;
  for (std::size_t i = 0; i < data.size(); ++i) {
    SynthesizedImage s;
    s.pixels = data[i].pixels;
    s.category = items[i].at("category").get<std::size_t>();
    s.prompt_index = items[i].at("prompt_index").get<std::size_t>();
    s.provenance = items[i].at("provenance").get<std::string>();
    s.initial_loss = items[i].at("initial_loss").get<double>();
    s.final_loss = items[i].at("final_loss").get<double>();
    s.stream = items[i].at("stream").get<std::string>();
    if (s.category != data[i].category) throw ValidationError("synthesis.json category mismatch at image " + std::to_string(i));
    r.images.push_back(std::move(s));
  }
  r.diverged = j.value("diverged", std::size_t{0});
  return r;
}

}  // namespace promptforge::genlab
