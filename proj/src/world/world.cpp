#include "promptforge/world.hpp"

#include "promptforge/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

namespace promptforge::world {

std::string_view role_name(DomainRole role) {
  switch (role) {
    case DomainRole::TeacherTrain: return "teacher-train";
    case DomainRole::GeneratorTrain: return "generator-train";
    case DomainRole::HeldOutEval: return "held-out-eval";
  }
  return "?";
}

DomainRole parse_role(std::string_view name) {
  for (auto r : {DomainRole::TeacherTrain, DomainRole::GeneratorTrain, DomainRole::HeldOutEval})
    if (role_name(r) == name) return r;
  throw ValidationError("unknown domain role '" + std::string(name) + "'");
}

std::vector<std::string> WorldSpec::category_names() const {
  std::vector<std::string> out;
  for (const auto& c : categories) out.push_back(c.name);
  return out;
}

const DomainSpec& WorldSpec::domain(std::string_view id) const {
  for (const auto& d : domains)
    if (d.id == id) return d;
  throw ValidationError("unknown domain '" + std::string(id) + "'");
}

std::vector<const DomainSpec*> WorldSpec::domains_with_role(DomainRole role) const {
  std::vector<const DomainSpec*> out;
  for (const auto& d : domains)
    if (d.role == role) out.push_back(&d);
  return out;
}

std::vector<std::string> WorldSpec::style_names(DomainRole role) const {
  std::vector<std::string> out;
  for (const auto* d : domains_with_role(role))
    for (const auto& s : d->styles)
      if (std::find(out.begin(), out.end(), s.name) == out.end()) out.push_back(s.name);
  return out;
}

namespace {

bool in_unit(const Rgb& c) {
  auto ok = [](double v) { return v >= 0.0 && v <= 1.0; };
  return ok(c.r) && ok(c.g) && ok(c.b);
}

void validate_style(const StyleSpec& s) {
  if (s.foreground.empty() || s.backdrop.empty())
    throw ValidationError("style '" + s.name + "' has an empty palette");
  for (const auto* pal : {&s.foreground, &s.backdrop})
    for (const auto& c : *pal)
      if (!in_unit(c)) throw ValidationError("style '" + s.name + "' palette outside [0,1]");
  if (!(s.stroke > 0.0)) throw ValidationError("style '" + s.name + "' needs a positive stroke");
  if (s.background == Background::Stripes && !(s.stripe_period > 0.0))
    throw ValidationError("style '" + s.name + "' needs a positive stripe period");
}

}  // namespace

void WorldSpec::validate() const {
  if (image_side < 8) throw ValidationError("image side must be at least 8");
  if (categories.empty()) throw ValidationError("world has no categories");
  std::set<std::string> names;
  for (const auto& c : categories)
    if (!names.insert(c.name).second) throw ValidationError("duplicate category '" + c.name + "'");
  std::set<std::string> ids;
  for (const auto& d : domains) {
    if (!ids.insert(d.id).second) throw ValidationError("duplicate domain '" + d.id + "'");
    if (d.styles.empty()) throw ValidationError("domain '" + d.id + "' has no styles");
    std::set<std::string> local;
    for (const auto& s : d.styles) {
      validate_style(s);
      if (!local.insert(s.name).second)
        throw ValidationError("duplicate style '" + s.name + "' in domain '" + d.id + "'");
    }
  }
  // A style name denotes one parameter set across the whole world.
  std::vector<const StyleSpec*> seen;
  for (const auto& d : domains)
    for (const auto& s : d.styles) {
      for (const auto* o : seen)
        if (o->name == s.name && (o->stroke != s.stroke || o->invert != s.invert ||
                                  o->background != s.background || o->rotation != s.rotation))
          throw ValidationError("style '" + s.name + "' defined twice with different parameters");
      seen.push_back(&s);
    }
  const auto train = style_names(DomainRole::TeacherTrain);
  const auto gen = style_names(DomainRole::GeneratorTrain);
  for (const auto& held : style_names(DomainRole::HeldOutEval)) {
    if (std::find(train.begin(), train.end(), held) != train.end() ||
        std::find(gen.begin(), gen.end(), held) != gen.end())
      throw ValidationError("held-out style '" + held + "' is visible during pretraining");
  }
}

WorldSpec default_world(std::size_t image_side) {
  WorldSpec w;
  w.image_side = image_side;
  w.categories = {{"disc", Glyph::Disc, 0.62},     {"ring", Glyph::Ring, 0.62},
                  {"cross", Glyph::Cross, 0.62},   {"square", Glyph::Square, 0.62},
                  {"triangle", Glyph::Triangle, 0.62}, {"bar", Glyph::Bar, 0.62},
                  {"corner", Glyph::Corner, 0.62}};

  const std::vector<Rgb> ink{{0.08, 0.08, 0.1}, {0.15, 0.12, 0.22}};
  const std::vector<Rgb> paper{{0.95, 0.95, 0.95}, {0.9, 0.9, 0.84}};

  StyleSpec plain{.name = "plain", .foreground = ink, .backdrop = paper};
  StyleSpec bold{.name = "bold", .foreground = ink, .backdrop = {{0.85, 0.85, 0.85}}, .stroke = 3.0};
  StyleSpec tilted{.name = "tilted", .foreground = ink, .backdrop = paper, .rotation = 0.5};
  StyleSpec crimson{.name = "crimson",
                    .foreground = {{0.8, 0.1, 0.1}, {0.65, 0.05, 0.15}},
                    .backdrop = {{0.97, 0.93, 0.85}}};
  StyleSpec noisy{.name = "noisy",
                  .background = Background::Noise,
                  .foreground = ink,
                  .backdrop = {{0.8, 0.8, 0.8}},
                  .texture = 0.25};
  StyleSpec dark{.name = "dark", .foreground = ink, .backdrop = paper, .invert = true};
  StyleSpec azure{.name = "azure",
                  .foreground = {{0.95, 0.9, 0.3}},
                  .backdrop = {{0.15, 0.35, 0.75}, {0.1, 0.3, 0.6}},
                  .stroke = 2.5};
  StyleSpec dusty{.name = "dusty",
                  .background = Background::Noise,
                  .foreground = {{0.35, 0.25, 0.15}},
                  .backdrop = {{0.8, 0.72, 0.55}},
                  .rotation = -0.3,
                  .texture = 0.15};

  StyleSpec striped{.name = "striped",
                    .background = Background::Stripes,
                    .foreground = ink,
                    .backdrop = paper,
                    .texture = 0.35,
                    .stripe_period = 4.0};

  // Held-out styles recombine factors seen in training: stripes under
  // inverted polarity, the crimson palette inverted, thin jittery strokes on
  // a faint grain, and light stripes under a light-on-blue palette.
  StyleSpec zebra = striped;
  zebra.name = "zebra";
  zebra.invert = true;
  StyleSpec neon = crimson;
  neon.name = "neon";
  neon.invert = true;
  neon.rotation = 0.25;
  neon.stroke = 2.5;
  StyleSpec scribble{.name = "scribble",
                     .background = Background::Noise,
                     .foreground = {{0.45, 0.45, 0.5}},
                     .backdrop = {{0.98, 0.96, 0.9}},
                     .stroke = 1.5,
                     .jitter = 0.35,
                     .texture = 0.1};
  StyleSpec blueprint{.name = "blueprint",
                      .background = Background::Stripes,
                      .foreground = {{0.9, 0.95, 1.0}},
                      .backdrop = {{0.1, 0.25, 0.55}},
                      .texture = 0.2,
                      .stripe_period = 4.0};

  w.domains = {
      {"studio", {plain, bold, tilted, crimson}, DomainRole::TeacherTrain},
      {"street", {noisy, dusty, striped}, DomainRole::TeacherTrain},
      {"night", {dark, azure}, DomainRole::TeacherTrain},
      {"archive", {plain, bold, tilted, crimson, noisy, dusty, striped, dark, azure},
       DomainRole::GeneratorTrain},
      {"carnival", {zebra, neon}, DomainRole::HeldOutEval},
      {"sketchbook", {scribble, blueprint}, DomainRole::HeldOutEval},
  };
  return w;
}

namespace {

struct Geometry {
  double dx = 0.0, dy = 0.0, scale = 1.0, cos_r = 1.0, sin_r = 0.0, half_width = 0.1;
};

// Point-in-glyph test in the glyph frame. x to the right, y up.
bool inside(const CategorySpec& cat, double x, double y, double hw) {
  const double r = cat.size;
  switch (cat.glyph) {
    case Glyph::Disc: return std::hypot(x, y) <= 0.85 * r;
    case Glyph::Ring: return std::fabs(std::hypot(x, y) - 0.8 * r) <= hw;
    case Glyph::Cross: {
      const double w = hw + 0.04;
      return (std::fabs(x) <= w && std::fabs(y) <= r) || (std::fabs(y) <= w && std::fabs(x) <= r);
    }
    case Glyph::Square: {
      const double m = std::max(std::fabs(x), std::fabs(y));
      const double a = 0.85 * r;
      return m <= a && m >= a - 2.0 * hw;
    }
    case Glyph::Triangle: {
      // Upward equilateral triangle with circumradius 1.1 r centred on the origin.
      const double R = 1.1 * r;
      const double s3 = std::numbers::sqrt3;
      if (y < -0.5 * R) return false;
      return s3 * x + y <= R && -s3 * x + y <= R;
    }
    case Glyph::Bar: return std::fabs(x) <= r && std::fabs(y) <= hw + 0.12;
    case Glyph::Corner: {
      const double a = 0.85 * r;
      const double w = 2.0 * (hw + 0.04);
      if (std::fabs(x) > a || std::fabs(y) > a) return false;
      return x <= -a + w || y <= -a + w;
    }
  }
  return false;
}

// Fractional coverage per pixel from 3x3 supersampling.
std::vector<double> coverage_mask(const CategorySpec& cat, const Geometry& g, std::size_t side) {
  constexpr int kSub = 3;
  std::vector<double> mask(side * side, 0.0);
  const double px = 2.0 / static_cast<double>(side);
  for (std::size_t i = 0; i < side; ++i)
    for (std::size_t j = 0; j < side; ++j) {
      int hits = 0;
      for (int si = 0; si < kSub; ++si)
        for (int sj = 0; sj < kSub; ++sj) {
          const double u = -1.0 + (static_cast<double>(j) + (sj + 0.5) / kSub) * px;
          const double v = 1.0 - (static_cast<double>(i) + (si + 0.5) / kSub) * px;
          const double tx = (u - g.dx) / g.scale;
          const double ty = (v - g.dy) / g.scale;
          // Rotate the sample back into the glyph frame.
          const double x = g.cos_r * tx + g.sin_r * ty;
          const double y = -g.sin_r * tx + g.cos_r * ty;
          hits += inside(cat, x, y, g.half_width) ? 1 : 0;
        }
      mask[i * side + j] = static_cast<double>(hits) / (kSub * kSub);
    }
  return mask;
}

// Draw order is fixed and independent of polarity so inverted and plain
// variants of a style see the same geometry and colours.
Geometry draw_geometry(const StyleSpec& style, RngStream& stream, std::size_t side) {
  const double j = style.jitter;
  Geometry g;
  g.dx = 0.5 * j * (2.0 * stream.uniform() - 1.0);
  g.dy = 0.5 * j * (2.0 * stream.uniform() - 1.0);
  g.scale = 1.0 + 0.5 * j * (2.0 * stream.uniform() - 1.0);
  const double rot = style.rotation + j * (2.0 * stream.uniform() - 1.0);
  g.cos_r = std::cos(rot);
  g.sin_r = std::sin(rot);
  g.half_width = style.stroke / static_cast<double>(side) + 0.04;
  return g;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

void check_coverage(double cov, const CategorySpec& cat, const StyleSpec& style) {
  if (cov < 0.10 || cov > 0.80)
    throw ValidationError("degenerate glyph '" + cat.name + "' in style '" + style.name +
                          "': coverage " + std::to_string(cov));
}

}  // namespace

double glyph_coverage(const CategorySpec& category, const StyleSpec& style, RngStream& stream,
                      std::size_t side) {
  return mean_of(coverage_mask(category, draw_geometry(style, stream, side), side));
}

LabeledImage render_glyph(const CategorySpec& category, std::size_t category_id, const StyleSpec& style,
                          RngStream& stream, std::size_t side) {
  validate_style(style);
  LabeledImage img;
  img.category = category_id;
  img.style = style.name;
  img.seed = stream.seed();
  img.stream = stream.label();

  const Geometry g = draw_geometry(style, stream, side);
  const Rgb fg = style.foreground[stream.index(style.foreground.size())];
  const Rgb bg = style.backdrop[stream.index(style.backdrop.size())];
  const double phase = stream.uniform() * style.stripe_period;

  const auto mask = coverage_mask(category, g, side);
  check_coverage(mean_of(mask), category, style);

  img.pixels = Tensor({side, side, 3});
  auto px = img.pixels.values();
  const double fgc[3] = {fg.r, fg.g, fg.b};
  const double bgc[3] = {bg.r, bg.g, bg.b};
  for (std::size_t i = 0; i < side; ++i)
    for (std::size_t j = 0; j < side; ++j) {
      const double m = mask[i * side + j];
      double stripe = 0.0;
      if (style.background == Background::Stripes) {
        const double t = std::fmod(static_cast<double>(i + j) + phase, style.stripe_period);
        stripe = t < 0.5 * style.stripe_period ? style.texture : 0.0;
      }
      for (std::size_t c = 0; c < 3; ++c) {
        double b = bgc[c];
        if (style.background == Background::Stripes) b += stripe * (fgc[c] - bgc[c]);
        if (style.background == Background::Noise) b += style.texture * (2.0 * stream.uniform() - 1.0);
        b = std::clamp(b, 0.0, 1.0);
        double v = m * fgc[c] + (1.0 - m) * b;
        if (style.invert) v = 1.0 - v;
        px[(i * side + j) * 3 + c] = std::clamp(v, 0.0, 1.0);
      }
    }
  return img;
}

Dataset build_domain_dataset(const DomainSpec& domain, const std::vector<CategorySpec>& categories,
                             std::size_t n_per_class, const RngStream& stream, std::size_t side) {
  if (categories.empty()) throw ValidationError("empty category set");
  if (domain.styles.empty()) throw ValidationError("domain '" + domain.id + "' has no styles");
  if (n_per_class == 0) throw ContractViolation("n_per_class must be >= 1");
  Dataset out;
  out.reserve(categories.size() * n_per_class);
  const RngStream base = stream.child(domain.id);
  for (std::size_t c = 0; c < categories.size(); ++c)
    for (std::size_t i = 0; i < n_per_class; ++i) {
      const StyleSpec& style = domain.styles[i % domain.styles.size()];
      RngStream s = base.child(categories[c].name + "/" + std::to_string(i));
      LabeledImage img = render_glyph(categories[c], c, style, s, side);
      img.domain = domain.id;
      out.push_back(std::move(img));
    }
  return out;
}

std::string build_caption(std::string_view category, std::optional<std::string_view> style) {
  if (!style) return "a " + std::string(category);
  return std::string(category) + " in the style of " + std::string(*style);
}

FewShotSplit few_shot_split(const Dataset& dataset, std::size_t k, RngStream& stream) {
  std::size_t classes = 0;
  for (const auto& img : dataset) classes = std::max(classes, img.category + 1);
  std::vector<std::vector<std::size_t>> by_class(classes);
  for (std::size_t i = 0; i < dataset.size(); ++i) by_class[dataset[i].category].push_back(i);
  std::vector<bool> in_support(dataset.size(), false);
  for (std::size_t c = 0; c < classes; ++c) {
    auto& idx = by_class[c];
    if (idx.size() <= k)
      throw ValidationError("class " + std::to_string(c) + " has " + std::to_string(idx.size()) +
                            " samples, need more than " + std::to_string(k));
    stream.shuffle(idx);
    for (std::size_t t = 0; t < k; ++t) in_support[idx[t]] = true;
  }
  FewShotSplit split;
  for (std::size_t i = 0; i < dataset.size(); ++i)
    (in_support[i] ? split.support : split.query).push_back(dataset[i]);
  return split;
}

Tensor stack_pixels(const Dataset& dataset) {
  if (dataset.empty()) throw ContractViolation("cannot stack an empty dataset");
  const std::size_t d = dataset.front().pixels.size();
  Tensor out = Tensor::matrix(dataset.size(), d);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (dataset[i].pixels.size() != d) throw ContractViolation("mixed image sizes in dataset");
    std::copy(dataset[i].pixels.values().begin(), dataset[i].pixels.values().end(),
              out.row_span(i).begin());
  }
  return out;
}

}  // namespace promptforge::world
