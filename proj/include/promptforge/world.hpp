#pragma once

// Procedural multi-domain labelled image world.
//
// Images are small RGB glyph renderings. A category fixes the glyph shape; a
// style fixes everything else (background texture, palettes, stroke width,
// rotation, geometric jitter, polarity). Domains group styles and carry a role
// that decides which pipeline stage may see them.

#include "promptforge/numerics/rng.hpp"
#include "promptforge/numerics/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace promptforge::world {

using numerics::RngStream;
using numerics::Tensor;

inline constexpr std::size_t kDefaultImageSide = 12;

enum class Glyph { Disc, Ring, Cross, Square, Triangle, Bar, Corner };

struct CategorySpec {
  std::string name;
  Glyph glyph = Glyph::Disc;
  double size = 0.62;  // glyph half-extent in [-1, 1] image coordinates
};

enum class Background { Solid, Stripes, Noise };

struct Rgb {
  double r = 0.0, g = 0.0, b = 0.0;
};

struct StyleSpec {
  std::string name;
  Background background = Background::Solid;
  std::vector<Rgb> foreground;
  std::vector<Rgb> backdrop;
  double stroke = 2.0;    // pixels
  double rotation = 0.0;  // radians
  double jitter = 0.15;   // geometric jitter amplitude
  bool invert = false;
  double texture = 0.0;  // noise amplitude or stripe contrast
  double stripe_period = 4.0;  // pixels
};

enum class DomainRole { TeacherTrain, GeneratorTrain, HeldOutEval };

std::string_view role_name(DomainRole role);
DomainRole parse_role(std::string_view name);

struct DomainSpec {
  std::string id;
  std::vector<StyleSpec> styles;
  DomainRole role = DomainRole::TeacherTrain;
};

struct LabeledImage {
  Tensor pixels;  // side x side x 3, values in [0, 1]
  std::size_t category = 0;
  std::string domain;
  std::string style;
  std::uint64_t seed = 0;
  std::string stream;  // stream label the image was drawn from
};

using Dataset = std::vector<LabeledImage>;

struct WorldSpec {
  std::size_t image_side = kDefaultImageSide;
  std::vector<CategorySpec> categories;
  std::vector<DomainSpec> domains;

  std::vector<std::string> category_names() const;
  const DomainSpec& domain(std::string_view id) const;
  std::vector<const DomainSpec*> domains_with_role(DomainRole role) const;
  // Style names observed by any domain with the given role.
  std::vector<std::string> style_names(DomainRole role) const;
  // Validates uniqueness, palette ranges, and held-out/teacher separation.
  void validate() const;
};

// Seven glyph categories, teacher-train/generator-train/held-out domains.
WorldSpec default_world(std::size_t image_side = kDefaultImageSide);

// Throws ValidationError when the glyph covers less than 10% or more than
// 80% of the image.
LabeledImage render_glyph(const CategorySpec& category, std::size_t category_id,
                          const StyleSpec& style, RngStream& stream,
                          std::size_t side = kDefaultImageSide);

// Fraction of pixels covered by the glyph mask for one rendering.
double glyph_coverage(const CategorySpec& category, const StyleSpec& style, RngStream& stream,
                      std::size_t side = kDefaultImageSide);

// Exactly n_per_class images per category with styles cycled in order.
Dataset build_domain_dataset(const DomainSpec& domain, const std::vector<CategorySpec>& categories,
                             std::size_t n_per_class, const RngStream& stream,
                             std::size_t side = kDefaultImageSide);

// "<cls> in the style of <style>", or the vanilla "a <cls>" without a style.
std::string build_caption(std::string_view category, std::optional<std::string_view> style);

struct FewShotSplit {
  Dataset support;
  Dataset query;
};

// k images per class in the support set, the remainder in the query set.
FewShotSplit few_shot_split(const Dataset& dataset, std::size_t k, RngStream& stream);

// Stacks images into an N x (side*side*3) matrix.
Tensor stack_pixels(const Dataset& dataset);

// Directory layout: manifest.json plus one .ten file per image.
void save_dataset(const std::filesystem::path& dir, const Dataset& dataset,
                  const std::vector<std::string>& category_names);
Dataset load_dataset(const std::filesystem::path& dir, std::vector<std::string>* category_names = nullptr);

}  // namespace promptforge::world
