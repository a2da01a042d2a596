#include "promptforge/error.hpp"
#include "promptforge/numerics/tensor_io.hpp"
#include "promptforge/world.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>

namespace promptforge::world {

namespace fs = std::filesystem;
using nlohmann::json;

void save_dataset(const fs::path& dir, const Dataset& dataset, const std::vector<std::string>& category_names) {
  fs::create_directories(dir);
  json manifest;
  manifest["format"] = "promptforge-dataset";
  manifest["version"] = 1;
  manifest["categories"] = category_names;
  json images = json::array();
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& img = dataset[i];
    char name[32];
    std::snprintf(name, sizeof name, "img_%06zu.ten", i);
    numerics::save_ten(dir / name, img.pixels);
    images.push_back({{"file", name},
                      {"category", img.category},
                      {"domain", img.domain},
                      {"style", img.style},
                      {"seed", img.seed},
                      {"stream", img.stream}});
  }
  manifest["images"] = std::move(images);
  std::ofstream os(dir / "manifest.json");
  if (!os) throw ValidationError("cannot write " + (dir / "manifest.json").string());
  os << manifest.dump(1) << '\n';
}

Dataset load_dataset(const fs::path& dir, std::vector<std::string>* category_names) {
  std::ifstream is(dir / "manifest.json");
  if (!is) throw ValidationError("missing " + (dir / "manifest.json").string());
  json manifest;
  try {
    manifest = json::parse(is);
  } catch (const json::exception& e) {
    throw ValidationError("malformed manifest: " + std::string(e.what()));
  }
  if (manifest.value("format", "") != "promptforge-dataset")
    throw ValidationError("not a dataset manifest: " + dir.string());
  if (category_names) *category_names = manifest.at("categories").get<std::vector<std::string>>();
  Dataset out;
  for (const auto& e : manifest.at("images")) {
    LabeledImage img;
    img.pixels = numerics::load_ten(dir / e.at("file").get<std::string>());
    img.category = e.at("category").get<std::size_t>();
    img.domain = e.at("domain").get<std::string>();
    img.style = e.at("style").get<std::string>();
    img.seed = e.at("seed").get<std::uint64_t>();
    img.stream = e.value("stream", "");
    for (double v : img.pixels.values())
      if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("pixel outside [0,1] in " + e.at("file").get<std::string>());
    out.push_back(std::move(img));
  }
  return out;
}

}  // namespace promptforge::world
