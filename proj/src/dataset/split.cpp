#include "crownstitch/dataset/split.hpp"

#include <nlohmann/json.hpp>

#include "crownstitch/error.hpp"
#include "crownstitch/geometry/geojson.hpp"

namespace crownstitch::dataset {

std::string to_string(SplitRole role) {
  switch (role) {
    case SplitRole::kTrain: return "train";
    case SplitRole::kVal: return "val";
    case SplitRole::kTest: return "test";
  }
  return "train";
}

SplitRole parse_split_role(const std::string& text) {
  if (text == "train") return SplitRole::kTrain;
  if (text == "val") return SplitRole::kVal;
  if (text == "test") return SplitRole::kTest;
  throw ValidationError("unknown split role '" + text + "' (expected train, val or test)");
}

void SplitManifest::assign(const std::string& site, SplitRole role, int tiles) {
  if (site.empty()) throw ValidationError("site name must not be empty");
  if (tiles < 0) throw ValidationError("tile count must be non-negative");
  const auto it = roles_.find(site);
  if (it != roles_.end() && it->second != role) {
    throw ValidationError("site '" + site + "' is already assigned to " + to_string(it->second));
  }
  roles_[site] = role;
  tiles_[site] = tiles;
}

int SplitManifest::tile_count(SplitRole role) const {
  int n = 0;
  for (const auto& [site, r] : roles_) {
    if (r == role) n += tiles_.at(site);
  }
  return n;
}

SplitManifest SplitManifest::load(const std::filesystem::path& path) {
  const auto doc = geometry::read_json_file(path);
  SplitManifest m;
  try {
    for (const auto& [site, entry] : doc.at("sites").items()) {
      m.assign(site, parse_split_role(entry.at("role").get<std::string>()), entry.at("tiles").get<int>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string() + ": malformed split manifest: " + e.what());
  }
  return m;
}

SplitManifest SplitManifest::load_or_empty(const std::filesystem::path& path) {
  return std::filesystem::exists(path) ? load(path) : SplitManifest{};
}

void SplitManifest::save(const std::filesystem::path& path) const {
  nlohmann::ordered_json doc;
  auto& sites = doc["sites"] = nlohmann::ordered_json::object();
  for (const auto& [site, role] : roles_) sites[site] = {{"role", to_string(role)}, {"tiles", tiles_.at(site)}};
  doc["tile_counts"] = {{"train", tile_count(SplitRole::kTrain)},
                        {"val", tile_count(SplitRole::kVal)},
                        {"test", tile_count(SplitRole::kTest)}};
  geometry::write_json_file(path, doc);
}

}  // namespace crownstitch::dataset
