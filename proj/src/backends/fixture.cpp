#include "crownstitch/backends/fixture.hpp"

#include "crownstitch/backends/wire.hpp"
#include "crownstitch/geometry/geojson.hpp"

namespace crownstitch::backends {

FixtureBackend::FixtureBackend(std::filesystem::path dir) : dir_(std::move(dir)) {
  if (!std::filesystem::is_directory(dir_)) {
    throw ValidationError("fixture directory " + dir_.string() + " does not exist");
  }
}

Capabilities FixtureBackend::capabilities() const { return {false, false, "fixture"}; }

std::vector<InstancePrediction> FixtureBackend::predict(const raster::TileImage& rgb,
                                                        const raster::TileImage* /*chm*/) {
  const std::string id = rgb.rect.id();
  const auto path = dir_ / (id + ".json");
  if (!std::filesystem::exists(path)) return {};
  nlohmann::json msg;
  try {
    msg = geometry::read_json_file(path);
  } catch (const ValidationError& e) {
    throw BackendError(e.what());
  }
  return parse_result(msg, id, rgb.raster.width(), rgb.raster.height());
}

}  // namespace crownstitch::backends
