#include "crownstitch/backends/backend.hpp"

#include <cmath>

namespace crownstitch::backends {

void validate_predictions(const std::vector<InstancePrediction>& instances, int width, int height) {
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& inst = instances[i];
    const std::string where = "instance " + std::to_string(i) + ": ";
    if (!(inst.score >= 0.0 && inst.score <= 1.0)) {
      throw BackendError(where + "score " + std::to_string(inst.score) + " outside [0, 1]");
    }
    if (inst.mask.width != width || inst.mask.height != height) {
      throw BackendError(where + "mask is " + std::to_string(inst.mask.width) + "x" +
                         std::to_string(inst.mask.height) + ", tile is " + std::to_string(width) + "x" +
                         std::to_string(height));
    }
    try {
      geometry::validate_rle(inst.mask);
    } catch (const ValidationError& e) {
      throw BackendError(where + e.what());
    }
  }
}

std::vector<InstancePrediction> predict_tile(SegmentationBackend& backend, const raster::TileImage& rgb,
                                             const raster::TileImage* chm) {
  const Capabilities caps = backend.capabilities();
  if (caps.needs_chm && !chm) {
    throw ValidationError("backend '" + caps.name + "' needs a CHM; none was supplied");
  }
  auto out = backend.predict(rgb, caps.needs_chm ? chm : nullptr);
  validate_predictions(out, rgb.raster.width(), rgb.raster.height());
  return out;
}

}  // namespace crownstitch::backends
