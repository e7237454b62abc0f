#pragma once

#include <string>
#include <vector>

#include "crownstitch/error.hpp"
#include "crownstitch/geometry/rle.hpp"
#include "crownstitch/raster/tiling.hpp"

namespace crownstitch::backends {

struct Capabilities {
  bool needs_rgb = true;
  bool needs_chm = false;
  std::string name;
};

struct InstancePrediction {
  double score = 0.0;
  geometry::RlePayload mask;  // tile pixel frame
  std::string tile_id;

  bool operator==(const InstancePrediction&) const = default;
};

// A tile the backend could not handle (crash, timeout, malformed reply). The
// pipeline records it and moves on.
class BackendError : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

// Implementations must tolerate concurrent predict() calls.
class SegmentationBackend {
 public:
  virtual ~SegmentationBackend() = default;
  virtual Capabilities capabilities() const = 0;
  // `chm` is null unless the backend asked for it.
  virtual std::vector<InstancePrediction> predict(const raster::TileImage& rgb,
                                                  const raster::TileImage* chm) = 0;
};

// Checks the channel requirements, runs the backend and validates what comes
// back. A missing required channel is a ValidationError; everything else that
// goes wrong is a BackendError.
std::vector<InstancePrediction> predict_tile(SegmentationBackend& backend, const raster::TileImage& rgb,
                                             const raster::TileImage* chm);

// Score in [0, 1], RLE consistent with a width x height tile. Throws
// BackendError naming the first bad instance by index.
void validate_predictions(const std::vector<InstancePrediction>& instances, int width, int height);

}  // namespace crownstitch::backends
