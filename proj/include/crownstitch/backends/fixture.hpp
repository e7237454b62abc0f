#pragma once

#include <filesystem>

#include "crownstitch/backends/backend.hpp"

namespace crownstitch::backends {

// Replays stored predictions: <dir>/<tile_id>.json holds a wire-protocol
// "result" message. A tile without a file has no instances.
class FixtureBackend : public SegmentationBackend {
 public:
  explicit FixtureBackend(std::filesystem::path dir);
  Capabilities capabilities() const override;
  std::vector<InstancePrediction> predict(const raster::TileImage& rgb, const raster::TileImage* chm) override;

 private:
  std::filesystem::path dir_;
};

}  // namespace crownstitch::backends
