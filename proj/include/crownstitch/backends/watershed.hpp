#pragma once

#include <string>
#include <vector>

#include "crownstitch/backends/backend.hpp"
#include "crownstitch/raster/georaster.hpp"

namespace crownstitch::backends {

struct WatershedParams {
  double smoothing_sigma = 5.0;        // px
  double min_treetop_distance = 20.0;  // px
  double min_height = 2.0;             // m
  int min_crown_pixels = 100;

  // ValidationError unless every field is strictly positive and finite.
  void validate() const;
};

// Marker watershed on a CHM tile:
//   1. separable Gaussian smoothing (radius ceil(3 sigma), edge replicated;
//      nodata counts as 0 m)
//   2. canopy mask: smoothed >= min_height
//   3. treetops: mask pixels equal to the maximum of their square window of
//      half-width floor(min_treetop_distance); candidates are accepted by
//      descending height (row-major index breaks ties) unless an accepted
//      treetop lies within Chebyshev distance min_treetop_distance
//   4. priority flood from the treetops over the mask, 4-connected, higher
//      pixels first, FIFO among equal heights
//   5. regions with at least min_crown_pixels pixels become instances, scored
//      clamp(treetop height / 40 m, 0.05, 0.99)
// Instances come out in treetop acceptance order.
std::vector<InstancePrediction> watershed_segment(const raster::GeoRaster& chm_tile,
                                                  const WatershedParams& params,
                                                  const std::string& tile_id = "");

// Exposed for tests.
std::vector<float> gaussian_smooth(const std::vector<float>& grid, int width, int height, double sigma);

class WatershedBackend : public SegmentationBackend {
 public:
  explicit WatershedBackend(WatershedParams params = {});
  Capabilities capabilities() const override;
  std::vector<InstancePrediction> predict(const raster::TileImage& rgb, const raster::TileImage* chm) override;

  const WatershedParams& params() const { return params_; }

 private:
  WatershedParams params_;
};

}  // namespace crownstitch::backends
