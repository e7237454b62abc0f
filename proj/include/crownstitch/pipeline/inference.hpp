#pragma once

#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crownstitch/backends/backend.hpp"
#include "crownstitch/geometry/geojson.hpp"
#include "crownstitch/raster/georaster.hpp"

namespace crownstitch::pipeline {

struct InferenceConfig {
  int tile_size = 1024;
  double overlap = 0.8;
  double score_threshold = 0.3;
  double merge_iou = 0.1;
  double min_crown_area = 1.0;  // m^2

  void validate() const;
  nlohmann::ordered_json to_json() const;
};

struct TileFailure {
  std::string tile_id;
  std::string error;
};

// Instance counts after each stage; non-increasing from top to bottom.
struct StageCounts {
  std::size_t predicted = 0;
  std::size_t after_score_filter = 0;
  std::size_t edge_dropped = 0;  // touched a cut tile edge
  std::size_t after_edge_removal = 0;
  std::size_t fused = 0;
  std::size_t after_overlap_resolution = 0;  // also the min-area filter
};

struct InferenceReport {
  std::size_t tiles = 0;
  std::vector<TileFailure> failed_tiles;
  StageCounts counts;
  std::string backend;
  double wall_time_s = 0.0;

  nlohmann::ordered_json to_json() const;
};

struct InferenceResult {
  geometry::FeatureCollection crowns;
  InferenceReport report;
};

// Progress events for logging. Called from worker threads.
using EventSink = std::function<void(const nlohmann::json&)>;

struct RunOptions {
  int workers = 1;
  EventSink on_event;
};

// Tiles the orthomosaic, runs the backend on every tile and turns the
// surviving instances into disjoint crown polygons in world coordinates.
// A CHM is required when the backend asks for one; it is resampled onto the
// orthomosaic grid if the grids differ. Tiles whose prediction fails are
// listed in the report; if every tile fails the run is a RuntimeFailure.
InferenceResult run_inference(const raster::GeoRaster& ortho, backends::SegmentationBackend& backend,
                              const InferenceConfig& config, const raster::GeoRaster* chm = nullptr,
                              const RunOptions& options = {});

}  // namespace crownstitch::pipeline
