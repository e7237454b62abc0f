#include "crownstitch/pipeline/inference.hpp"

#include <chrono>
#include <cmath>
#include <optional>

#include "crownstitch/geometry/vectorize.hpp"
#include "crownstitch/parallel.hpp"
#include "crownstitch/pipeline/instances.hpp"
#include "crownstitch/raster/chm.hpp"
#include "crownstitch/raster/tiling.hpp"

namespace crownstitch::pipeline {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t).count();
}

bool same_grid(const raster::GeoRaster& a, const raster::GeoRaster& b) {
  return a.width() == b.width() && a.height() == b.height() && a.transform() == b.transform();
}

struct TileOutcome {
  std::size_t predicted = 0;
  std::size_t after_score = 0;
  std::size_t edge_dropped = 0;
  std::vector<PlacedInstance> kept;
  std::optional<std::string> error;
};

}  // namespace

void InferenceConfig::validate() const {
  if (tile_size < 1) throw ValidationError("tile size must be positive");
  if (!(overlap >= 0.0 && overlap < 1.0)) throw ValidationError("overlap must be in [0, 1)");
  if (!(score_threshold >= 0.0 && score_threshold <= 1.0)) {
    throw ValidationError("score threshold must be in [0, 1]");
  }
  if (!(merge_iou >= 0.0 && merge_iou <= 1.0)) throw ValidationError("merge IoU must be in [0, 1]");
  if (!(min_crown_area >= 0.0) || !std::isfinite(min_crown_area)) {
    throw ValidationError("minimum crown area must be a finite number >= 0");
  }
}

nlohmann::ordered_json InferenceConfig::to_json() const {
  nlohmann::ordered_json j;
  j["tile_size"] = tile_size;
  j["overlap"] = overlap;
  j["score_threshold"] = score_threshold;
  j["merge_iou"] = merge_iou;
  j["min_crown_area"] = min_crown_area;
  return j;
}

nlohmann::ordered_json InferenceReport::to_json() const {
  nlohmann::ordered_json j;
  j["backend"] = backend;
  j["tiles"] = tiles;
  j["tiles_failed"] = failed_tiles.size();
  j["failed_tiles"] = nlohmann::ordered_json::array();
  for (const auto& f : failed_tiles) j["failed_tiles"].push_back({{"tile_id", f.tile_id}, {"error", f.error}});
  j["counts"] = {{"predicted", counts.predicted},
                 {"after_score_filter", counts.after_score_filter},
                 {"edge_dropped", counts.edge_dropped},
                 {"after_edge_removal", counts.after_edge_removal},
                 {"fused", counts.fused},
                 {"after_overlap_resolution", counts.after_overlap_resolution}};
  j["wall_time_s"] = wall_time_s;
  return j;
}

InferenceResult run_inference(const raster::GeoRaster& ortho, backends::SegmentationBackend& backend,
                              const InferenceConfig& config, const raster::GeoRaster* chm,
                              const RunOptions& options) {
  const auto start = Clock::now();
  config.validate();
  const auto caps = backend.capabilities();
  auto emit = [&](nlohmann::json ev) {
    if (options.on_event) options.on_event(ev);
  };

  std::optional<raster::GeoRaster> chm_on_grid;
  if (caps.needs_chm) {
    if (!chm) throw ValidationError("backend '" + caps.name + "' needs a CHM (--chm)");
    if (chm->bands() != 1) throw ValidationError("CHM must have a single band");
    if (!chm->crs().empty() && !ortho.crs().empty() && chm->crs() != ortho.crs()) {
      throw ValidationError("CHM CRS " + chm->crs() + " differs from orthomosaic CRS " + ortho.crs());
    }
    if (!same_grid(*chm, ortho)) {
      emit({{"event", "chm_resampled"}, {"from", {chm->width(), chm->height()}}, {"to", {ortho.width(), ortho.height()}}});
      chm_on_grid = raster::resample_to_grid(*chm, ortho);
    }
  }
  const raster::GeoRaster* chm_grid = caps.needs_chm ? (chm_on_grid ? &*chm_on_grid : chm) : nullptr;

  const auto tiles = raster::compute_tile_grid(ortho.width(), ortho.height(), config.tile_size, config.overlap);
  const PixelRect extent{0, 0, ortho.width(), ortho.height()};
  std::vector<TileOutcome> outcomes(tiles.size());

  parallel_for(tiles.size(), options.workers, [&](std::size_t t) {
    const auto tile_start = Clock::now();
    const auto& rect = tiles[t];
    auto& out = outcomes[t];
    const auto rgb = raster::extract_tile(ortho, rect);
    std::optional<raster::TileImage> chm_tile;
    if (chm_grid) chm_tile = raster::extract_tile(*chm_grid, rect);
    std::vector<backends::InstancePrediction> preds;
    try {
      preds = backends::predict_tile(backend, rgb, chm_tile ? &*chm_tile : nullptr);
    } catch (const backends::BackendError& e) {
      out.error = e.what();
      emit({{"event", "tile_failed"}, {"tile_id", rect.id()}, {"error", e.what()}});
      return;
    }
    out.predicted = preds.size();
    // indices refer to the backend's list so keys stay stable across filters
    for (std::size_t i = 0; i < preds.size(); ++i) {
      if (!(preds[i].score >= config.score_threshold)) continue;
      ++out.after_score;
      auto placed = place_instance(preds[i], rect, static_cast<int>(i), extent);
      if (!placed) continue;
      if (touches_cut_edge(*placed, rect)) {
        ++out.edge_dropped;
        continue;
      }
      out.kept.push_back(std::move(*placed));
    }
    emit({{"event", "tile"},
          {"tile_id", rect.id()},
          {"instances", out.predicted},
          {"kept", out.kept.size()},
          {"duration_ms", ms_since(tile_start)}});
  });

  InferenceResult result;
  auto& report = result.report;
  report.backend = caps.name;
  report.tiles = tiles.size();
  std::vector<PlacedInstance> placed;
  for (std::size_t t = 0; t < tiles.size(); ++t) {
    auto& o = outcomes[t];
    if (o.error) {
      report.failed_tiles.push_back({tiles[t].id(), *o.error});
      continue;
    }
    report.counts.predicted += o.predicted;
    report.counts.after_score_filter += o.after_score;
    report.counts.edge_dropped += o.edge_dropped;
    for (auto& p : o.kept) placed.push_back(std::move(p));
  }
  if (!tiles.empty() && report.failed_tiles.size() == tiles.size()) {
    throw RuntimeFailure("all " + std::to_string(tiles.size()) + " tiles failed; first error: " +
                         report.failed_tiles.front().error);
  }
  report.counts.after_edge_removal = placed.size();

  auto stage_start = Clock::now();
  const auto fused = merge_instances(std::move(placed), config.merge_iou);
  report.counts.fused = fused.size();
  emit({{"event", "stage"}, {"stage", "merge"}, {"instances", fused.size()}, {"duration_ms", ms_since(stage_start)}});

  stage_start = Clock::now();
  std::vector<geometry::PolygonGeo> polygons;
  polygons.reserve(fused.size());
  for (const auto& inst : fused) {
    const auto transform = ortho.transform().translated(inst.bbox.x0, inst.bbox.y0);
    polygons.push_back(geometry::vectorize_mask(inst.mask, transform, inst.score));
  }
  const auto resolved = geometry::resolve_overlaps(polygons, {config.min_crown_area});
  report.counts.after_overlap_resolution = resolved.size();
  emit({{"event", "stage"},
        {"stage", "polygons"},
        {"instances", resolved.size()},
        {"duration_ms", ms_since(stage_start)}});

  if (!ortho.crs().empty()) result.crowns.crs = ortho.crs();
  for (std::size_t i = 0; i < resolved.size(); ++i) {
    result.crowns.features.push_back({"crown_" + std::to_string(i + 1), resolved[i]});
  }
  report.wall_time_s = std::chrono::duration<double>(Clock::now() - start).count();
  return result;
}

}  // namespace crownstitch::pipeline
