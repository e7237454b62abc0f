#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crownstitch/error.hpp"
#include "crownstitch/geometry/polygon.hpp"
#include "crownstitch/geometry/rle.hpp"

namespace crownstitch::eval {

inline constexpr int kNumThresholds = 10;
inline constexpr int kNumRecallPoints = 101;

// 0.50, 0.55, ..., 0.95 and 0.00, 0.01, ..., 1.00, computed the way
// numpy.linspace does (start + k * step, last value pinned) so threshold
// comparisons agree with pycocotools to the last bit.
const std::array<double, kNumThresholds>& iou_thresholds();
const std::array<double, kNumRecallPoints>& recall_points();

struct Detection {
  double score = 0.0;
  geometry::RlePayload mask;
};

struct EvalItem {
  std::int64_t image_id = 0;
  std::vector<Detection> predictions;
  std::vector<geometry::RlePayload> ground_truths;
};

struct MatchCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
};

struct EvalResult {
  double map = 0.0;  // all in [0, 100]
  double map50 = 0.0;
  double map75 = 0.0;
  std::array<double, kNumThresholds> per_threshold_ap{};
  MatchCounts counts;  // at IoU 0.50
  std::int64_t images = 0;
  std::int64_t ground_truths = 0;
  std::int64_t detections = 0;  // after the per-image cap

  nlohmann::ordered_json to_json() const;
};

struct MatchResult {
  std::vector<bool> tp;  // per detection, in the given order
  std::int64_t unmatched_gt = 0;
};

// Greedy matching for one image. `iou[d][g]` is the IoU of detection d
// (rows already in descending score order) with ground truth g. Each
// detection takes the still-unmatched ground truth of highest IoU, provided
// that IoU >= threshold; equal IoUs go to the later ground truth, as in
// pycocotools.
MatchResult match_detections(const std::vector<std::vector<double>>& iou, std::size_t num_gt, double threshold);

// 101-point interpolated AP of a ranked list of TP/FP flags. nullopt when
// there is nothing to score (no ground truth and no detections); 0 when
// there are detections but no ground truth.
std::optional<double> average_precision(const std::vector<bool>& tp_flags, std::int64_t num_gt);

// Scores plus an IoU matrix for one image; the common ground of the mask and
// polygon modes.
struct ScoredImage {
  std::vector<double> scores;
  std::vector<std::vector<double>> iou;  // [detection][ground truth]
  std::size_t num_gt = 0;
};

// COCO protocol over images in the given order: detections in each image are
// ranked by score (stable), capped at max_dets, matched per threshold, then
// pooled into one ranking (stable, so ties keep image order) for the AP.
// Throws ValidationError when there is no ground truth at all.
EvalResult evaluate_scored(std::vector<ScoredImage> images, int max_dets = 100);

// Mask IoU on RLEs. Every mask must match the dimensions of the first ground
// truth (or prediction) of its item. Items are evaluated in image_id order.
EvalResult evaluate_coco(const std::vector<EvalItem>& items, int max_dets = 100, int workers = 1);

// Polygon IoU between two GeoJSON-style feature sets treated as a single
// image. Not part of the COCO protocol.
EvalResult evaluate_polygons(const std::vector<geometry::PolygonGeo>& ground_truths,
                             const std::vector<geometry::PolygonGeo>& predictions, int max_dets = 100);

}  // namespace crownstitch::eval
