#include "crownstitch/eval/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "crownstitch/error.hpp"
#include "crownstitch/parallel.hpp"

namespace crownstitch::eval {

namespace {

template <std::size_t N>
std::array<double, N> linspace(double start, double stop) {
  std::array<double, N> out{};
  const double step = (stop - start) / static_cast<double>(N - 1);
  for (std::size_t k = 0; k < N; ++k) out[k] = static_cast<double>(k) * step + start;
  out[N - 1] = stop;
  return out;
}

std::vector<std::size_t> rank_by_score(const std::vector<double>& scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace

const std::array<double, kNumThresholds>& iou_thresholds() {
  static const auto t = linspace<kNumThresholds>(0.5, 0.95);
  return t;
}

const std::array<double, kNumRecallPoints>& recall_points() {
  static const auto r = linspace<kNumRecallPoints>(0.0, 1.0);
  return r;
}

MatchResult match_detections(const std::vector<std::vector<double>>& iou, std::size_t num_gt, double threshold) {
  MatchResult out;
  out.tp.assign(iou.size(), false);
  std::vector<bool> taken(num_gt, false);
  // pycocotools caps the threshold just below 1 so IoU 1.0 can match at t = 1
  const double floor = std::min(threshold, 1.0 - 1e-10);
  std::int64_t matched = 0;
  for (std::size_t d = 0; d < iou.size(); ++d) {
    double best = floor;
    std::ptrdiff_t m = -1;
    for (std::size_t g = 0; g < num_gt; ++g) {
      if (taken[g] || iou[d][g] < best) continue;
      best = iou[d][g];
      m = static_cast<std::ptrdiff_t>(g);
    }
    if (m >= 0) {
      taken[static_cast<std::size_t>(m)] = true;
      out.tp[d] = true;
      ++matched;
    }
  }
  out.unmatched_gt = static_cast<std::int64_t>(num_gt) - matched;
  return out;
}

std::optional<double> average_precision(const std::vector<bool>& tp_flags, std::int64_t num_gt) {
  if (num_gt < 0) throw ValidationError("number of ground truths must be >= 0");
  if (num_gt == 0) return tp_flags.empty() ? std::nullopt : std::optional<double>(0.0);
  const std::size_t n = tp_flags.size();
  std::vector<double> precision(n), recall(n);
  std::int64_t tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    tp += tp_flags[i];
    recall[i] = static_cast<double>(tp) / static_cast<double>(num_gt);
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
  }
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double sum = 0.0;
  for (double r : recall_points()) {
    const auto it = std::lower_bound(recall.begin(), recall.end(), r);
    if (it == recall.end()) break;  // recall never gets this high; the rest are 0
    sum += precision[static_cast<std::size_t>(it - recall.begin())];
  }
  return sum / kNumRecallPoints;
}

EvalResult evaluate_scored(std::vector<ScoredImage> images, int max_dets) {
  if (max_dets < 1) throw ValidationError("max_dets must be >= 1");
  EvalResult res;
  res.images = static_cast<std::int64_t>(images.size());

  // rank and cap each image once
  for (auto& img : images) {
    auto order = rank_by_score(img.scores);
    if (order.size() > static_cast<std::size_t>(max_dets)) order.resize(static_cast<std::size_t>(max_dets));
    ScoredImage ranked;
    ranked.num_gt = img.num_gt;
    for (auto d : order) {
      ranked.scores.push_back(img.scores[d]);
      ranked.iou.push_back(std::move(img.iou[d]));
    }
    img = std::move(ranked);
    res.ground_truths += static_cast<std::int64_t>(img.num_gt);
    res.detections += static_cast<std::int64_t>(img.scores.size());
  }
  if (res.ground_truths == 0) throw ValidationError("no ground-truth instances to evaluate against");

  // pooled ranking: image order first, then per-image rank, stable by score
  std::vector<double> pooled_scores;
  for (const auto& img : images) pooled_scores.insert(pooled_scores.end(), img.scores.begin(), img.scores.end());
  const auto pooled_order = rank_by_score(pooled_scores);

  double sum = 0.0;
  for (int t = 0; t < kNumThresholds; ++t) {
    std::vector<bool> flags_concat;
    std::int64_t fn = 0;
    for (const auto& img : images) {
      const auto m = match_detections(img.iou, img.num_gt, iou_thresholds()[t]);
      flags_concat.insert(flags_concat.end(), m.tp.begin(), m.tp.end());
      fn += m.unmatched_gt;
    }
    std::vector<bool> ranked(flags_concat.size());
    for (std::size_t i = 0; i < pooled_order.size(); ++i) ranked[i] = flags_concat[pooled_order[i]];
    const double ap = average_precision(ranked, res.ground_truths).value_or(0.0);
    res.per_threshold_ap[t] = 100.0 * ap;
    sum += ap;
    if (t == 0) {
      res.counts.tp = std::count(ranked.begin(), ranked.end(), true);
      res.counts.fp = static_cast<std::int64_t>(ranked.size()) - res.counts.tp;
      res.counts.fn = fn;
    }
  }
  res.map = 100.0 * sum / kNumThresholds;
  res.map50 = res.per_threshold_ap[0];
  res.map75 = res.per_threshold_ap[5];
  return res;
}

EvalResult evaluate_coco(const std::vector<EvalItem>& items, int max_dets, int workers) {
  std::vector<const EvalItem*> sorted;
  for (const auto& it : items) sorted.push_back(&it);
  std::stable_sort(sorted.begin(), sorted.end(), [](auto a, auto b) { return a->image_id < b->image_id; });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i]->image_id == sorted[i - 1]->image_id) {
      throw ValidationError("image " + std::to_string(sorted[i]->image_id) + " appears twice");
    }
  }

  std::vector<ScoredImage> images(sorted.size());
  parallel_for(sorted.size(), workers, [&](std::size_t i) {
    const EvalItem& item = *sorted[i];
    const geometry::RlePayload* ref = !item.ground_truths.empty() ? &item.ground_truths.front()
                                      : !item.predictions.empty() ? &item.predictions.front().mask
                                                                  : nullptr;
    auto check = [&](const geometry::RlePayload& m, const char* what) {
      if (m.width != ref->width || m.height != ref->height) {
        throw ValidationError("image " + std::to_string(item.image_id) + ": " + what + " mask is " +
                              std::to_string(m.width) + "x" + std::to_string(m.height) + ", expected " +
                              std::to_string(ref->width) + "x" + std::to_string(ref->height));
      }
    };
    auto& img = images[i];
    img.num_gt = item.ground_truths.size();
    for (const auto& g : item.ground_truths) check(g, "ground-truth");
    for (const auto& d : item.predictions) {
      check(d.mask, "predicted");
      img.scores.push_back(d.score);
      std::vector<double> row;
      row.reserve(item.ground_truths.size());
      for (const auto& g : item.ground_truths) row.push_back(geometry::rle_iou(d.mask, g));
      img.iou.push_back(std::move(row));
    }
  });
  return evaluate_scored(std::move(images), max_dets);
}

EvalResult evaluate_polygons(const std::vector<geometry::PolygonGeo>& ground_truths,
                             const std::vector<geometry::PolygonGeo>& predictions, int max_dets) {
  ScoredImage img;
  img.num_gt = ground_truths.size();
  std::vector<geometry::Rect> gt_bounds;
  for (const auto& g : ground_truths) gt_bounds.push_back(g.bounds());
  for (const auto& p : predictions) {
    img.scores.push_back(p.score());
    const auto pb = p.bounds();
    std::vector<double> row(ground_truths.size(), 0.0);
    for (std::size_t g = 0; g < ground_truths.size(); ++g) {
      if (pb.intersects(gt_bounds[g])) row[g] = geometry::polygon_iou(p, ground_truths[g]);
    }
    img.iou.push_back(std::move(row));
  }
  std::vector<ScoredImage> images;
  images.push_back(std::move(img));
  return evaluate_scored(std::move(images), max_dets);
}

nlohmann::ordered_json EvalResult::to_json() const {
  nlohmann::ordered_json j;
  j["map"] = map;
  j["map50"] = map50;
  j["map75"] = map75;
  j["per_threshold_ap"] = nlohmann::ordered_json::array();
  for (int t = 0; t < kNumThresholds; ++t) {
    j["per_threshold_ap"].push_back({{"iou", (50 + 5 * t) / 100.0}, {"ap", per_threshold_ap[t]}});
  }
  j["counts"] = {{"iou", 0.5}, {"tp", counts.tp}, {"fp", counts.fp}, {"fn", counts.fn}};
  j["images"] = images;
  j["ground_truths"] = ground_truths;
  j["detections"] = detections;
  return j;
}

}  // namespace crownstitch::eval
