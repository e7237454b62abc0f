#pragma once

// Exhaustive reference for the COCO protocol: pixel-counted IoU, matching
// redone from scratch for every ranking prefix, interpolated precision taken
// straight from its definition (best precision at recall >= r).

#include <algorithm>
#include <array>
#include <numeric>
#include <random>
#include <vector>

#include "crownstitch/eval/metrics.hpp"
#include "crownstitch/geometry/rle.hpp"

namespace crownstitch::testing {

inline double pixel_iou(const geometry::BinaryMask& a, const geometry::BinaryMask& b) {
  long inter = 0, uni = 0;
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x) {
      inter += a.get(x, y) && b.get(x, y);
      uni += a.get(x, y) || b.get(x, y);
    }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

inline geometry::RlePayload rect_rle(int w, int h, geometry::PixelRect r) {
  geometry::BinaryMask m(w, h);
  m.fill_rect(r);
  return geometry::rle_encode(m);
}

// The 1-GT / 2-prediction case: IoU 0.9 at score 0.9, IoU 0 at score 0.95.
inline std::vector<eval::EvalItem> derived_case() {
  eval::EvalItem item{1, {}, {rect_rle(20, 20, {5, 5, 10, 10})}};
  item.predictions.push_back({0.9, rect_rle(20, 20, {5, 5, 10, 9})});    // 90 / 100
  item.predictions.push_back({0.95, rect_rle(20, 20, {0, 16, 20, 4})});  // disjoint
  return {item};
}

// Per-threshold AP as fractions in [0, 1].
inline std::array<double, eval::kNumThresholds> oracle_aps(const std::vector<eval::EvalItem>& items_in,
                                                            int max_dets = 100) {
  auto items = items_in;
  std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.image_id < b.image_id; });

  struct Det {
    double score;
    std::size_t image;
    std::vector<double> iou;  // against that image's GTs
  };
  std::vector<Det> pooled;
  std::vector<std::size_t> gts_per_image;
  long total_gt = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto preds = items[i].predictions;
    std::stable_sort(preds.begin(), preds.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
    if (preds.size() > static_cast<std::size_t>(max_dets)) preds.resize(static_cast<std::size_t>(max_dets));
    gts_per_image.push_back(items[i].ground_truths.size());
    total_gt += static_cast<long>(items[i].ground_truths.size());
    for (const auto& p : preds) {
      const auto pm = geometry::rle_decode(p.mask);
      Det d{p.score, i, {}};
      for (const auto& g : items[i].ground_truths) d.iou.push_back(pixel_iou(pm, geometry::rle_decode(g)));
      pooled.push_back(std::move(d));
    }
  }
  std::stable_sort(pooled.begin(), pooled.end(), [](const auto& a, const auto& b) { return a.score > b.score; });

  std::array<double, eval::kNumThresholds> out{};
  for (int t = 0; t < eval::kNumThresholds; ++t) {
    const double thr = eval::iou_thresholds()[t];
    std::vector<double> precision, recall;
    for (std::size_t k = 1; k <= pooled.size(); ++k) {
      std::vector<std::vector<bool>> taken(items.size());
      for (std::size_t i = 0; i < items.size(); ++i) taken[i].assign(gts_per_image[i], false);
      long tp = 0;
      for (std::size_t d = 0; d < k; ++d) {
        const auto& det = pooled[d];
        long best = -1;
        double best_iou = -1.0;
        for (std::size_t g = 0; g < det.iou.size(); ++g) {
          if (taken[det.image][g] || det.iou[g] < thr) continue;
          if (det.iou[g] >= best_iou) best_iou = det.iou[g], best = static_cast<long>(g);
        }
        if (best >= 0) {
          taken[det.image][static_cast<std::size_t>(best)] = true;
          ++tp;
        }
      }
      precision.push_back(static_cast<double>(tp) / static_cast<double>(k));
      recall.push_back(total_gt ? static_cast<double>(tp) / static_cast<double>(total_gt) : 0.0);
    }
    double sum = 0.0;
    for (double r : eval::recall_points()) {
      double best = 0.0;
      for (std::size_t k = 0; k < precision.size(); ++k)
        if (recall[k] >= r) best = std::max(best, precision[k]);
      sum += best;
    }
    out[t] = sum / eval::kNumRecallPoints;
  }
  return out;
}

// <= 5 images, <= 6 ground truths and a few predictions each, <= 32x32.
inline std::vector<eval::EvalItem> random_eval_case(std::mt19937& rng) {
  std::uniform_int_distribution<int> n_img(1, 5), n_obj(0, 6), side(4, 32), coin(0, 9);
  std::vector<eval::EvalItem> items;
  std::vector<std::int64_t> ids(40);
  std::iota(ids.begin(), ids.end(), 1);
  std::shuffle(ids.begin(), ids.end(), rng);
  const int images = n_img(rng);
  for (int i = 0; i < images; ++i) {
    const int w = side(rng), h = side(rng);
    eval::EvalItem item{ids[static_cast<std::size_t>(i)], {}, {}};
    auto blob = [&] {
      geometry::BinaryMask m(w, h);
      std::uniform_int_distribution<int> bx(0, w - 1), by(0, h - 1);
      const int x0 = bx(rng), y0 = by(rng);
      m.fill_rect({x0, y0, 1 + std::uniform_int_distribution<int>(0, w - 1 - x0)(rng),
                   1 + std::uniform_int_distribution<int>(0, h - 1 - y0)(rng)});
      return m;
    };
    std::vector<geometry::BinaryMask> gts;
    for (int g = n_obj(rng); g > 0; --g) gts.push_back(blob());
    for (const auto& g : gts) item.ground_truths.push_back(geometry::rle_encode(g));
    for (const auto& g : gts) {
      if (coin(rng) < 2) continue;
      // a perturbed copy of the GT
      geometry::BinaryMask p = g;
      const auto box = g.bounding_box();
      p.fill_rect({box.x0, box.y0, std::min(w - box.x0, box.width + coin(rng) % 3), box.height}, true);
      if (coin(rng) < 4) p.fill_rect({box.x0, box.y0, box.width, std::max(1, box.height / 2)}, false);
      if (p.empty()) continue;
      // coarse scores make ties common
      const double score = coin(rng) < 4 ? coin(rng) / 10.0 : std::uniform_real_distribution<double>(0, 1)(rng);
      item.predictions.push_back({score, geometry::rle_encode(p)});
    }
    for (int f = coin(rng) % 3; f > 0; --f) item.predictions.push_back({coin(rng) / 10.0, geometry::rle_encode(blob())});
    std::shuffle(item.predictions.begin(), item.predictions.end(), rng);
    items.push_back(std::move(item));
  }
  return items;
}

}  // namespace crownstitch::testing
