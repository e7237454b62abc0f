#include "crownstitch/pipeline/instances.hpp"

#include <algorithm>
#include <numeric>

#include <boost/pending/disjoint_sets.hpp>

#include "crownstitch/geometry/rle.hpp"

namespace crownstitch::pipeline {

std::vector<backends::InstancePrediction> filter_by_score(std::vector<backends::InstancePrediction> instances,
                                                          double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ValidationError("score threshold must be in [0, 1]");
  std::erase_if(instances, [&](const auto& p) { return !(p.score >= threshold); });
  return instances;
}

std::optional<PlacedInstance> place_instance(const backends::InstancePrediction& pred, const TileRect& tile,
                                             int index, const PixelRect& extent) {
  const BinaryMask full = geometry::rle_decode(pred.mask);
  const PixelRect local = full.bounding_box();
  if (local.empty()) return std::nullopt;
  const PixelRect global{local.x0 + tile.x0, local.y0 + tile.y0, local.width, local.height};
  const PixelRect kept = global.intersected(extent);
  if (kept.empty()) return std::nullopt;
  BinaryMask window = full.crop({kept.x0 - tile.x0, kept.y0 - tile.y0, kept.width, kept.height});
  // clipping may have removed the pixels that defined the box
  const PixelRect tight = window.bounding_box();
  if (tight.empty()) return std::nullopt;
  PlacedInstance out;
  out.score = pred.score;
  out.bbox = {kept.x0 + tight.x0, kept.y0 + tight.y0, tight.width, tight.height};
  out.mask = tight == PixelRect{0, 0, kept.width, kept.height} ? std::move(window) : window.crop(tight);
  out.key = {tile.row, tile.col, index};
  return out;
}

bool touches_cut_edge(const PlacedInstance& inst, const TileRect& tile) {
  const auto& edge = tile.touches_raster_boundary;
  return (inst.bbox.x0 <= tile.x0 && !edge.left) || (inst.bbox.y0 <= tile.y0 && !edge.top) ||
         (inst.bbox.x1() >= tile.x0 + tile.size && !edge.right) ||
         (inst.bbox.y1() >= tile.y0 + tile.size && !edge.bottom);
}

namespace {

PlacedInstance fuse(const std::vector<const PlacedInstance*>& members) {
  PixelRect box = members.front()->bbox;
  for (const auto* m : members) box = box.united(m->bbox);
  PlacedInstance out;
  out.bbox = box;
  out.mask = BinaryMask(box.width, box.height);
  out.score = members.front()->score;
  out.key = members.front()->key;
  for (const auto* m : members) {
    out.score = std::max(out.score, m->score);
    out.key = std::min(out.key, m->key);
    const int dx = m->bbox.x0 - box.x0, dy = m->bbox.y0 - box.y0;
    for (int y = 0; y < m->bbox.height; ++y)
      for (int x = 0; x < m->bbox.width; ++x)
        if (m->mask.get(x, y)) out.mask.set(x + dx, y + dy);
  }
  return out;
}

// One round of grouping. Returns false when no pair qualified.
bool merge_round(std::vector<PlacedInstance>& items, double merge_iou) {
  const std::size_t n = items.size();
  std::vector<std::size_t> by_x(n);
  std::iota(by_x.begin(), by_x.end(), 0);
  std::sort(by_x.begin(), by_x.end(), [&](auto a, auto b) { return items[a].bbox.x0 < items[b].bbox.x0; });

  boost::disjoint_sets_with_storage<> sets(n);
  bool merged = false;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = items[by_x[i]];
    for (std::size_t j = i + 1; j < n && items[by_x[j]].bbox.x0 < a.bbox.x1(); ++j) {
      const auto& b = items[by_x[j]];
      if (!a.bbox.intersects(b.bbox)) continue;
      if (sets.find_set(by_x[i]) == sets.find_set(by_x[j])) continue;
      if (geometry::placed_mask_iou(a.mask, a.bbox, b.mask, b.bbox) >= merge_iou) {
        sets.union_set(by_x[i], by_x[j]);
        merged = true;
      }
    }
  }
  if (!merged) return false;

  std::vector<std::vector<const PlacedInstance*>> groups(n);
  for (std::size_t i = 0; i < n; ++i) groups[sets.find_set(i)].push_back(&items[i]);
  std::vector<PlacedInstance> next;
  for (auto& g : groups) {
    if (g.size() == 1) next.push_back(*g.front());
    else if (!g.empty()) next.push_back(fuse(g));
  }
  items = std::move(next);
  return true;
}

}  // namespace

std::vector<PlacedInstance> merge_instances(std::vector<PlacedInstance> instances, double merge_iou) {
  if (!(merge_iou >= 0.0 && merge_iou <= 1.0)) throw ValidationError("merge IoU must be in [0, 1]");
  while (merge_round(instances, merge_iou)) {
  }
  std::sort(instances.begin(), instances.end(), [](const auto& a, const auto& b) { return a.key < b.key; });
  return instances;
}

}  // namespace crownstitch::pipeline
