#pragma once

#include <compare>
#include <optional>
#include <vector>

#include "crownstitch/backends/backend.hpp"
#include "crownstitch/geometry/mask.hpp"

namespace crownstitch::pipeline {

using geometry::BinaryMask;
using raster::PixelRect;
using raster::TileRect;

// Where an instance came from: grid position of its tile and its index in
// that tile's prediction list. Fused instances keep the smallest key of their
// members, which gives a completion-order independent output order.
struct InstanceKey {
  int tile_row = 0;
  int tile_col = 0;
  int index = 0;
  auto operator<=>(const InstanceKey&) const = default;
};

// A predicted instance moved into the orthomosaic pixel frame. Only the
// bounding window is stored: `mask` is bbox.width x bbox.height and has a set
// pixel on each side of the window.
struct PlacedInstance {
  double score = 0.0;
  PixelRect bbox;
  BinaryMask mask;
  InstanceKey key;

  bool operator==(const PlacedInstance&) const = default;
};

// Keeps instances whose score is >= threshold (inclusive).
std::vector<backends::InstancePrediction> filter_by_score(std::vector<backends::InstancePrediction> instances,
                                                          double threshold);

// Decodes the tile mask and moves it into the global frame, discarding
// pixels outside `extent` (tiles may hang over the mosaic edge). nullopt when
// nothing is left.
std::optional<PlacedInstance> place_instance(const backends::InstancePrediction& pred, const TileRect& tile,
                                             int index, const PixelRect& extent);

// True when the instance touches a tile edge that is a cut through the
// mosaic. Contact with an edge that lies on the mosaic boundary is allowed.
bool touches_cut_edge(const PlacedInstance& inst, const TileRect& tile);

// Fuses every connected group of instances whose pairwise mask IoU is >=
// merge_iou: mask = union, score = max. Grouping is repeated on the fused
// result until no pair qualifies, so the output is a fixpoint. Output is
// sorted by key.
std::vector<PlacedInstance> merge_instances(std::vector<PlacedInstance> instances, double merge_iou);

}  // namespace crownstitch::pipeline
