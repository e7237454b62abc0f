#pragma once

#include <optional>
#include <string>
#include <vector>

#include "crownstitch/raster/georaster.hpp"

namespace crownstitch::geometry {

using Point = raster::WorldPoint;

struct Rect {
  double min_x = 0.0;
  double min_y = 0.0;
  double max_x = 0.0;
  double max_y = 0.0;

  bool intersects(const Rect& o) const {
    return min_x < o.max_x && o.min_x < max_x && min_y < o.max_y && o.min_y < max_y;
  }
};

// Shoelace area, positive for counter-clockwise rings (y up). Accepts open or
// closed rings.
double signed_area(const std::vector<Point>& ring);

// Simple polygon (exterior ring only) with a confidence score. The ring is
// stored closed (first == last) and counter-clockwise.
class PolygonGeo {
 public:
  // Closes the ring, drops repeated consecutive vertices and normalizes
  // orientation. Throws ValidationError for fewer than three distinct
  // vertices or zero area. Simplicity is not checked here; see
  // validity_problem().
  static PolygonGeo from_ring(std::vector<Point> ring, double score = 0.0);

  const std::vector<Point>& ring() const { return ring_; }
  double score() const { return score_; }
  double area() const { return area_; }
  Rect bounds() const;
  Point centroid() const;

  PolygonGeo with_score(double score) const;

 private:
  std::vector<Point> ring_;
  double score_ = 0.0;
  double area_ = 0.0;
};

// Reason the ring is not a valid simple polygon (self-intersection, spike,
// too few points), or nullopt when it is valid.
std::optional<std::string> validity_problem(const std::vector<Point>& ring);

double intersection_area(const PolygonGeo& a, const PolygonGeo& b);

// area(a & b) / area(a | b); 0 for disjoint or edge-touching polygons.
double polygon_iou(const PolygonGeo& a, const PolygonGeo& b);

// Pieces of `poly` inside the axis-aligned rect. Pieces with area below
// `min_fragment_area` are dropped. Pieces that would carry holes are split
// into simple polygons so no area is lost.
std::vector<PolygonGeo> clip_polygon_to_rect(const PolygonGeo& poly, const Rect& rect,
                                             double min_fragment_area = 0.0);

struct OverlapOptions {
  double min_area = 1.0;
};

// Makes polygons pairwise disjoint. Inputs are ranked by score (descending),
// then area (descending), then input position; each is replaced by its
// difference with everything ranked above it, keeping the largest piece.
// Results below `min_area` are dropped. Output keeps the ranking order.
std::vector<PolygonGeo> resolve_overlaps(const std::vector<PolygonGeo>& features,
                                         const OverlapOptions& options = {});

}  // namespace crownstitch::geometry
