#include "crownstitch/geometry/polygon.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/geometry.hpp>
#include <boost/geometry/geometries/point_xy.hpp>
#include <boost/geometry/geometries/polygon.hpp>

#include "crownstitch/error.hpp"
#include "geometry/clip_adapt.hpp"

namespace crownstitch::geometry {

double signed_area(const std::vector<Point>& ring) {
  const std::size_t n = ring.size();
  if (n < 3) return 0.0;
  // Shift to the first vertex to keep the products small for projected
  // coordinates with large offsets.
  const double ox = ring[0].x;
  const double oy = ring[0].y;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Point& a = ring[i];
    const Point& b = ring[(i + 1) % n];
    acc += (a.x - ox) * (b.y - oy) - (b.x - ox) * (a.y - oy);
  }
  return 0.5 * acc;
}

PolygonGeo PolygonGeo::from_ring(std::vector<Point> ring, double score) {
  std::vector<Point> pts;
  pts.reserve(ring.size() + 1);
  for (const Point& p : ring) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw ValidationError("polygon has non-finite coordinates");
    }
    if (pts.empty() || pts.back().x != p.x || pts.back().y != p.y) pts.push_back(p);
  }
  while (pts.size() > 1 && pts.front().x == pts.back().x && pts.front().y == pts.back().y) {
    pts.pop_back();
  }
  if (pts.size() < 3) throw ValidationError("polygon needs at least three distinct vertices");
  double area = signed_area(pts);
  if (area == 0.0) throw ValidationError("polygon has zero area");
  if (area < 0.0) {
    std::reverse(pts.begin(), pts.end());
    area = -area;
  }
  pts.push_back(pts.front());

  PolygonGeo poly;
  poly.ring_ = std::move(pts);
  poly.score_ = score;
  poly.area_ = area;
  return poly;
}

Rect PolygonGeo::bounds() const {
  Rect r{ring_[0].x, ring_[0].y, ring_[0].x, ring_[0].y};
  for (const Point& p : ring_) {
    r.min_x = std::min(r.min_x, p.x);
    r.min_y = std::min(r.min_y, p.y);
    r.max_x = std::max(r.max_x, p.x);
    r.max_y = std::max(r.max_y, p.y);
  }
  return r;
}

Point PolygonGeo::centroid() const {
  const double ox = ring_[0].x;
  const double oy = ring_[0].y;
  double cx = 0.0, cy = 0.0, a2 = 0.0;
  for (std::size_t i = 0; i + 1 < ring_.size(); ++i) {
    const double x0 = ring_[i].x - ox, y0 = ring_[i].y - oy;
    const double x1 = ring_[i + 1].x - ox, y1 = ring_[i + 1].y - oy;
    const double cross = x0 * y1 - x1 * y0;
    a2 += cross;
    cx += (x0 + x1) * cross;
    cy += (y0 + y1) * cross;
  }
  return {ox + cx / (3.0 * a2), oy + cy / (3.0 * a2)};
}

PolygonGeo PolygonGeo::with_score(double score) const {
  PolygonGeo p = *this;
  p.score_ = score;
  return p;
}

std::optional<std::string> validity_problem(const std::vector<Point>& ring) {
  namespace bg = boost::geometry;
  using bpoint = bg::model::d2::point_xy<double>;
  std::vector<Point> closed = ring;
  if (!closed.empty() && (closed.front().x != closed.back().x || closed.front().y != closed.back().y)) {
    closed.push_back(closed.front());
  }
  if (closed.size() < 4) return "ring has fewer than 4 points including closure";
  if (signed_area(closed) < 0.0) std::reverse(closed.begin(), closed.end());
  // shift so large projected offsets keep their low-order bits
  bg::model::polygon<bpoint, false, true> poly;
  for (const Point& q : closed) poly.outer().emplace_back(q.x - closed[0].x, q.y - closed[0].y);
  std::string message;
  if (!bg::is_valid(poly, message)) return message;
  return std::nullopt;
}

double intersection_area(const PolygonGeo& a, const PolygonGeo& b) {
  if (!a.bounds().intersects(b.bounds())) return 0.0;
  const IntFrame frame(united(a.bounds(), b.bounds()));
  cl::Paths out;
  cl::Clipper c;
  c.AddPath(frame.to_path(a), cl::ptSubject, true);
  c.AddPath(frame.to_path(b), cl::ptClip, true);
  c.Execute(cl::ctIntersection, out, cl::pftNonZero, cl::pftNonZero);
  double area = 0.0;
  for (const auto& path : out) area += cl::Area(path);
  return std::max(0.0, area) * frame.quantum() * frame.quantum();
}

double polygon_iou(const PolygonGeo& a, const PolygonGeo& b) {
  if (!(a.area() > 0.0) || !(b.area() > 0.0)) throw ValidationError("polygon_iou: degenerate polygon");
  const double inter = intersection_area(a, b);
  if (inter <= 0.0) return 0.0;
  return std::clamp(inter / (a.area() + b.area() - inter), 0.0, 1.0);
}

std::vector<PolygonGeo> clip_polygon_to_rect(const PolygonGeo& poly, const Rect& rect,
                                             double min_fragment_area) {
  const Rect pb = poly.bounds();
  if (pb.min_x >= rect.min_x && pb.max_x <= rect.max_x && pb.min_y >= rect.min_y &&
      pb.max_y <= rect.max_y) {
    if (poly.area() < min_fragment_area) return {};
    return {poly};
  }
  if (!pb.intersects(rect)) return {};

  const IntFrame frame(pb);
  const cl::PolyTree tree = run_clipper(cl::ctIntersection, {frame.to_path(poly)}, {frame.to_path(rect)});
  std::vector<PolygonGeo> out;
  for (const auto& piece : simple_pieces(tree)) {
    if (piece.size() < 3 || frame.area(piece) < std::max(min_fragment_area, 0.0)) continue;
    try {
      out.push_back(PolygonGeo::from_ring(frame.to_world(piece), poly.score()));
    } catch (const ValidationError&) {
      // collapsed to zero area
    }
  }
  return out;
}

std::vector<PolygonGeo> resolve_overlaps(const std::vector<PolygonGeo>& features,
                                         const OverlapOptions& options) {
  if (features.empty()) return {};
  std::vector<std::size_t> order(features.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const PolygonGeo& pa = features[a];
    const PolygonGeo& pb = features[b];
    if (pa.score() != pb.score()) return pa.score() > pb.score();
    if (pa.area() != pb.area()) return pa.area() > pb.area();
    return a < b;
  });

  Rect extent = features.front().bounds();
  for (const auto& f : features) extent = united(extent, f.bounds());
  // One frame for the whole set: accepted shapes are kept as integer paths,
  // so later differences subtract exactly what was emitted.
  const IntFrame frame(extent);
  struct Accepted {
    cl::Path shape;
    Rect bounds;
  };
  std::vector<Accepted> accepted;
  std::vector<PolygonGeo> out;

  for (const std::size_t idx : order) {
    const PolygonGeo& poly = features[idx];
    const Rect bounds = poly.bounds();
    const cl::Path path = frame.to_path(poly);
    cl::Paths blockers;
    for (const Accepted& a : accepted) {
      if (a.bounds.intersects(bounds)) blockers.push_back(a.shape);
    }

    std::optional<PolygonGeo> result;
    cl::Path kept = path;
    if (blockers.empty()) {
      result = poly;
    } else {
      const cl::PolyTree tree = run_clipper(cl::ctDifference, {path}, blockers);
      const auto pieces = simple_pieces(tree);
      const double original = std::abs(cl::Area(path));
      if (pieces.size() == 1 && std::abs(cl::Area(pieces[0])) == original) {
        result = poly;  // bounding boxes met but the shapes do not overlap
      } else {
        double best = 0.0;
        for (const auto& piece : pieces) {
          const double a = std::abs(cl::Area(piece));
          if (a <= best || piece.size() < 3) continue;
          try {
            result = PolygonGeo::from_ring(frame.to_world(piece), poly.score());
            kept = piece;
            best = a;
          } catch (const ValidationError&) {
          }
        }
      }
    }
    if (!result || result->area() < options.min_area) continue;
    accepted.push_back({std::move(kept), result->bounds()});
    out.push_back(std::move(*result));
  }
  return out;
}

}  // namespace crownstitch::geometry
