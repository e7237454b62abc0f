#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "clipper.hpp"
#include "crownstitch/geometry/polygon.hpp"

namespace crownstitch::geometry {

namespace cl = ClipperLib;

// Integer frame for polygon booleans. The quantum is a power of two about
// 2^-40 of the extent, so dyadic inputs convert exactly and every result is
// computed without floating error.
class IntFrame {
 public:
  explicit IntFrame(const Rect& extent) : ox_(extent.min_x), oy_(extent.min_y) {
    const double size = std::max({extent.max_x - extent.min_x, extent.max_y - extent.min_y, 1e-12});
    q_ = std::ldexp(1.0, static_cast<int>(std::ceil(std::log2(size))) - kBits);
  }

  double quantum() const { return q_; }

  cl::IntPoint to_int(Point p) const {
    // Far-away coordinates (huge clip rects) are clamped; only their
    // relation to the geometry matters.
    const double lim = std::ldexp(1.0, kBits + 2);
    return {static_cast<cl::cInt>(std::llround(std::clamp((p.x - ox_) / q_, -lim, lim))),
            static_cast<cl::cInt>(std::llround(std::clamp((p.y - oy_) / q_, -lim, lim)))};
  }

  Point to_world(const cl::IntPoint& p) const {
    return {ox_ + static_cast<double>(p.X) * q_, oy_ + static_cast<double>(p.Y) * q_};
  }

  cl::Path to_path(const PolygonGeo& poly) const {
    cl::Path path;
    const auto& ring = poly.ring();
    for (std::size_t i = 0; i + 1 < ring.size(); ++i) path.push_back(to_int(ring[i]));
    return path;
  }

  cl::Path to_path(const Rect& r) const {
    return {to_int({r.min_x, r.min_y}), to_int({r.max_x, r.min_y}), to_int({r.max_x, r.max_y}),
            to_int({r.min_x, r.max_y})};
  }

  std::vector<Point> to_world(const cl::Path& path) const {
    std::vector<Point> out;
    out.reserve(path.size());
    for (const auto& p : path) out.push_back(to_world(p));
    return out;
  }

  double area(const cl::Path& path) const { return std::abs(cl::Area(path)) * q_ * q_; }

 private:
  static constexpr int kBits = 40;
  double ox_;
  double oy_;
  double q_ = 1.0;
};

inline Rect united(Rect a, const Rect& b) {
  a.min_x = std::min(a.min_x, b.min_x);
  a.min_y = std::min(a.min_y, b.min_y);
  a.max_x = std::max(a.max_x, b.max_x);
  a.max_y = std::max(a.max_y, b.max_y);
  return a;
}

inline cl::PolyTree run_clipper(cl::ClipType op, const cl::Paths& subject, const cl::Paths& clip) {
  cl::Clipper c;
  c.StrictlySimple(true);
  c.AddPaths(subject, cl::ptSubject, true);
  c.AddPaths(clip, cl::ptClip, true);
  cl::PolyTree tree;
  c.Execute(op, tree, cl::pftNonZero, cl::pftNonZero);
  return tree;
}

// Splits a region (outer ring followed by its holes) along vertical lines
// through each hole until every piece is a simple ring. Exact in the integer
// frame, so total area is preserved.
inline void split_holes(const cl::Paths& region, std::vector<cl::Path>& out, int depth = 0);

inline void collect_pieces(const cl::PolyNode& node, std::vector<cl::Path>& out, int depth) {
  for (const cl::PolyNode* outer : node.Childs) {
    cl::Paths region{outer->Contour};
    for (const cl::PolyNode* hole : outer->Childs) region.push_back(hole->Contour);
    split_holes(region, out, depth);
    // islands sitting inside holes
    for (const cl::PolyNode* hole : outer->Childs) collect_pieces(*hole, out, depth);
  }
}

inline void split_holes(const cl::Paths& region, std::vector<cl::Path>& out, int depth) {
  if (region.size() == 1 || depth > 64) {
    out.push_back(region.front());
    return;
  }
  cl::cInt hx0 = region[1].front().X, hx1 = hx0;
  for (const auto& p : region[1]) {
    hx0 = std::min(hx0, p.X);
    hx1 = std::max(hx1, p.X);
  }
  if (hx1 - hx0 < 2) {
    // sub-quantum sliver hole: nothing to cut through, treat it as filled
    cl::Paths rest(region.begin(), region.begin() + 1);
    rest.insert(rest.end(), region.begin() + 2, region.end());
    split_holes(rest, out, depth + 1);
    return;
  }
  const cl::cInt cut = hx0 + (hx1 - hx0) / 2;
  cl::cInt x0 = cut, x1 = cut, y0 = region[0].front().Y, y1 = y0;
  for (const auto& p : region[0]) {
    x0 = std::min(x0, p.X);
    x1 = std::max(x1, p.X);
    y0 = std::min(y0, p.Y);
    y1 = std::max(y1, p.Y);
  }
  --x0, --y0, ++x1, ++y1;
  const cl::Path halves[2] = {{{x0, y0}, {cut, y0}, {cut, y1}, {x0, y1}},
                              {{cut, y0}, {x1, y0}, {x1, y1}, {cut, y1}}};
  for (const cl::Path& half : halves) {
    const cl::PolyTree tree = run_clipper(cl::ctIntersection, region, {half});
    collect_pieces(tree, out, depth + 1);
  }
}

inline std::vector<cl::Path> simple_pieces(const cl::PolyTree& tree) {
  std::vector<cl::Path> out;
  collect_pieces(tree, out, 0);
  return out;
}

}  // namespace crownstitch::geometry
