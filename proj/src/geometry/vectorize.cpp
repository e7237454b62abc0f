#include "crownstitch/geometry/vectorize.hpp"

#include <queue>
#include <stdexcept>
#include <unordered_map>

#include "crownstitch/error.hpp"

namespace crownstitch::geometry {

namespace {

// Component plus enclosed background, on a grid padded by one pixel so the
// outside is connected. Returns the padded grid and its offset.
std::vector<std::uint8_t> filled_region(const BinaryMask& component, const PixelRect& box, int& pw,
                                        int& ph) {
  pw = box.width + 2;
  ph = box.height + 2;
  std::vector<std::uint8_t> grid(static_cast<std::size_t>(pw) * ph, 1);
  std::vector<std::uint8_t> outside(grid.size(), 0);
  for (int y = 0; y < box.height; ++y) {
    for (int x = 0; x < box.width; ++x) {
      if (!component.get(box.x0 + x, box.y0 + y)) grid[static_cast<std::size_t>(y + 1) * pw + x + 1] = 0;
    }
  }
  for (int x = 0; x < pw; ++x) grid[x] = grid[static_cast<std::size_t>(ph - 1) * pw + x] = 0;
  for (int y = 0; y < ph; ++y) grid[static_cast<std::size_t>(y) * pw] = grid[static_cast<std::size_t>(y) * pw + pw - 1] = 0;

  std::queue<std::pair<int, int>> q;
  outside[0] = 1;
  q.push({0, 0});
  while (!q.empty()) {
    const auto [x, y] = q.front();
    q.pop();
    const int nx[4] = {x - 1, x + 1, x, x};
    const int ny[4] = {y, y, y - 1, y + 1};
    for (int k = 0; k < 4; ++k) {
      if (nx[k] < 0 || ny[k] < 0 || nx[k] >= pw || ny[k] >= ph) continue;
      const std::size_t i = static_cast<std::size_t>(ny[k]) * pw + nx[k];
      if (outside[i] || grid[i]) continue;
      outside[i] = 1;
      q.push({nx[k], ny[k]});
    }
  }
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = outside[i] ? 0 : 1;
  return grid;
}

}  // namespace

std::vector<Point> trace_outline(const BinaryMask& mask) {
  const BinaryMask component = largest_component(mask);
  const PixelRect box = component.bounding_box();
  if (box.empty()) throw NoGeometryError("cannot vectorize an empty mask");

  int pw = 0, ph = 0;
  const std::vector<std::uint8_t> grid = filled_region(component, box, pw, ph);
  auto filled = [&](int x, int y) {
    return x >= 0 && y >= 0 && x < pw && y < ph && grid[static_cast<std::size_t>(y) * pw + x];
  };

  // Directed boundary edges between grid vertices, one outgoing edge per
  // vertex for a hole-free 4-connected region.
  const auto key = [pw](int vx, int vy) {
    return static_cast<std::int64_t>(vy) * (pw + 1) + vx;
  };
  std::unordered_map<std::int64_t, std::int64_t> next;
  std::int64_t start = -1;
  auto add_edge = [&](int ax, int ay, int bx, int by) {
    const auto [it, inserted] = next.emplace(key(ax, ay), key(bx, by));
    if (!inserted) throw std::logic_error("pinched boundary while tracing mask outline");
    if (start < 0) start = it->first;
  };
  for (int y = 0; y < ph; ++y) {
    for (int x = 0; x < pw; ++x) {
      if (!filled(x, y)) continue;
      if (!filled(x, y - 1)) add_edge(x + 1, y, x, y);
      if (!filled(x - 1, y)) add_edge(x, y, x, y + 1);
      if (!filled(x, y + 1)) add_edge(x, y + 1, x + 1, y + 1);
      if (!filled(x + 1, y)) add_edge(x + 1, y + 1, x + 1, y);
    }
  }

  std::vector<std::pair<int, int>> verts;
  std::int64_t cur = start;
  do {
    verts.emplace_back(static_cast<int>(cur % (pw + 1)), static_cast<int>(cur / (pw + 1)));
    cur = next.at(cur);
  } while (cur != start);

  // Keep corners only.
  std::vector<Point> out;
  const std::size_t n = verts.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = verts[(i + n - 1) % n];
    const auto& c = verts[i];
    const auto& q = verts[(i + 1) % n];
    const int dx1 = c.first - p.first, dy1 = c.second - p.second;
    const int dx2 = q.first - c.first, dy2 = q.second - c.second;
    if (dx1 * dy2 - dy1 * dx2 == 0) continue;
    // Padded grid offset: padded vertex (1,1) is mask vertex (box.x0, box.y0).
    out.push_back({static_cast<double>(c.first - 1 + box.x0), static_cast<double>(c.second - 1 + box.y0)});
  }
  return out;
}

PolygonGeo vectorize_mask(const BinaryMask& mask, const raster::AffineTransform& transform,
                          double score) {
  std::vector<Point> ring = trace_outline(mask);
  for (Point& p : ring) p = transform.pixel_to_world(p.x, p.y);
  return PolygonGeo::from_ring(std::move(ring), score);
}

}  // namespace crownstitch::geometry
