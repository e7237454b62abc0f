#include "crownstitch/geometry/mask.hpp"

#include <algorithm>
#include <numeric>
#include <queue>

#include "crownstitch/error.hpp"

namespace crownstitch::geometry {

BinaryMask::BinaryMask(int width, int height)
    : BinaryMask(width, height,
                 std::vector<std::uint8_t>(static_cast<std::size_t>(std::max(width, 0)) *
                                           std::max(height, 0))) {}

BinaryMask::BinaryMask(int width, int height, std::vector<std::uint8_t> bits)
    : width_(width), height_(height), bits_(std::move(bits)) {
  if (width < 0 || height < 0) throw ValidationError("mask dimensions must be non-negative");
  if (bits_.size() != static_cast<std::size_t>(width) * height) {
    throw ValidationError("mask bit count does not match its dimensions");
  }
  for (auto& b : bits_) b = b ? 1 : 0;
}

void BinaryMask::fill_rect(const PixelRect& r, bool v) {
  const PixelRect c = r.intersected({0, 0, width_, height_});
  for (int y = c.y0; y < c.y1(); ++y) {
    std::fill_n(bits_.begin() + static_cast<std::ptrdiff_t>(index(c.x0, y)), c.width, v ? 1 : 0);
  }
}

std::int64_t BinaryMask::area() const {
  return std::accumulate(bits_.begin(), bits_.end(), std::int64_t{0});
}

PixelRect BinaryMask::bounding_box() const {
  int x0 = width_, y0 = height_, x1 = -1, y1 = -1;
  for (int y = 0; y < height_; ++y) {
    const std::uint8_t* row = bits_.data() + index(0, y);
    for (int x = 0; x < width_; ++x) {
      if (!row[x]) continue;
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  if (x1 < 0) return {};
  return {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

BinaryMask BinaryMask::crop(const PixelRect& r) const {
  BinaryMask out(r.width, r.height);
  const PixelRect c = r.intersected({0, 0, width_, height_});
  for (int y = c.y0; y < c.y1(); ++y) {
    std::copy_n(bits_.begin() + static_cast<std::ptrdiff_t>(index(c.x0, y)), c.width,
                out.bits_.begin() + static_cast<std::ptrdiff_t>(out.index(c.x0 - r.x0, y - r.y0)));
  }
  return out;
}

double mask_iou(const BinaryMask& a, const BinaryMask& b) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw ValidationError("mask_iou: dimension mismatch");
  }
  std::int64_t inter = 0, uni = 0;
  const auto& x = a.bits();
  const auto& y = b.bits();
  for (std::size_t i = 0; i < x.size(); ++i) {
    inter += x[i] & y[i];
    uni += x[i] | y[i];
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double placed_mask_iou(const BinaryMask& a, const PixelRect& a_frame, const BinaryMask& b,
                       const PixelRect& b_frame) {
  const std::int64_t area_a = a.area();
  const std::int64_t area_b = b.area();
  if (area_a + area_b == 0) return 0.0;
  const PixelRect overlap = a_frame.intersected(b_frame);
  std::int64_t inter = 0;
  for (int y = overlap.y0; y < overlap.y1(); ++y) {
    for (int x = overlap.x0; x < overlap.x1(); ++x) {
      inter += a.get(x - a_frame.x0, y - a_frame.y0) & b.get(x - b_frame.x0, y - b_frame.y0);
    }
  }
  return static_cast<double>(inter) / static_cast<double>(area_a + area_b - inter);
}

namespace {

// Labels 4-connected components; returns label per pixel (0 = background)
// and the size of each label (index 0 unused).
std::vector<int> label_components(const BinaryMask& mask, std::vector<std::int64_t>& sizes) {
  const int w = mask.width();
  const int h = mask.height();
  std::vector<int> labels(static_cast<std::size_t>(w) * h, 0);
  sizes.assign(1, 0);
  std::queue<std::pair<int, int>> q;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!mask.get(x, y) || labels[static_cast<std::size_t>(y) * w + x]) continue;
      const int label = static_cast<int>(sizes.size());
      sizes.push_back(0);
      labels[static_cast<std::size_t>(y) * w + x] = label;
      q.push({x, y});
      while (!q.empty()) {
        const auto [cx, cy] = q.front();
        q.pop();
        ++sizes[label];
        const int nx[4] = {cx - 1, cx + 1, cx, cx};
        const int ny[4] = {cy, cy, cy - 1, cy + 1};
        for (int k = 0; k < 4; ++k) {
          if (nx[k] < 0 || ny[k] < 0 || nx[k] >= w || ny[k] >= h) continue;
          int& l = labels[static_cast<std::size_t>(ny[k]) * w + nx[k]];
          if (l || !mask.get(nx[k], ny[k])) continue;
          l = label;
          q.push({nx[k], ny[k]});
        }
      }
    }
  }
  return labels;
}

}  // namespace

BinaryMask largest_component(const BinaryMask& mask) {
  std::vector<std::int64_t> sizes;
  const std::vector<int> labels = label_components(mask, sizes);
  if (sizes.size() <= 1) return BinaryMask(mask.width(), mask.height());
  if (sizes.size() == 2) return mask;
  const auto best = static_cast<int>(std::max_element(sizes.begin() + 1, sizes.end()) - sizes.begin());
  std::vector<std::uint8_t> bits(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) bits[i] = labels[i] == best ? 1 : 0;
  return {mask.width(), mask.height(), std::move(bits)};
}

int count_components(const BinaryMask& mask) {
  std::vector<std::int64_t> sizes;
  label_components(mask, sizes);
  return static_cast<int>(sizes.size()) - 1;
}

}  // namespace crownstitch::geometry
