#pragma once

#include <cstdint>
#include <vector>

#include "crownstitch/raster/tiling.hpp"

namespace crownstitch::geometry {

using raster::PixelRect;

// Row-major binary mask; one byte per pixel (0 or 1).
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int width, int height);
  BinaryMask(int width, int height, std::vector<std::uint8_t> bits);

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return area() == 0; }

  bool get(int x, int y) const { return bits_[index(x, y)] != 0; }
  void set(int x, int y, bool v = true) { bits_[index(x, y)] = v ? 1 : 0; }
  void fill_rect(const PixelRect& r, bool v = true);

  std::int64_t area() const;
  // Tight bounding box of the set pixels; empty rect for an empty mask.
  PixelRect bounding_box() const;
  // Copy of the window `r` (which may extend past the mask; outside is 0).
  BinaryMask crop(const PixelRect& r) const;

  const std::vector<std::uint8_t>& bits() const { return bits_; }

  bool operator==(const BinaryMask&) const = default;

 private:
  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width_ + x; }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

// |a & b| / |a | b|, 0 when both are empty. Dimensions must match.
double mask_iou(const BinaryMask& a, const BinaryMask& b);

// IoU of two masks placed at different offsets of a shared pixel frame.
double placed_mask_iou(const BinaryMask& a, const PixelRect& a_frame, const BinaryMask& b,
                       const PixelRect& b_frame);

// Largest 4-connected component (ties: the one reached first in row-major
// order). Empty input yields an empty mask.
BinaryMask largest_component(const BinaryMask& mask);

// Number of 4-connected components.
int count_components(const BinaryMask& mask);

}  // namespace crownstitch::geometry
