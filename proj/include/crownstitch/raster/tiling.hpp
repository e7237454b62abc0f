#pragma once

#include <string>
#include <vector>

#include "crownstitch/raster/georaster.hpp"

namespace crownstitch::raster {

// Half-open pixel rectangle [x0, x0 + width) x [y0, y0 + height).
struct PixelRect {
  int x0 = 0;
  int y0 = 0;
  int width = 0;
  int height = 0;

  int x1() const { return x0 + width; }
  int y1() const { return y0 + height; }
  bool empty() const { return width <= 0 || height <= 0; }
  bool intersects(const PixelRect& o) const {
    return x0 < o.x1() && o.x0 < x1() && y0 < o.y1() && o.y0 < y1();
  }
  PixelRect united(const PixelRect& o) const;
  PixelRect intersected(const PixelRect& o) const;
  bool operator==(const PixelRect&) const = default;
};

struct BoundaryContact {
  bool left = false;
  bool top = false;
  bool right = false;
  bool bottom = false;
  bool operator==(const BoundaryContact&) const = default;
};

// A square tile of a parent raster. Row/col index the tile within the grid.
struct TileRect {
  int x0 = 0;
  int y0 = 0;
  int size = 0;
  int row = 0;
  int col = 0;
  // Which tile edges coincide with (or lie beyond) the parent raster edge.
  BoundaryContact touches_raster_boundary;

  PixelRect bounds() const { return {x0, y0, size, size}; }
  std::string id() const { return "tile_" + std::to_string(row) + "_" + std::to_string(col); }
  bool operator==(const TileRect&) const = default;
};

// Origins along one axis: 0, stride, 2*stride, ... with the last one clamped
// to dimension - tile_size. A dimension smaller than the tile yields {0}.
std::vector<int> tile_origins(int dimension, int tile_size, int stride);

int tile_stride(int tile_size, double overlap_fraction);

// Row-major overlapping tile grid covering every pixel of a width x height
// raster.
std::vector<TileRect> compute_tile_grid(int width, int height, int tile_size,
                                        double overlap_fraction);

struct TileImage {
  TileRect rect;
  // size x size raster whose transform is the parent's shifted to the tile
  // origin. Samples outside the parent are zero.
  GeoRaster raster;
  // Part of the tile backed by real parent pixels, in tile coordinates.
  PixelRect valid_region;
};

TileImage extract_tile(const GeoRaster& raster, const TileRect& rect);

}  // namespace crownstitch::raster
