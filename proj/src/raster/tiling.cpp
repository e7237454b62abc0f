#include "crownstitch/raster/tiling.hpp"

#include <algorithm>
#include <cmath>

#include "crownstitch/error.hpp"

namespace crownstitch::raster {

PixelRect PixelRect::united(const PixelRect& o) const {
  if (empty()) return o;
  if (o.empty()) return *this;
  const int nx0 = std::min(x0, o.x0);
  const int ny0 = std::min(y0, o.y0);
  return {nx0, ny0, std::max(x1(), o.x1()) - nx0, std::max(y1(), o.y1()) - ny0};
}

PixelRect PixelRect::intersected(const PixelRect& o) const {
  const int nx0 = std::max(x0, o.x0);
  const int ny0 = std::max(y0, o.y0);
  const int nx1 = std::min(x1(), o.x1());
  const int ny1 = std::min(y1(), o.y1());
  if (nx1 <= nx0 || ny1 <= ny0) return {nx0, ny0, 0, 0};
  return {nx0, ny0, nx1 - nx0, ny1 - ny0};
}

int tile_stride(int tile_size, double overlap_fraction) {
  if (tile_size < 1) throw ValidationError("tile size must be >= 1");
  if (!(overlap_fraction >= 0.0 && overlap_fraction < 1.0)) {
    throw ValidationError("overlap fraction must lie in [0, 1)");
  }
  // The epsilon absorbs representation error such as 1000 * (1 - 0.9) = 99.999...
  const auto stride = static_cast<int>(std::floor(tile_size * (1.0 - overlap_fraction) + 1e-9));
  return std::max(stride, 1);
}

std::vector<int> tile_origins(int dimension, int tile_size, int stride) {
  std::vector<int> origins{0};
  if (dimension <= tile_size) return origins;
  while (origins.back() + tile_size < dimension) {
    int next = origins.back() + stride;
    if (next + tile_size > dimension) next = dimension - tile_size;
    if (next <= origins.back()) break;
    origins.push_back(next);
  }
  return origins;
}

std::vector<TileRect> compute_tile_grid(int width, int height, int tile_size,
                                        double overlap_fraction) {
  if (width < 1 || height < 1) throw ValidationError("raster dimensions must be at least 1x1");
  const int stride = tile_stride(tile_size, overlap_fraction);
  const std::vector<int> xs = tile_origins(width, tile_size, stride);
  const std::vector<int> ys = tile_origins(height, tile_size, stride);

  std::vector<TileRect> grid;
  grid.reserve(xs.size() * ys.size());
  for (std::size_t r = 0; r < ys.size(); ++r) {
    for (std::size_t c = 0; c < xs.size(); ++c) {
      TileRect t;
      t.x0 = xs[c];
      t.y0 = ys[r];
      t.size = tile_size;
      t.row = static_cast<int>(r);
      t.col = static_cast<int>(c);
      t.touches_raster_boundary = {t.x0 == 0, t.y0 == 0, t.x0 + tile_size >= width,
                                   t.y0 + tile_size >= height};
      grid.push_back(t);
    }
  }
  return grid;
}

TileImage extract_tile(const GeoRaster& raster, const TileRect& rect) {
  const int w = raster.width();
  const int h = raster.height();
  if (rect.size < 1 || rect.x0 < 0 || rect.y0 < 0 || rect.x0 + rect.size > std::max(w, rect.size) ||
      rect.y0 + rect.size > std::max(h, rect.size)) {
    throw ValidationError("tile " + rect.id() + " is inconsistent with a " + std::to_string(w) +
                          "x" + std::to_string(h) + " raster");
  }

  const PixelRect valid_parent = rect.bounds().intersected({0, 0, w, h});
  const PixelRect valid_local{0, 0, valid_parent.width, valid_parent.height};
  const int n = rect.size;
  const int bands = raster.bands();
  const AffineTransform tile_transform = raster.transform().translated(rect.x0, rect.y0);

  auto copy_rows = [&](auto src, auto& dst) {
    const std::size_t row_len = static_cast<std::size_t>(valid_parent.width) * bands;
    for (int y = 0; y < valid_parent.height; ++y) {
      const auto src_off =
          (static_cast<std::size_t>(valid_parent.y0 + y) * w + valid_parent.x0) * bands;
      const auto dst_off = static_cast<std::size_t>(y) * n * bands;
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(src_off), row_len,
                  dst.begin() + static_cast<std::ptrdiff_t>(dst_off));
    }
  };

  const std::size_t count = static_cast<std::size_t>(n) * n * bands;
  if (raster.sample_type() == SampleType::kUInt8) {
    std::vector<std::uint8_t> out(count, 0);
    copy_rows(raster.u8(), out);
    return {rect, GeoRaster::from_u8(n, n, bands, tile_transform, raster.crs(), std::move(out)),
            valid_local};
  }
  std::vector<float> out(count, 0.0f);
  copy_rows(raster.f32(), out);
  return {rect,
          GeoRaster::from_f32(n, n, tile_transform, raster.crs(), std::move(out), raster.nodata()),
          valid_local};
}

}  // namespace crownstitch::raster
