#include "crownstitch/raster/chm.hpp"

#include <algorithm>
#include <cmath>

#include "crownstitch/error.hpp"

namespace crownstitch::raster {

std::optional<float> sample_bilinear(const GeoRaster& grid, double wx, double wy) {
  const PixelPoint p = grid.transform().world_to_pixel(wx, wy);
  if (p.x < 0.0 || p.y < 0.0 || p.x > grid.width() || p.y > grid.height()) return std::nullopt;

  const double u = std::clamp(p.x - 0.5, 0.0, static_cast<double>(grid.width() - 1));
  const double v = std::clamp(p.y - 0.5, 0.0, static_cast<double>(grid.height() - 1));
  const int ix = std::min(static_cast<int>(std::floor(u)), grid.width() - 1);
  const int iy = std::min(static_cast<int>(std::floor(v)), grid.height() - 1);
  const int jx = std::min(ix + 1, grid.width() - 1);
  const int jy = std::min(iy + 1, grid.height() - 1);
  const double fx = u - ix;
  const double fy = v - iy;

  double acc = 0.0;
  const int xs[2] = {ix, jx};
  const int ys[2] = {iy, jy};
  const double wxs[2] = {1.0 - fx, fx};
  const double wys[2] = {1.0 - fy, fy};
  for (int b = 0; b < 2; ++b) {
    for (int a = 0; a < 2; ++a) {
      const double w = wxs[a] * wys[b];
      if (w == 0.0) continue;
      const float s = grid.value(xs[a], ys[b]);
      if (grid.is_nodata(s)) return std::nullopt;
      acc += w * s;
    }
  }
  return static_cast<float>(acc);
}

namespace {

void require_single_band_float(const GeoRaster& r, const char* what) {
  if (r.bands() != 1 || r.sample_type() != SampleType::kFloat32) {
    throw ValidationError(std::string(what) + " must be a single-band float raster");
  }
}

bool extents_overlap(const GeoRaster& a, const GeoRaster& b) {
  const auto ea = a.world_bounds();
  const auto eb = b.world_bounds();
  return ea[0] < eb[2] && eb[0] < ea[2] && ea[1] < eb[3] && eb[1] < ea[3];
}

}  // namespace

GeoRaster compute_chm(const GeoRaster& dsm, const GeoRaster& dem) {
  require_single_band_float(dsm, "DSM");
  require_single_band_float(dem, "DEM");
  if (dsm.crs() != dem.crs()) {
    throw ValidationError("CRS mismatch: DSM is '" + dsm.crs() + "', DEM is '" + dem.crs() + "'");
  }
  if (!extents_overlap(dsm, dem)) throw ValidationError("DSM and DEM extents do not overlap");

  const float nodata = dsm.nodata().value_or(kDefaultChmNodata);
  const int w = dsm.width();
  const int h = dsm.height();
  std::vector<float> out(static_cast<std::size_t>(w) * h, nodata);
  const auto& t = dsm.transform();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float surface = dsm.value(x, y);
      if (dsm.is_nodata(surface)) continue;
      const WorldPoint c = t.pixel_to_world(x + 0.5, y + 0.5);
      const auto ground = sample_bilinear(dem, c.x, c.y);
      if (!ground) continue;
      out[static_cast<std::size_t>(y) * w + x] = std::max(0.0f, surface - *ground);
    }
  }
  return GeoRaster::from_f32(w, h, t, dsm.crs(), std::move(out), nodata);
}

GeoRaster resample_to_grid(const GeoRaster& source, const GeoRaster& target, float fill) {
  require_single_band_float(source, "resampling source");
  if (source.crs() != target.crs()) {
    throw ValidationError("CRS mismatch: '" + source.crs() + "' vs '" + target.crs() + "'");
  }
  const int w = target.width();
  const int h = target.height();
  if (source.width() == w && source.height() == h && source.transform() == target.transform()) {
    std::vector<float> copy(source.f32().begin(), source.f32().end());
    for (float& v : copy) {
      if (source.is_nodata(v)) v = fill;
    }
    return GeoRaster::from_f32(w, h, target.transform(), target.crs(), std::move(copy));
  }
  std::vector<float> out(static_cast<std::size_t>(w) * h, fill);
  const auto& t = target.transform();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const WorldPoint c = t.pixel_to_world(x + 0.5, y + 0.5);
      if (const auto v = sample_bilinear(source, c.x, c.y)) {
        out[static_cast<std::size_t>(y) * w + x] = *v;
      }
    }
  }
  return GeoRaster::from_f32(w, h, t, target.crs(), std::move(out));
}

}  // namespace crownstitch::raster
