#include "crownstitch/raster/georaster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "crownstitch/error.hpp"

namespace crownstitch::raster {

namespace {
constexpr double kSquarePixelTolerance = 1e-6;
}

AffineTransform::AffineTransform(double origin_x, double scale_x, double origin_y, double scale_y)
    : origin_x_(origin_x), scale_x_(scale_x), origin_y_(origin_y), scale_y_(scale_y) {
  if (!std::isfinite(origin_x) || !std::isfinite(origin_y) || !std::isfinite(scale_x) ||
      !std::isfinite(scale_y)) {
    throw ValidationError("affine transform has non-finite terms");
  }
  if (scale_x == 0.0 || scale_y == 0.0) {
    throw ValidationError("affine transform has a zero pixel scale");
  }
}

AffineTransform AffineTransform::from_gdal(const std::array<double, 6>& gt) {
  if (gt[2] != 0.0 || gt[4] != 0.0) {
    throw ValidationError("rotated geotransforms are not supported (rotation terms must be 0)");
  }
  return {gt[0], gt[1], gt[3], gt[5]};
}

std::array<double, 6> AffineTransform::to_gdal() const {
  return {origin_x_, scale_x_, 0.0, origin_y_, 0.0, scale_y_};
}

AffineTransform AffineTransform::translated(double px, double py) const {
  const WorldPoint o = pixel_to_world(px, py);
  return {o.x, scale_x_, o.y, scale_y_};
}

GeoRaster GeoRaster::from_u8(int width, int height, int bands, AffineTransform transform,
                             std::string crs, std::vector<std::uint8_t> samples) {
  GeoRaster r;
  r.width_ = width;
  r.height_ = height;
  r.bands_ = bands;
  r.type_ = SampleType::kUInt8;
  r.transform_ = transform;
  r.crs_ = std::move(crs);
  r.u8_ = std::move(samples);
  r.validate();
  return r;
}

GeoRaster GeoRaster::from_f32(int width, int height, AffineTransform transform, std::string crs,
                              std::vector<float> samples, std::optional<float> nodata) {
  GeoRaster r;
  r.width_ = width;
  r.height_ = height;
  r.bands_ = 1;
  r.type_ = SampleType::kFloat32;
  r.transform_ = transform;
  r.crs_ = std::move(crs);
  r.nodata_ = nodata;
  r.f32_ = std::move(samples);
  r.validate();
  return r;
}

void GeoRaster::validate() const {
  if (width_ < 1 || height_ < 1) throw ValidationError("raster dimensions must be at least 1x1");
  if (bands_ < 1) throw ValidationError("raster must have at least one band");
  const auto expected = static_cast<std::size_t>(width_) * height_ * bands_;
  const std::size_t actual = type_ == SampleType::kUInt8 ? u8_.size() : f32_.size();
  if (actual != expected) {
    throw ValidationError("raster sample count " + std::to_string(actual) + " does not match " +
                          std::to_string(width_) + "x" + std::to_string(height_) + "x" +
                          std::to_string(bands_));
  }
  const double sx = std::abs(transform_.scale_x());
  const double sy = std::abs(transform_.scale_y());
  if (std::abs(sx - sy) > kSquarePixelTolerance) {
    throw ValidationError("non-square pixels are not supported (|scale_x| != |scale_y|)");
  }
}

double GeoRaster::gsd() const { return std::abs(transform_.scale_x()); }

std::span<const std::uint8_t> GeoRaster::u8() const {
  if (type_ != SampleType::kUInt8) throw ValidationError("raster does not hold 8-bit samples");
  return u8_;
}

std::span<const float> GeoRaster::f32() const {
  if (type_ != SampleType::kFloat32) throw ValidationError("raster does not hold float samples");
  return f32_;
}

float GeoRaster::value(int x, int y, int band) const {
  const auto i = (static_cast<std::size_t>(y) * width_ + x) * bands_ + band;
  return type_ == SampleType::kUInt8 ? static_cast<float>(u8_[i]) : f32_[i];
}

bool GeoRaster::is_nodata(float v) const {
  if (std::isnan(v)) return true;
  return nodata_.has_value() && v == *nodata_;
}

std::array<double, 4> GeoRaster::world_bounds() const {
  const WorldPoint a = transform_.pixel_to_world(0, 0);
  const WorldPoint b = transform_.pixel_to_world(width_, height_);
  return {std::min(a.x, b.x), std::min(a.y, b.y), std::max(a.x, b.x), std::max(a.y, b.y)};
}

}  // namespace crownstitch::raster
