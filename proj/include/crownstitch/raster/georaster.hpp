#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace crownstitch::raster {

struct WorldPoint {
  double x = 0.0;
  double y = 0.0;
};

struct PixelPoint {
  double x = 0.0;
  double y = 0.0;
};

// North-up affine georeferencing. Pixel (px, py) addresses the pixel
// corner; the center of pixel (i, j) is (i + 0.5, j + 0.5).
class AffineTransform {
 public:
  AffineTransform() = default;
  AffineTransform(double origin_x, double scale_x, double origin_y, double scale_y);

  // GDAL geotransform order: origin_x, scale_x, rot_x, origin_y, rot_y, scale_y.
  // Non-zero rotation terms are rejected.
  static AffineTransform from_gdal(const std::array<double, 6>& gt);
  std::array<double, 6> to_gdal() const;

  static AffineTransform identity() { return {0.0, 1.0, 0.0, 1.0}; }

  double origin_x() const { return origin_x_; }
  double origin_y() const { return origin_y_; }
  double scale_x() const { return scale_x_; }
  double scale_y() const { return scale_y_; }

  WorldPoint pixel_to_world(double px, double py) const {
    return {origin_x_ + px * scale_x_, origin_y_ + py * scale_y_};
  }
  PixelPoint world_to_pixel(double wx, double wy) const {
    return {(wx - origin_x_) / scale_x_, (wy - origin_y_) / scale_y_};
  }

  // Transform of a sub-grid whose pixel (0,0) sits at (px, py) of this grid.
  AffineTransform translated(double px, double py) const;

  bool operator==(const AffineTransform&) const = default;

 private:
  double origin_x_ = 0.0;
  double scale_x_ = 1.0;
  double origin_y_ = 0.0;
  double scale_y_ = 1.0;
};

enum class SampleType { kUInt8, kFloat32 };

// Immutable pixel grid with georeferencing. Samples are stored
// pixel-interleaved: index = (y * width + x) * bands + band.
class GeoRaster {
 public:
  static GeoRaster from_u8(int width, int height, int bands, AffineTransform transform,
                           std::string crs, std::vector<std::uint8_t> samples);
  static GeoRaster from_f32(int width, int height, AffineTransform transform, std::string crs,
                            std::vector<float> samples, std::optional<float> nodata = std::nullopt);

  int width() const { return width_; }
  int height() const { return height_; }
  int bands() const { return bands_; }
  SampleType sample_type() const { return type_; }
  const AffineTransform& transform() const { return transform_; }
  const std::string& crs() const { return crs_; }
  std::optional<float> nodata() const { return nodata_; }
  double gsd() const;

  std::span<const std::uint8_t> u8() const;
  std::span<const float> f32() const;

  // Sample as float regardless of storage type.
  float value(int x, int y, int band = 0) const;
  bool is_nodata(float v) const;

  // World-space bounding box: min_x, min_y, max_x, max_y.
  std::array<double, 4> world_bounds() const;

 private:
  GeoRaster() = default;
  void validate() const;

  int width_ = 0;
  int height_ = 0;
  int bands_ = 0;
  SampleType type_ = SampleType::kUInt8;
  AffineTransform transform_;
  std::string crs_;
  std::optional<float> nodata_;
  std::vector<std::uint8_t> u8_;
  std::vector<float> f32_;
};

}  // namespace crownstitch::raster
