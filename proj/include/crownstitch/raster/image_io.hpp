#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "crownstitch/raster/georaster.hpp"

namespace crownstitch::raster {

// 8-bit PNG image, pixel-interleaved.
struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 (gray) or 3 (RGB)
  std::vector<std::uint8_t> pixels;

  bool operator==(const Image8&) const = default;
};

std::vector<std::uint8_t> encode_png(const Image8& image);
Image8 decode_png(std::span<const std::uint8_t> bytes);
void write_png(const Image8& image, const std::filesystem::path& path);
Image8 read_png(const std::filesystem::path& path);

// 8-bit raster as PNG image. Float rasters are not accepted here.
Image8 to_image(const GeoRaster& raster);

// Debug dump: `<stem>.png` plus `<stem>.transform`, a text file holding the
// six GDAL-order geotransform numbers (origin_x, scale_x, 0, origin_y, 0,
// scale_y), one per line, each printed with "%.17g". Float rasters are
// linearly scaled to 8-bit gray over their valid [min, max].
void write_debug_dump(const GeoRaster& raster, const std::filesystem::path& stem);
AffineTransform read_transform_sidecar(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace crownstitch::raster
