#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crownstitch/raster/georaster.hpp"

namespace crownstitch::raster {

// Georeferencing supplied by the user for TIFFs that lack it (or to
// override what the file says).
struct GeoOverride {
  std::optional<AffineTransform> transform;
  std::optional<std::string> crs;
};

// Reads a baseline GeoTIFF: strips or tiles; uncompressed, LZW, Deflate or
// PackBits; horizontal or floating-point predictor. 8-bit files with 1, 3 or
// 4 samples load as 8-bit rasters (alpha dropped); single-band 16/32/64-bit
// integer or float files load as float rasters.
GeoRaster read_geotiff(const std::filesystem::path& path, const GeoOverride& override = {});
GeoRaster decode_geotiff(std::span<const std::uint8_t> bytes, const GeoOverride& override = {});

// Little-endian, Deflate-compressed, stripped GeoTIFF with
// ModelPixelScale/ModelTiepoint georeferencing and EPSG GeoKeys.
void write_geotiff(const GeoRaster& raster, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_geotiff(const GeoRaster& raster);

}  // namespace crownstitch::raster
