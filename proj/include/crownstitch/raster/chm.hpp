#pragma once

#include <optional>

#include "crownstitch/raster/georaster.hpp"

namespace crownstitch::raster {

// Default nodata written into a CHM when the DSM carries none.
inline constexpr float kDefaultChmNodata = -9999.0f;

// Bilinear sample of a single-band raster at a world position, treating
// each sample as a post at its pixel center. Positions between the outermost
// centers and the raster edge use the nearest edge posts. Returns nullopt
// outside the raster or when a contributing post is nodata.
std::optional<float> sample_bilinear(const GeoRaster& grid, double wx, double wy);

// Canopy height model: DSM minus the DEM resampled bilinearly to each DSM
// cell center, clamped below at 0. Output lives on the DSM grid.
GeoRaster compute_chm(const GeoRaster& dsm, const GeoRaster& dem);

// Resample a single-band raster onto the grid of `target` (same CRS).
// Cells without coverage receive `fill`.
GeoRaster resample_to_grid(const GeoRaster& source, const GeoRaster& target, float fill = 0.0f);

}  // namespace crownstitch::raster
