#pragma once

#include "crownstitch/geometry/mask.hpp"
#include "crownstitch/geometry/polygon.hpp"

namespace crownstitch::geometry {

// Outline of the largest 4-connected component of `mask`, traced along pixel
// edges, with holes filled and collinear vertices merged. Vertices are mapped
// through `transform` (mask pixel (0,0) corner = transform origin). Throws
// NoGeometryError for an empty mask.
PolygonGeo vectorize_mask(const BinaryMask& mask, const raster::AffineTransform& transform,
                          double score = 0.0);

// Same outline in mask pixel coordinates (y down), without world mapping.
std::vector<Point> trace_outline(const BinaryMask& mask);

}  // namespace crownstitch::geometry
