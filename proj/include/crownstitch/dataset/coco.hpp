#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crownstitch/geometry/polygon.hpp"
#include "crownstitch/raster/georaster.hpp"
#include "crownstitch/raster/tiling.hpp"

namespace crownstitch::dataset {

struct CrownAnnotationSet {
  std::vector<geometry::PolygonGeo> crowns;
  std::string source_site;
  std::string crs;
};

// GeoJSON crowns. `crs_override` replaces (or supplies a missing) CRS; a file
// without one and no override is rejected.
CrownAnnotationSet load_crown_annotations(const std::filesystem::path& path,
                                          const std::string& site = "",
                                          const std::optional<std::string>& crs_override = std::nullopt);

struct CocoImage {
  std::int64_t id = 0;
  std::string file_name;
  int width = 0;
  int height = 0;
  // placement in the source orthomosaic
  int tile_row = 0;
  int tile_col = 0;
  int x0 = 0;
  int y0 = 0;

  bool operator==(const CocoImage&) const = default;
};

struct CocoAnnotation {
  std::int64_t id = 0;
  std::int64_t image_id = 0;
  int category_id = 1;
  // Flat x0,y0,x1,y1,... lists in tile pixel coordinates, ring not closed.
  std::vector<std::vector<double>> segmentation;
  double area = 0.0;
  std::array<double, 4> bbox{};  // x, y, width, height
  int iscrowd = 0;

  bool operator==(const CocoAnnotation&) const = default;
};

struct CocoCategory {
  int id = 1;
  std::string name = "tree crown";

  bool operator==(const CocoCategory&) const = default;
};

struct CocoDataset {
  std::vector<CocoImage> images;
  std::vector<CocoAnnotation> annotations;
  std::vector<CocoCategory> categories{CocoCategory{}};
  // build parameters and provenance, echoed under "info"
  int tile_size = 0;
  double overlap = 0.0;
  double min_fragment_area = 0.0;
  std::string crs;
  std::string site;

  bool operator==(const CocoDataset&) const = default;
};

struct BuildOptions {
  int tile_size = 1024;
  double overlap = 0.5;
  double min_fragment_area = 64.0;  // px^2
};

// Annotations for every tile of the grid; tiles without crowns are kept.
// Image ids follow the row-major tile order (1-based); annotation ids follow
// tile order, then input crown order, then fragment order. No I/O.
CocoDataset build_coco_dataset(const raster::GeoRaster& ortho, const CrownAnnotationSet& crowns,
                               const BuildOptions& options = {});

// images/tile_{row}_{col}.png for every image entry of `dataset`.
void write_tile_images(const raster::GeoRaster& ortho, const CocoDataset& dataset,
                       const std::filesystem::path& out_dir, int workers = 1);

nlohmann::ordered_json coco_to_json(const CocoDataset& dataset);
// Throws ValidationError for structural problems: category count other than
// one, dangling image ids, non-positive areas.
CocoDataset coco_from_json(const nlohmann::json& doc);

// out_dir/annotations.json
void write_coco(const CocoDataset& dataset, const std::filesystem::path& out_dir);
// Reads out_dir/annotations.json and checks every referenced tile image
// exists; missing files are listed in the error.
CocoDataset read_coco(const std::filesystem::path& in_dir);

}  // namespace crownstitch::dataset
