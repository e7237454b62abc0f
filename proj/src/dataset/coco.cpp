#include "crownstitch/dataset/coco.hpp"

#include <algorithm>
#include <map>

#include "crownstitch/error.hpp"
#include "crownstitch/geometry/geojson.hpp"
#include "crownstitch/parallel.hpp"
#include "crownstitch/raster/image_io.hpp"

namespace crownstitch::dataset {

namespace fs = std::filesystem;
using geometry::PolygonGeo;

CrownAnnotationSet load_crown_annotations(const fs::path& path, const std::string& site,
                                          const std::optional<std::string>& crs_override) {
  auto fc = geometry::read_polygon_features(path);
  CrownAnnotationSet set;
  if (crs_override) {
    set.crs = geometry::normalize_crs(*crs_override);
  } else if (fc.crs) {
    set.crs = *fc.crs;
  } else {
    throw ValidationError(path.string() + ": no CRS in file; supply one explicitly");
  }
  set.source_site = site.empty() ? path.stem().string() : site;
  set.crowns.reserve(fc.features.size());
  for (auto& f : fc.features) set.crowns.push_back(f.polygon.with_score(0.0));
  return set;
}

namespace {

std::string tile_file_name(int row, int col) {
  return "images/tile_" + std::to_string(row) + "_" + std::to_string(col) + ".png";
}

// Crown outline in orthomosaic pixel coordinates (y down).
PolygonGeo to_pixel_space(const PolygonGeo& crown, const raster::AffineTransform& t) {
  std::vector<geometry::Point> ring;
  ring.reserve(crown.ring().size());
  for (const auto& p : crown.ring()) {
    const auto px = t.world_to_pixel(p.x, p.y);
    ring.push_back({px.x, px.y});
  }
  return PolygonGeo::from_ring(std::move(ring));
}

CocoAnnotation make_annotation(const PolygonGeo& piece, const raster::TileRect& tile) {
  CocoAnnotation ann;
  std::vector<double> flat;
  const auto& ring = piece.ring();
  double min_x = ring[0].x - tile.x0, max_x = min_x;
  double min_y = ring[0].y - tile.y0, max_y = min_y;
  for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
    const double x = ring[i].x - tile.x0;
    const double y = ring[i].y - tile.y0;
    flat.push_back(x);
    flat.push_back(y);
    min_x = std::min(min_x, x);
    max_x = std::max(max_x, x);
    min_y = std::min(min_y, y);
    max_y = std::max(max_y, y);
  }
  ann.segmentation.push_back(std::move(flat));
  ann.area = piece.area();
  ann.bbox = {min_x, min_y, max_x - min_x, max_y - min_y};
  return ann;
}

}  // namespace

CocoDataset build_coco_dataset(const raster::GeoRaster& ortho, const CrownAnnotationSet& crowns,
                               const BuildOptions& options) {
  if (options.tile_size < 1) throw ValidationError("tile size must be at least 1");
  if (!(options.overlap >= 0.0 && options.overlap < 1.0)) throw ValidationError("overlap must be in [0, 1)");
  if (geometry::normalize_crs(ortho.crs()) != geometry::normalize_crs(crowns.crs)) {
    throw ValidationError("CRS mismatch: orthomosaic is " + ortho.crs() + ", crowns are " + crowns.crs);
  }

  CocoDataset ds;
  ds.tile_size = options.tile_size;
  ds.overlap = options.overlap;
  ds.min_fragment_area = options.min_fragment_area;
  ds.crs = geometry::normalize_crs(ortho.crs());
  ds.site = crowns.source_site;

  std::vector<PolygonGeo> pixel_crowns;
  std::vector<geometry::Rect> pixel_bounds;
  pixel_crowns.reserve(crowns.crowns.size());
  for (const auto& c : crowns.crowns) {
    pixel_crowns.push_back(to_pixel_space(c, ortho.transform()));
    pixel_bounds.push_back(pixel_crowns.back().bounds());
  }

  const auto grid = raster::compute_tile_grid(ortho.width(), ortho.height(), options.tile_size, options.overlap);
  std::int64_t next_ann = 1;
  for (std::size_t t = 0; t < grid.size(); ++t) {
    const auto& tile = grid[t];
    CocoImage img;
    img.id = static_cast<std::int64_t>(t) + 1;
    img.file_name = tile_file_name(tile.row, tile.col);
    img.width = img.height = tile.size;
    img.tile_row = tile.row;
    img.tile_col = tile.col;
    img.x0 = tile.x0;
    img.y0 = tile.y0;
    ds.images.push_back(img);

    // padded area holds no imagery, so annotations stop at the raster edge
    const geometry::Rect clip{static_cast<double>(tile.x0), static_cast<double>(tile.y0),
                              static_cast<double>(std::min(tile.x0 + tile.size, ortho.width())),
                              static_cast<double>(std::min(tile.y0 + tile.size, ortho.height()))};
    for (std::size_t c = 0; c < pixel_crowns.size(); ++c) {
      if (!pixel_bounds[c].intersects(clip)) continue;
      for (const auto& piece : geometry::clip_polygon_to_rect(pixel_crowns[c], clip, options.min_fragment_area)) {
        CocoAnnotation ann = make_annotation(piece, tile);
        ann.id = next_ann++;
        ann.image_id = img.id;
        ds.annotations.push_back(std::move(ann));
      }
    }
  }
  return ds;
}

void write_tile_images(const raster::GeoRaster& ortho, const CocoDataset& dataset, const fs::path& out_dir,
                       int workers) {
  if (ortho.sample_type() != raster::SampleType::kUInt8) {
    throw ValidationError("orthomosaic must be 8-bit imagery");
  }
  const auto grid = raster::compute_tile_grid(ortho.width(), ortho.height(), dataset.tile_size, dataset.overlap);
  std::map<std::pair<int, int>, const raster::TileRect*> by_cell;
  for (const auto& t : grid) by_cell[{t.row, t.col}] = &t;
  std::vector<const raster::TileRect*> rects;
  for (const auto& img : dataset.images) {
    const auto it = by_cell.find({img.tile_row, img.tile_col});
    if (it == by_cell.end() || it->second->x0 != img.x0 || it->second->y0 != img.y0) {
      throw ValidationError("image " + img.file_name + " does not match the orthomosaic tile grid");
    }
    rects.push_back(it->second);
  }
  fs::create_directories(out_dir / "images");
  parallel_for(rects.size(), workers, [&](std::size_t i) {
    const auto tile = raster::extract_tile(ortho, *rects[i]);
    raster::write_png(raster::to_image(tile.raster), out_dir / dataset.images[i].file_name);
  });
}

nlohmann::ordered_json coco_to_json(const CocoDataset& ds) {
  nlohmann::ordered_json doc;
  doc["info"] = {{"description", "tiled tree crown dataset"},
                 {"version", "1.0"},
                 {"tile_size", ds.tile_size},
                 {"overlap", ds.overlap},
                 {"min_fragment_area", ds.min_fragment_area},
                 {"crs", ds.crs},
                 {"site", ds.site}};
  auto& images = doc["images"] = nlohmann::ordered_json::array();
  for (const auto& img : ds.images) {
    images.push_back({{"id", img.id},
                      {"file_name", img.file_name},
                      {"width", img.width},
                      {"height", img.height},
                      {"tile_row", img.tile_row},
                      {"tile_col", img.tile_col},
                      {"x0", img.x0},
                      {"y0", img.y0}});
  }
  auto& anns = doc["annotations"] = nlohmann::ordered_json::array();
  for (const auto& a : ds.annotations) {
    anns.push_back({{"id", a.id},
                    {"image_id", a.image_id},
                    {"category_id", a.category_id},
                    {"segmentation", a.segmentation},
                    {"area", a.area},
                    {"bbox", a.bbox},
                    {"iscrowd", a.iscrowd}});
  }
  auto& cats = doc["categories"] = nlohmann::ordered_json::array();
  for (const auto& c : ds.categories) cats.push_back({{"id", c.id}, {"name", c.name}});
  return doc;
}

CocoDataset coco_from_json(const nlohmann::json& doc) {
  try {
    CocoDataset ds;
    const auto& cats = doc.at("categories");
    if (!cats.is_array() || cats.size() != 1) {
      throw ValidationError("COCO file must define exactly one category, found " +
                            std::to_string(cats.is_array() ? cats.size() : 0));
    }
    ds.categories = {{cats[0].at("id").get<int>(), cats[0].at("name").get<std::string>()}};

    if (doc.contains("info") && doc["info"].is_object()) {
      const auto& info = doc["info"];
      ds.tile_size = info.value("tile_size", 0);
      ds.overlap = info.value("overlap", 0.0);
      ds.min_fragment_area = info.value("min_fragment_area", 0.0);
      ds.crs = info.value("crs", "");
      ds.site = info.value("site", "");
    }
    std::map<std::int64_t, int> image_index;
    for (const auto& j : doc.at("images")) {
      CocoImage img;
      img.id = j.at("id").get<std::int64_t>();
      img.file_name = j.at("file_name").get<std::string>();
      img.width = j.at("width").get<int>();
      img.height = j.at("height").get<int>();
      img.tile_row = j.value("tile_row", 0);
      img.tile_col = j.value("tile_col", 0);
      img.x0 = j.value("x0", 0);
      img.y0 = j.value("y0", 0);
      if (!image_index.emplace(img.id, 0).second) {
        throw ValidationError("duplicate image id " + std::to_string(img.id));
      }
      ds.images.push_back(std::move(img));
    }
    for (const auto& j : doc.at("annotations")) {
      CocoAnnotation a;
      a.id = j.at("id").get<std::int64_t>();
      a.image_id = j.at("image_id").get<std::int64_t>();
      a.category_id = j.at("category_id").get<int>();
      a.segmentation = j.at("segmentation").get<std::vector<std::vector<double>>>();
      a.area = j.at("area").get<double>();
      a.bbox = j.at("bbox").get<std::array<double, 4>>();
      a.iscrowd = j.value("iscrowd", 0);
      const std::string where = "annotation " + std::to_string(a.id);
      if (!image_index.count(a.image_id)) throw ValidationError(where + " references unknown image");
      if (a.category_id != ds.categories[0].id) throw ValidationError(where + " references unknown category");
      if (!(a.area > 0.0)) throw ValidationError(where + " has non-positive area");
      for (const auto& ring : a.segmentation) {
        if (ring.size() < 6 || ring.size() % 2 != 0) throw ValidationError(where + " has a malformed polygon");
      }
      ds.annotations.push_back(std::move(a));
    }
    return ds;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed COCO file: ") + e.what());
  }
}

void write_coco(const CocoDataset& dataset, const fs::path& out_dir) {
  geometry::write_json_file(out_dir / "annotations.json", coco_to_json(dataset));
}

CocoDataset read_coco(const fs::path& in_dir) {
  CocoDataset ds = coco_from_json(geometry::read_json_file(in_dir / "annotations.json"));
  std::vector<std::string> missing;
  for (const auto& img : ds.images) {
    if (!fs::exists(in_dir / img.file_name)) missing.push_back(img.file_name);
  }
  if (!missing.empty()) {
    std::string msg = "missing tile images:";
    for (const auto& m : missing) msg += " " + m;
    throw ValidationError(msg);
  }
  return ds;
}

}  // namespace crownstitch::dataset
