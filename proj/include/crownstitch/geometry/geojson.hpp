#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crownstitch/geometry/polygon.hpp"

namespace crownstitch::geometry {

struct PolygonFeature {
  std::string id;
  PolygonGeo polygon;
};

struct FeatureCollection {
  std::optional<std::string> crs;
  std::vector<PolygonFeature> features;
};

// "urn:ogc:def:crs:EPSG::32632" and "epsg:32632" become "EPSG:32632"; other
// names pass through unchanged.
std::string normalize_crs(const std::string& name);

// Parses a FeatureCollection of Polygon features (exterior rings only; holes
// are ignored). properties.score (default 0) and properties.id (default the
// 0-based feature index) are picked up when present. Every offending feature
// is collected and reported by 0-based index in one ValidationError.
FeatureCollection parse_polygon_features(const nlohmann::json& doc);
FeatureCollection read_polygon_features(const std::filesystem::path& path);

// Polygon features with properties {id, score, area_m2}. The CRS goes into
// the legacy "crs" member when known.
nlohmann::ordered_json to_geojson(const FeatureCollection& fc);
void write_geojson(const FeatureCollection& fc, const std::filesystem::path& path);

// Malformed JSON is a ValidationError naming the file; unreadable files are a
// RuntimeFailure.
nlohmann::json read_json_file(const std::filesystem::path& path);
// Pretty-printed with a trailing newline; creates parent directories.
void write_json_file(const std::filesystem::path& path, const nlohmann::ordered_json& doc);

}  // namespace crownstitch::geometry
