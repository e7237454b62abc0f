#include "crownstitch/geometry/geojson.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "crownstitch/error.hpp"

namespace crownstitch::geometry {

namespace {

std::string upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::toupper(c); });
  return s;
}

std::optional<std::string> crs_of(const nlohmann::json& doc) {
  if (!doc.contains("crs") || doc["crs"].is_null()) return std::nullopt;
  const auto& crs = doc["crs"];
  if (crs.is_string()) return normalize_crs(crs.get<std::string>());
  if (crs.is_object() && crs.contains("properties") && crs["properties"].contains("name") &&
      crs["properties"]["name"].is_string()) {
    return normalize_crs(crs["properties"]["name"].get<std::string>());
  }
  throw ValidationError("unrecognized GeoJSON crs member");
}

std::vector<Point> parse_ring(const nlohmann::json& ring) {
  if (!ring.is_array()) throw ValidationError("ring is not an array");
  std::vector<Point> pts;
  pts.reserve(ring.size());
  for (const auto& c : ring) {
    if (!c.is_array() || c.size() < 2 || !c[0].is_number() || !c[1].is_number()) {
      throw ValidationError("ring position is not [x, y]");
    }
    pts.push_back({c[0].get<double>(), c[1].get<double>()});
  }
  return pts;
}

std::string index_list(const std::vector<std::size_t>& idx) {
  std::string s;
  for (std::size_t i = 0; i < idx.size(); ++i) s += (i ? ", " : "") + std::to_string(idx[i]);
  return s;
}

}  // namespace

std::string normalize_crs(const std::string& name) {
  const std::string u = upper(name);
  for (const std::string prefix : {"URN:OGC:DEF:CRS:EPSG::", "URN:OGC:DEF:CRS:EPSG:", "EPSG:"}) {
    if (u.rfind(prefix, 0) == 0) {
      std::string code = u.substr(prefix.size());
      // some writers put a version between the colons
      if (const auto colon = code.rfind(':'); colon != std::string::npos) code = code.substr(colon + 1);
      if (!code.empty() && std::all_of(code.begin(), code.end(), ::isdigit)) return "EPSG:" + code;
    }
  }
  if (u == "URN:OGC:DEF:CRS:OGC:1.3:CRS84" || u == "OGC:CRS84") return "EPSG:4326";
  return name;
}

FeatureCollection parse_polygon_features(const nlohmann::json& doc) {
  if (!doc.is_object() || doc.value("type", "") != "FeatureCollection" || !doc.contains("features") ||
      !doc["features"].is_array()) {
    throw ValidationError("expected a GeoJSON FeatureCollection");
  }
  FeatureCollection fc;
  fc.crs = crs_of(doc);

  std::vector<std::size_t> non_polygon;
  std::vector<std::string> invalid;
  const auto& features = doc["features"];
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto& f = features[i];
    const nlohmann::json* geom = f.is_object() && f.contains("geometry") ? &f["geometry"] : nullptr;
    if (!geom || !geom->is_object() || geom->value("type", "") != "Polygon") {
      non_polygon.push_back(i);
      continue;
    }
    try {
      const auto& rings = geom->at("coordinates");
      if (!rings.is_array() || rings.empty()) throw ValidationError("polygon has no rings");
      auto ring = parse_ring(rings[0]);
      if (auto problem = validity_problem(ring)) throw ValidationError(*problem);

      double score = 0.0;
      std::string id = std::to_string(i);
      if (f.contains("properties") && f["properties"].is_object()) {
        const auto& props = f["properties"];
        if (props.contains("score") && !props["score"].is_null()) {
          if (!props["score"].is_number()) throw ValidationError("score is not a number");
          score = props["score"].get<double>();
          if (!(score >= 0.0 && score <= 1.0)) throw ValidationError("score outside [0, 1]");
        }
        if (props.contains("id") && props["id"].is_string()) id = props["id"].get<std::string>();
        else if (props.contains("id") && props["id"].is_number_integer()) id = std::to_string(props["id"].get<long long>());
      }
      fc.features.push_back({std::move(id), PolygonGeo::from_ring(std::move(ring), score)});
    } catch (const ValidationError& e) {
      invalid.push_back("feature " + std::to_string(i) + ": " + e.what());
    } catch (const nlohmann::json::exception& e) {
      invalid.push_back("feature " + std::to_string(i) + ": " + e.what());
    }
  }

  if (!non_polygon.empty() || !invalid.empty()) {
    std::string msg = "invalid polygon features";
    if (!non_polygon.empty()) msg += "; non-Polygon geometry at feature " + index_list(non_polygon);
    for (const auto& s : invalid) msg += "; " + s;
    throw ValidationError(msg);
  }
  return fc;
}

FeatureCollection read_polygon_features(const std::filesystem::path& path) {
  try {
    return parse_polygon_features(read_json_file(path));
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

nlohmann::ordered_json to_geojson(const FeatureCollection& fc) {
  nlohmann::ordered_json doc;
  doc["type"] = "FeatureCollection";
  if (fc.crs) {
    std::string name = *fc.crs;
    if (name.rfind("EPSG:", 0) == 0) name = "urn:ogc:def:crs:EPSG::" + name.substr(5);
    doc["crs"] = {{"type", "name"}, {"properties", {{"name", name}}}};
  }
  auto& features = doc["features"] = nlohmann::ordered_json::array();
  for (const auto& f : fc.features) {
    nlohmann::ordered_json ring = nlohmann::ordered_json::array();
    for (const Point& p : f.polygon.ring()) ring.push_back({p.x, p.y});
    nlohmann::ordered_json feature;
    feature["type"] = "Feature";
    feature["properties"] = {{"id", f.id}, {"score", f.polygon.score()}, {"area_m2", f.polygon.area()}};
    feature["geometry"] = {{"type", "Polygon"}, {"coordinates", nlohmann::ordered_json::array({ring})}};
    features.push_back(std::move(feature));
  }
  return doc;
}

void write_geojson(const FeatureCollection& fc, const std::filesystem::path& path) {
  write_json_file(path, to_geojson(fc));
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeFailure("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return nlohmann::json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ": malformed JSON: " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const nlohmann::ordered_json& doc) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw RuntimeFailure("short write to " + path.string());
}

}  // namespace crownstitch::geometry
