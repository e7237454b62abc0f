#include "crownstitch/eval/io.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "crownstitch/error.hpp"

namespace crownstitch::eval {

namespace {

struct ImageInfo {
  int width = 0;
  int height = 0;
  std::size_t item = 0;
};

std::int64_t integer_field(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key) || !j[key].is_number_integer()) {
    throw ValidationError(where + ": missing integer '" + key + "'");
  }
  return j[key].get<std::int64_t>();
}

geometry::RlePayload rle_field(const nlohmann::json& seg, int width, int height, const std::string& where) {
  geometry::RlePayload rle;
  try {
    rle = geometry::rle_from_json(seg);
    geometry::validate_rle(rle);
  } catch (const ValidationError& e) {
    throw ValidationError(where + ": " + e.what());
  }
  if (rle.width != width || rle.height != height) {
    throw ValidationError(where + ": mask size " + std::to_string(rle.height) + "x" + std::to_string(rle.width) +
                          " does not match the image (" + std::to_string(height) + "x" + std::to_string(width) +
                          ")");
  }
  return rle;
}

}  // namespace

geometry::BinaryMask rasterize_rings(const std::vector<std::vector<double>>& rings, int width, int height) {
  geometry::BinaryMask mask(width, height);
  std::vector<double> xs;
  for (const auto& ring : rings) {
    if (ring.size() < 6 || ring.size() % 2 != 0) throw ValidationError("polygon ring needs >= 3 x,y pairs");
    const std::size_t n = ring.size() / 2;
    for (int y = 0; y < height; ++y) {
      const double cy = y + 0.5;
      xs.clear();
      for (std::size_t i = 0; i < n; ++i) {
        const double x0 = ring[2 * i], y0 = ring[2 * i + 1];
        const double x1 = ring[2 * ((i + 1) % n)], y1 = ring[2 * ((i + 1) % n) + 1];
        // half-open in y so shared vertices are counted once
        if ((y0 <= cy) != (y1 <= cy)) xs.push_back(x0 + (cy - y0) * (x1 - x0) / (y1 - y0));
      }
      std::sort(xs.begin(), xs.end());
      for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
        // pixel centers x + 0.5 inside [xs[k], xs[k+1])
        const int from = std::max(0, static_cast<int>(std::ceil(xs[k] - 0.5)));
        const int to = std::min(width, static_cast<int>(std::ceil(xs[k + 1] - 0.5)));
        for (int x = from; x < to; ++x) mask.set(x, y);
      }
    }
  }
  return mask;
}

std::vector<EvalItem> coco_eval_items(const nlohmann::json& gt, const nlohmann::json& results) {
  if (!gt.is_object() || !gt.contains("images") || !gt["images"].is_array() || !gt.contains("annotations") ||
      !gt["annotations"].is_array()) {
    throw ValidationError("ground truth must be a COCO object with 'images' and 'annotations'");
  }
  std::optional<std::int64_t> category;
  if (gt.contains("categories")) {
    if (!gt["categories"].is_array() || gt["categories"].size() > 1) {
      throw ValidationError("ground truth must have a single category; this evaluator is single-class");
    }
    if (gt["categories"].size() == 1) category = integer_field(gt["categories"][0], "id", "category 0");
  }

  std::map<std::int64_t, ImageInfo> images;
  for (std::size_t i = 0; i < gt["images"].size(); ++i) {
    const auto& im = gt["images"][i];
    const std::string where = "image entry " + std::to_string(i);
    const auto id = integer_field(im, "id", where);
    const int w = static_cast<int>(integer_field(im, "width", where));
    const int h = static_cast<int>(integer_field(im, "height", where));
    if (w < 1 || h < 1) throw ValidationError(where + ": width and height must be positive");
    if (!images.emplace(id, ImageInfo{w, h, 0}).second) {
      throw ValidationError("image id " + std::to_string(id) + " appears twice");
    }
  }
  std::vector<EvalItem> items;
  for (auto& [id, info] : images) {
    info.item = items.size();
    items.push_back({id, {}, {}});
  }

  for (std::size_t i = 0; i < gt["annotations"].size(); ++i) {
    const auto& a = gt["annotations"][i];
    const std::string where = "annotation " + std::to_string(i);
    const auto image_id = integer_field(a, "image_id", where);
    const auto it = images.find(image_id);
    if (it == images.end()) throw ValidationError(where + ": unknown image_id " + std::to_string(image_id));
    if (category && a.contains("category_id") && a["category_id"] != *category) {
      throw ValidationError(where + ": category_id is not the ground-truth category");
    }
    if (a.value("iscrowd", 0) != 0) throw ValidationError(where + ": crowd annotations are not supported");
    if (!a.contains("segmentation")) throw ValidationError(where + ": missing segmentation");
    const auto& seg = a["segmentation"];
    const auto& info = it->second;
    if (seg.is_array()) {
      std::vector<std::vector<double>> rings;
      try {
        rings = seg.get<std::vector<std::vector<double>>>();
        items[info.item].ground_truths.push_back(
            geometry::rle_encode(rasterize_rings(rings, info.width, info.height)));
      } catch (const nlohmann::json::exception&) {
        throw ValidationError(where + ": polygon segmentation must be a list of coordinate lists");
      } catch (const ValidationError& e) {
        throw ValidationError(where + ": " + e.what());
      }
    } else {
      items[info.item].ground_truths.push_back(rle_field(seg, info.width, info.height, where));
    }
  }

  if (!results.is_array()) throw ValidationError("predictions must be a COCO results array");
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    const std::string where = "result " + std::to_string(i);
    const auto image_id = integer_field(r, "image_id", where);
    const auto it = images.find(image_id);
    if (it == images.end()) throw ValidationError(where + ": image_id " + std::to_string(image_id) + " is not in the ground truth");
    if (category && r.contains("category_id") && r["category_id"] != *category) {
      throw ValidationError(where + ": category_id is not the ground-truth category");
    }
    if (!r.contains("score") || !r["score"].is_number() || !std::isfinite(r["score"].get<double>())) {
      throw ValidationError(where + ": missing numeric score");
    }
    if (!r.contains("segmentation") || !r["segmentation"].is_object()) {
      throw ValidationError(where + ": segmentation must be an RLE object");
    }
    const auto& info = it->second;
    items[info.item].predictions.push_back(
        {r["score"].get<double>(), rle_field(r["segmentation"], info.width, info.height, where)});
  }
  return items;
}

}  // namespace crownstitch::eval
