#pragma once

#include <vector>

#include <nlohmann/json.hpp>

#include "crownstitch/eval/metrics.hpp"

namespace crownstitch::eval {

// Pixels whose centers fall inside a COCO polygon segmentation (flat
// [x0, y0, x1, y1, ...] rings, even-odd within a ring, union across rings).
geometry::BinaryMask rasterize_rings(const std::vector<std::vector<double>>& rings, int width, int height);

// Joins a single-category COCO ground-truth document with a COCO results
// array. Ground-truth segmentations may be polygons or RLE; results must be
// RLE (counts as a list or as a pycocotools string). Crowd annotations are
// rejected. Every image of the ground truth becomes an item, in image_id
// order. Problems are ValidationErrors naming the offending entry.
std::vector<EvalItem> coco_eval_items(const nlohmann::json& ground_truth, const nlohmann::json& results);

}  // namespace crownstitch::eval
