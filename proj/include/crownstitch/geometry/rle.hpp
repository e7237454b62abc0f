#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crownstitch/geometry/mask.hpp"

namespace crownstitch::geometry {

// COCO uncompressed RLE: column-major (top-to-bottom within a column, columns
// left to right), alternating runs starting with a zero-run.
struct RlePayload {
  int width = 0;
  int height = 0;
  std::vector<std::uint32_t> counts;

  bool operator==(const RlePayload&) const = default;
};

RlePayload rle_encode(const BinaryMask& mask);
// Throws ValidationError when the counts do not sum to width * height.
BinaryMask rle_decode(const RlePayload& rle);

// Throws ValidationError describing the first broken invariant.
void validate_rle(const RlePayload& rle);

std::int64_t rle_area(const RlePayload& rle);
std::int64_t rle_intersection_area(const RlePayload& a, const RlePayload& b);
// Computed directly on the runs. Dimensions must match.
double rle_iou(const RlePayload& a, const RlePayload& b);

// {"size":[H,W],"counts":[...]}. Reading also accepts the compressed string
// form of counts that pycocotools writes.
nlohmann::json rle_to_json(const RlePayload& rle);
RlePayload rle_from_json(const nlohmann::json& j);

// pycocotools' compressed counts: each count (after the first two, as a
// delta to the count two places back) in 5-bit little-endian groups with a
// continuation bit, offset into printable ASCII by 48.
std::string rle_counts_to_string(const std::vector<std::uint32_t>& counts);
std::vector<std::uint32_t> rle_counts_from_string(const std::string& text);

}  // namespace crownstitch::geometry
