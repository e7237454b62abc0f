#include "crownstitch/geometry/rle.hpp"

#include <algorithm>
#include <limits>

#include "crownstitch/error.hpp"

namespace crownstitch::geometry {

RlePayload rle_encode(const BinaryMask& mask) {
  RlePayload rle{mask.width(), mask.height(), {}};
  std::uint8_t current = 0;
  std::uint32_t run = 0;
  for (int x = 0; x < mask.width(); ++x) {
    for (int y = 0; y < mask.height(); ++y) {
      const std::uint8_t v = mask.get(x, y) ? 1 : 0;
      if (v != current) {
        rle.counts.push_back(run);
        run = 0;
        current = v;
      }
      ++run;
    }
  }
  rle.counts.push_back(run);
  return rle;
}

void validate_rle(const RlePayload& rle) {
  if (rle.width < 0 || rle.height < 0) throw ValidationError("RLE size must be non-negative");
  std::uint64_t total = 0;
  for (auto c : rle.counts) total += c;
  const auto expected = static_cast<std::uint64_t>(rle.width) * static_cast<std::uint64_t>(rle.height);
  if (total != expected) {
    throw ValidationError("RLE counts sum to " + std::to_string(total) + " but size is " +
                          std::to_string(rle.height) + "x" + std::to_string(rle.width) + " = " +
                          std::to_string(expected));
  }
}

BinaryMask rle_decode(const RlePayload& rle) {
  validate_rle(rle);
  BinaryMask mask(rle.width, rle.height);
  std::uint64_t pos = 0;
  const auto h = static_cast<std::uint64_t>(rle.height);
  for (std::size_t i = 0; i < rle.counts.size(); ++i) {
    const std::uint64_t end = pos + rle.counts[i];
    if (i % 2 == 1) {
      for (std::uint64_t p = pos; p < end; ++p) {
        mask.set(static_cast<int>(p / h), static_cast<int>(p % h));
      }
    }
    pos = end;
  }
  return mask;
}

std::int64_t rle_area(const RlePayload& rle) {
  std::int64_t area = 0;
  for (std::size_t i = 1; i < rle.counts.size(); i += 2) area += rle.counts[i];
  return area;
}

std::int64_t rle_intersection_area(const RlePayload& a, const RlePayload& b) {
  if (a.width != b.width || a.height != b.height) {
    throw ValidationError("RLE intersection: dimension mismatch");
  }
  std::size_t ia = 0, ib = 0;
  std::uint64_t ra = a.counts.empty() ? 0 : a.counts[0];
  std::uint64_t rb = b.counts.empty() ? 0 : b.counts[0];
  std::int64_t inter = 0;
  // Walk both run lists; run index parity gives the value (odd = ones).
  while (ia < a.counts.size() && ib < b.counts.size()) {
    if (ra == 0) {
      if (++ia < a.counts.size()) ra = a.counts[ia];
      continue;
    }
    if (rb == 0) {
      if (++ib < b.counts.size()) rb = b.counts[ib];
      continue;
    }
    const std::uint64_t step = std::min(ra, rb);
    if ((ia % 2 == 1) && (ib % 2 == 1)) inter += static_cast<std::int64_t>(step);
    ra -= step;
    rb -= step;
  }
  return inter;
}

double rle_iou(const RlePayload& a, const RlePayload& b) {
  const std::int64_t inter = rle_intersection_area(a, b);
  const std::int64_t uni = rle_area(a) + rle_area(b) - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

nlohmann::json rle_to_json(const RlePayload& rle) {
  return {{"size", {rle.height, rle.width}}, {"counts", rle.counts}};
}

RlePayload rle_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("size") || !j.contains("counts")) {
    throw ValidationError("RLE object needs 'size' and 'counts'");
  }
  const auto& size = j.at("size");
  if (!size.is_array() || size.size() != 2) throw ValidationError("RLE 'size' must be [H, W]");
  if (!size[0].is_number_integer() || !size[1].is_number_integer()) {
    throw ValidationError("RLE 'size' must hold integers");
  }
  RlePayload rle;
  rle.height = size[0].get<int>();
  rle.width = size[1].get<int>();
  if (j.at("counts").is_string()) {
    rle.counts = rle_counts_from_string(j.at("counts").get<std::string>());
    return rle;
  }
  if (!j.at("counts").is_array()) throw ValidationError("RLE 'counts' must be a list or a string");
  for (const auto& c : j.at("counts")) {
    if (!c.is_number_integer() || c.get<std::int64_t>() < 0) {
      throw ValidationError("RLE counts must be non-negative integers");
    }
    rle.counts.push_back(c.get<std::uint32_t>());
  }
  return rle;
}

std::string rle_counts_to_string(const std::vector<std::uint32_t>& counts) {
  std::string out;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    std::int64_t x = counts[i];
    if (i > 2) x -= counts[i - 2];
    bool more = true;
    while (more) {
      int c = static_cast<int>(x & 0x1f);
      x >>= 5;  // arithmetic shift keeps the sign
      more = (c & 0x10) ? x != -1 : x != 0;
      if (more) c |= 0x20;
      out.push_back(static_cast<char>(c + 48));
    }
  }
  return out;
}

std::vector<std::uint32_t> rle_counts_from_string(const std::string& text) {
  std::vector<std::uint32_t> counts;
  std::size_t p = 0;
  while (p < text.size()) {
    std::int64_t x = 0;
    int k = 0;
    bool more = true;
    while (more) {
      if (p >= text.size()) throw ValidationError("compressed RLE ends in the middle of a count");
      const int c = static_cast<unsigned char>(text[p]) - 48;
      if (c < 0 || c > 63 || k > 6) throw ValidationError("invalid compressed RLE string");
      x |= static_cast<std::int64_t>(c & 0x1f) << (5 * k);
      more = (c & 0x20) != 0;
      ++p;
      ++k;
      if (!more && (c & 0x10)) x |= -(std::int64_t{1} << (5 * k));
    }
    if (counts.size() > 2) x += counts[counts.size() - 2];
    if (x < 0 || x > std::numeric_limits<std::uint32_t>::max()) {
      throw ValidationError("compressed RLE decodes to a negative or oversized count");
    }
    counts.push_back(static_cast<std::uint32_t>(x));
  }
  return counts;
}

}  // namespace crownstitch::geometry
