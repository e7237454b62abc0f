#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crownstitch/backends/backend.hpp"

namespace crownstitch::backends {

// Newline-delimited JSON spoken with external backends, one object per line.
//   -> {"type":"hello"}
//   <- {"type":"hello","protocol":1,"name":...}
//   -> {"type":"predict","tile_id":...,"width":W,"height":H,"rgb_png_b64":...,
//       "chm_f32_b64":...}            (chm only when requested)
//   <- {"type":"result","tile_id":...,"instances":[{"score":s,"rle":{...}}]}
//   <- {"type":"error","message":...}
inline constexpr int kProtocolVersion = 1;

std::string base64_encode(std::span<const std::uint8_t> bytes);
// Throws ValidationError on characters outside the alphabet or bad length.
std::vector<std::uint8_t> base64_decode(const std::string& text);

nlohmann::json make_hello_request();
// The RGB tile goes as PNG; the CHM (optional) as little-endian float32,
// row-major.
nlohmann::json make_predict_request(const raster::TileImage& rgb, const raster::TileImage* chm);

// Parses a "result" message for a width x height tile. An "error" message or
// anything malformed becomes a BackendError; invalid instances are named by
// index.
std::vector<InstancePrediction> parse_result(const nlohmann::json& msg, const std::string& tile_id,
                                             int width, int height);

}  // namespace crownstitch::backends
