#include "crownstitch/backends/wire.hpp"

#include <bit>
#include <cctype>

#include <boost/archive/iterators/base64_from_binary.hpp>
#include <boost/archive/iterators/binary_from_base64.hpp>
#include <boost/archive/iterators/dataflow_exception.hpp>
#include <boost/archive/iterators/transform_width.hpp>

#include "crownstitch/raster/image_io.hpp"

namespace crownstitch::backends {

namespace bai = boost::archive::iterators;

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  using It = bai::base64_from_binary<bai::transform_width<const std::uint8_t*, 6, 8>>;
  std::string out(It(bytes.data()), It(bytes.data() + bytes.size()));
  out.append((3 - bytes.size() % 3) % 3, '=');
  return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
  if (text.size() % 4 != 0) throw ValidationError("base64 length is not a multiple of 4");
  std::size_t len = text.size();
  int pad = 0;
  while (len > 0 && text[len - 1] == '=' && pad < 2) --len, ++pad;
  for (std::size_t i = 0; i < len; ++i) {
    const char c = text[i];
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '+' || c == '/')) {
      throw ValidationError("invalid base64 character");
    }
  }
  using It = bai::transform_width<bai::binary_from_base64<const char*>, 8, 6>;
  try {
    std::vector<std::uint8_t> out(It(text.data()), It(text.data() + len));
    out.resize(len * 3 / 4);
    return out;
  } catch (const bai::dataflow_exception&) {
    throw ValidationError("invalid base64 payload");
  }
}

nlohmann::json make_hello_request() { return {{"type", "hello"}}; }

nlohmann::json make_predict_request(const raster::TileImage& rgb, const raster::TileImage* chm) {
  nlohmann::json msg;
  msg["type"] = "predict";
  msg["tile_id"] = rgb.rect.id();
  msg["width"] = rgb.raster.width();
  msg["height"] = rgb.raster.height();
  msg["rgb_png_b64"] = base64_encode(raster::encode_png(raster::to_image(rgb.raster)));
  if (chm) {
    const auto& r = chm->raster;
    std::vector<std::uint8_t> bytes;
    bytes.reserve(static_cast<std::size_t>(r.width()) * r.height() * 4);
    for (int y = 0; y < r.height(); ++y) {
      for (int x = 0; x < r.width(); ++x) {
        const auto bits = std::bit_cast<std::uint32_t>(r.value(x, y));
        for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
      }
    }
    msg["chm_f32_b64"] = base64_encode(bytes);
  }
  return msg;
}

std::vector<InstancePrediction> parse_result(const nlohmann::json& msg, const std::string& tile_id,
                                             int width, int height) {
  const std::string where = "tile " + tile_id + ": ";
  if (!msg.is_object() || !msg.contains("type") || !msg["type"].is_string()) {
    throw BackendError(where + "reply has no message type");
  }
  const std::string type = msg["type"].get<std::string>();
  if (type == "error") {
    throw BackendError(where + "backend reported: " + msg.value("message", std::string("(no message)")));
  }
  if (type != "result") throw BackendError(where + "unexpected '" + type + "' reply");
  if (!msg.contains("tile_id") || msg["tile_id"] != tile_id) {
    const std::string got = msg.contains("tile_id") ? msg["tile_id"].dump() : "nothing";
    throw BackendError(where + "reply is for " + got);
  }
  if (!msg.contains("instances") || !msg["instances"].is_array()) {
    throw BackendError(where + "reply has no instances array");
  }
  std::vector<InstancePrediction> out;
  const auto& instances = msg["instances"];
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& inst = instances[i];
    try {
      if (!inst.is_object() || !inst.contains("score") || !inst["score"].is_number()) {
        throw ValidationError("missing numeric score");
      }
      if (!inst.contains("rle")) throw ValidationError("missing rle");
      out.push_back({inst["score"].get<double>(), geometry::rle_from_json(inst["rle"]), tile_id});
    } catch (const ValidationError& e) {
      throw BackendError(where + "instance " + std::to_string(i) + ": " + e.what());
    }
  }
  try {
    validate_predictions(out, width, height);
  } catch (const BackendError& e) {
    throw BackendError(where + e.what());
  }
  return out;
}

}  // namespace crownstitch::backends
