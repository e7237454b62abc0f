// Test double for the external backend protocol. The first argument picks a
// behavior:
//   dummy            no instances
//   green-threshold  one instance = pixels with green > 200, score 0.9
//   chm-threshold    one instance = CHM pixels above 10 m, score 0.8
//   bad-rle          second instance has counts that do not sum to W*H
//   slow             sleeps 5 s before every predict reply
//   wrong-protocol   announces protocol 2
//   error            answers every predict with an error message
//   garbage          answers every predict with a non-JSON line
//   crash            exits when the first predict arrives
#include <chrono>
#include <cstring>
#include <iostream>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

#include "crownstitch/backends/wire.hpp"
#include "crownstitch/geometry/rle.hpp"
#include "crownstitch/raster/image_io.hpp"

namespace cb = crownstitch::backends;
namespace cg = crownstitch::geometry;

namespace {

void reply(const nlohmann::json& msg) { std::cout << msg.dump() << '\n' << std::flush; }

nlohmann::json instance(double score, const cg::BinaryMask& m) {
  return {{"score", score}, {"rle", cg::rle_to_json(cg::rle_encode(m))}};
}

nlohmann::json predict(const std::string& mode, const nlohmann::json& req) {
  const std::string id = req.at("tile_id").get<std::string>();
  const int w = req.at("width").get<int>();
  const int h = req.at("height").get<int>();
  nlohmann::json out = {{"type", "result"}, {"tile_id", id}, {"instances", nlohmann::json::array()}};
  if (mode == "green-threshold") {
    const auto png = cb::base64_decode(req.at("rgb_png_b64").get<std::string>());
    const auto img = crownstitch::raster::decode_png(png);
    cg::BinaryMask m(w, h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) m.set(x, y, img.pixels[(y * w + x) * img.channels + 1] > 200);
    if (!m.empty()) out["instances"].push_back(instance(0.9, m));
  } else if (mode == "chm-threshold") {
    if (!req.contains("chm_f32_b64")) return {{"type", "error"}, {"message", "no chm in request"}};
    const auto bytes = cb::base64_decode(req["chm_f32_b64"].get<std::string>());
    cg::BinaryMask m(w, h);
    for (int i = 0; i < w * h; ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[i * 4 + b]) << (8 * b);
      float v;
      std::memcpy(&v, &bits, 4);
      m.set(i % w, i / w, v > 10.0f);
    }
    if (!m.empty()) out["instances"].push_back(instance(0.8, m));
  } else if (mode == "bad-rle") {
    cg::BinaryMask m(w, h);
    m.set(0, 0);
    out["instances"].push_back(instance(0.5, m));
    out["instances"].push_back({{"score", 0.5}, {"rle", {{"size", {h, w}}, {"counts", {1, 2}}}}});
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  const std::string mode = argc > 1 ? argv[1] : "dummy";
  std::string line;
  while (std::getline(std::cin, line)) {
    nlohmann::json req;
    try {
      req = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      reply({{"type", "error"}, {"message", "malformed request"}});
      continue;
    }
    const std::string type = req.value("type", "");
    if (type == "hello") {
      reply({{"type", "hello"}, {"protocol", mode == "wrong-protocol" ? 2 : 1}, {"name", mode}});
      continue;
    }
    if (type != "predict") {
      reply({{"type", "error"}, {"message", "unknown request type"}});
      continue;
    }
    if (mode == "crash") return 3;
    if (mode == "slow") std::this_thread::sleep_for(std::chrono::seconds(5));
    if (mode == "error") {
      reply({{"type", "error"}, {"message", "model exploded"}});
      continue;
    }
    if (mode == "garbage") {
      std::cout << "this is not json\n" << std::flush;
      continue;
    }
    try {
      reply(predict(mode, req));
    } catch (const std::exception& e) {
      reply({{"type", "error"}, {"message", e.what()}});
    }
  }
  return 0;
}
