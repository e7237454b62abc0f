#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "crownstitch/cli/app.hpp"
#include "crownstitch/eval/io.hpp"
#include "crownstitch/geometry/geojson.hpp"
#include "crownstitch/raster/geotiff.hpp"
#include "crownstitch/raster/tiling.hpp"
#include "support/synthetic_forest.hpp"
#include "support/temp_dir.hpp"

namespace cs = crownstitch;
using cs::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cs::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

cs::raster::GeoRaster constant(int w, int h, double gsd, float v, const std::string& crs = "EPSG:32632") {
  return cs::raster::GeoRaster::from_f32(w, h, cs::raster::AffineTransform(500000.0, gsd, 5200000.0, -gsd), crs,
                                         std::vector<float>(static_cast<std::size_t>(w) * h, v));
}

// 2 x 2 disks at 5 cm, small enough for a quick watershed run.
struct ForestFiles {
  fs::path ortho, chm, crowns;
  std::size_t disks;
};

ForestFiles write_forest(const TempDir& dir) {
  std::mt19937 rng(7);
  const auto forest = cs::testing::make_forest(rng, 2, 2, 10.0, 0.05, 2.0, 3.5);
  ForestFiles f{dir / "ortho.tif", dir / "chm.tif", dir / "crowns.geojson", forest.disks.size()};
  cs::raster::write_geotiff(forest.ortho, f.ortho);
  cs::raster::write_geotiff(forest.chm, f.chm);
  cs::geometry::FeatureCollection fc{"EPSG:32632", {}};
  for (std::size_t i = 0; i < forest.disks.size(); ++i) {
    fc.features.push_back({"gt_" + std::to_string(i), cs::testing::disk_polygon(forest.disks[i]).with_score(1.0)});
  }
  cs::geometry::write_geojson(fc, f.crowns);
  return f;
}

std::vector<std::string> infer_args(const ForestFiles& f, const fs::path& out) {
  return {"infer",        "--ortho",    f.ortho.string(), "--chm",           f.chm.string(),
          "--backend",    "watershed",  "--out",          out.string(),      "--tile-size",
          "256",          "--overlap",  "0.5",            "--ws-sigma",      "3",
          "--workers",    "2"};
}

// The report's config block as an [infer] section.
std::string config_to_toml(const nlohmann::json& config) {
  std::string toml = "[infer]\n";
  for (const auto& [k, v] : config.items()) toml += k + " = " + v.dump() + "\n";
  return toml;
}

}  // namespace

TEST(Cli, VersionAndHelpExitZero) {
  auto r = cli({"--version"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("crownstitch 0.1.0"), std::string::npos);
  r = cli({"--help"});
  EXPECT_EQ(r.code, 0);
  for (const char* sub : {"build-dataset", "chm", "infer", "eval", "backends"}) {
    EXPECT_NE(r.out.find(sub), std::string::npos) << sub;
  }
  r = cli({"infer", "--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("--score-threshold"), std::string::npos);
}

TEST(Cli, UsageErrorsExitOne) {
  TempDir dir;
  const auto f = write_forest(dir);
  EXPECT_EQ(cli({}).code, 1);
  EXPECT_EQ(cli({"frobnicate"}).code, 1);

  auto r = cli({"infer", "--backend", "watershed", "--out", (dir / "x.geojson").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("--ortho"), std::string::npos);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);

  auto args = infer_args(f, dir / "x.geojson");
  args.push_back("--no-such-flag");
  r = cli(args);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("--no-such-flag"), std::string::npos);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / "x.geojson"));

  EXPECT_EQ(cli({"chm", "--dsm", (dir / "missing.tif").string(), "--dem", f.chm.string(), "--out",
                 (dir / "c.tif").string()})
                .code,
            1);
  EXPECT_EQ(cli({"backends"}).code, 1);
}

TEST(Cli, ProcessExitCodes) {
  const std::string bin = CROWNSTITCH_CLI;
  auto status = [&](const std::string& args) {
    const int s = std::system((bin + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  EXPECT_EQ(status("--version"), 0);
  EXPECT_EQ(status("backends list"), 0);
  EXPECT_EQ(status("infer"), 1);
  EXPECT_EQ(status("eval --gt /nonexistent --pred /nonexistent"), 1);
  TempDir dir;
  write_text(dir / "junk.tif", "this is not a tiff at all");
  EXPECT_EQ(status("chm --dsm " + (dir / "junk.tif").string() + " --dem " + (dir / "junk.tif").string() +
                   " --out " + (dir / "c.tif").string()),
            2);
}

TEST(Cli, ChmWiring) {
  TempDir dir;
  cs::raster::write_geotiff(constant(20, 10, 0.5, 30.0f), dir / "dsm.tif");
  cs::raster::write_geotiff(constant(4, 2, 5.0, 10.0f), dir / "dem.tif");
  auto r = cli({"chm", "--dsm", (dir / "dsm.tif").string(), "--dem", (dir / "dem.tif").string(), "--out",
                (dir / "chm.tif").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto chm = cs::raster::read_geotiff(dir / "chm.tif");
  ASSERT_EQ(chm.width(), 20);
  ASSERT_EQ(chm.height(), 10);
  for (float v : chm.f32()) EXPECT_NEAR(v, 20.0f, 1e-6);

  // different CRS is bad input, not a crash
  cs::raster::write_geotiff(constant(4, 2, 5.0, 10.0f, "EPSG:32633"), dir / "dem33.tif");
  r = cli({"chm", "--dsm", (dir / "dsm.tif").string(), "--dem", (dir / "dem33.tif").string(), "--out",
           (dir / "chm2.tif").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("\"kind\":\"validation\""), std::string::npos);
}

TEST(Cli, InferWritesCrownsAndReport) {
  TempDir dir;
  const auto f = write_forest(dir);
  const auto out = dir / "crowns.geojson";
  const auto r = cli(infer_args(f, out));
  ASSERT_EQ(r.code, 0) << r.err;

  const auto fc = cs::geometry::read_polygon_features(out);
  EXPECT_EQ(fc.features.size(), f.disks);
  EXPECT_EQ(fc.crs, "EPSG:32632");

  const auto report = cs::geometry::read_json_file(dir / "crowns.report.json");
  EXPECT_EQ(report["command"], "infer");
  EXPECT_EQ(report["config"]["backend"], "watershed");
  EXPECT_EQ(report["config"]["tile-size"], 256);
  EXPECT_DOUBLE_EQ(report["config"]["overlap"].get<double>(), 0.5);
  EXPECT_DOUBLE_EQ(report["config"]["score-threshold"].get<double>(), 0.3);
  EXPECT_DOUBLE_EQ(report["config"]["merge-iou"].get<double>(), 0.1);
  EXPECT_DOUBLE_EQ(report["config"]["ws-sigma"].get<double>(), 3.0);
  EXPECT_EQ(report["tiles"], 9);
  EXPECT_EQ(report["counts"]["after_overlap_resolution"], f.disks);

  // every stderr line is a JSON event
  std::istringstream lines(r.err);
  std::string line;
  int tiles = 0;
  while (std::getline(lines, line)) {
    const auto ev = nlohmann::json::parse(line);
    ASSERT_TRUE(ev.contains("event")) << line;
    tiles += ev["event"] == "tile";
  }
  EXPECT_EQ(tiles, 9);
}

TEST(Cli, InferIsDeterministicAndConfigEchoReproduces) {
  TempDir dir;
  const auto f = write_forest(dir);
  ASSERT_EQ(cli(infer_args(f, dir / "a.geojson")).code, 0);
  auto args = infer_args(f, dir / "b.geojson");
  args.back() = "1";  // --workers
  ASSERT_EQ(cli(args).code, 0);
  const std::string first = slurp(dir / "a.geojson");
  EXPECT_FALSE(first.empty());
  EXPECT_EQ(first, slurp(dir / "b.geojson"));

  // feed the echoed config back in; only the output path is overridden
  const auto report = cs::geometry::read_json_file(dir / "a.report.json");
  write_text(dir / "echo.toml", config_to_toml(report["config"]));
  const auto r = cli({"--config", (dir / "echo.toml").string(), "infer", "--out", (dir / "c.geojson").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(first, slurp(dir / "c.geojson"));
  auto again = cs::geometry::read_json_file(dir / "c.report.json")["config"];
  again["out"] = report["config"]["out"];
  EXPECT_EQ(again, report["config"]);
}

TEST(Cli, FlagsOverrideConfigFile) {
  TempDir dir;
  const auto f = write_forest(dir);
  write_text(dir / "run.toml", "[infer]\noverlap = 0.25\nscore-threshold = 0.5\ntile-size = 256\n");
  auto args = infer_args(f, dir / "o.geojson");
  args.insert(args.begin(), {"--config", (dir / "run.toml").string()});
  const auto r = cli(args);  // args carry --overlap 0.5
  ASSERT_EQ(r.code, 0) << r.err;
  const auto config = cs::geometry::read_json_file(dir / "o.report.json")["config"];
  EXPECT_DOUBLE_EQ(config["overlap"].get<double>(), 0.5);
  EXPECT_DOUBLE_EQ(config["score-threshold"].get<double>(), 0.5);

  EXPECT_EQ(cli({"--config", (dir / "missing.toml").string(), "backends", "list"}).code, 1);
}

TEST(Cli, InferInputErrors) {
  TempDir dir;
  const auto f = write_forest(dir);
  // watershed without a CHM
  auto r = cli({"infer", "--ortho", f.ortho.string(), "--backend", "watershed", "--out", (dir / "o.geojson").string()});
  EXPECT_EQ(r.code, 1);
  r = cli({"infer", "--ortho", f.ortho.string(), "--backend", "magic", "--out", (dir / "o.geojson").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("unknown backend"), std::string::npos);
  auto args = infer_args(f, dir / "o.geojson");
  args.insert(args.end(), {"--score-threshold", "1.5"});
  EXPECT_EQ(cli(args).code, 1);
  args = infer_args(f, dir / "o.geojson");
  args.insert(args.end(), {"--ws-min-pixels", "0"});
  EXPECT_EQ(cli(args).code, 1);
  args = infer_args(f, dir / "o.geojson");
  args.insert(args.end(), {"--geotransform", "1,2,3"});
  EXPECT_EQ(cli(args).code, 1);
  EXPECT_FALSE(fs::exists(dir / "o.geojson"));
}

TEST(Cli, InferFixtureAndExternalBackends) {
  TempDir dir;
  const auto f = write_forest(dir);
  fs::create_directories(dir / "fixture");
  auto r = cli({"infer", "--ortho", f.ortho.string(), "--backend", "fixture:" + (dir / "fixture").string(), "--out",
                (dir / "empty.geojson").string(), "--tile-size", "256"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(cs::geometry::read_polygon_features(dir / "empty.geojson").features.empty());

  const std::string fake = CROWNSTITCH_FAKE_BACKEND;
  r = cli({"infer", "--ortho", f.ortho.string(), "--backend", "external:" + fake + " green-threshold", "--out",
           (dir / "green.geojson").string(), "--tile-size", "256", "--processes", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(cs::geometry::read_json_file(dir / "green.report.json")["backend"], "green-threshold");

  // every tile fails: runtime failure
  r = cli({"infer", "--ortho", f.ortho.string(), "--backend", "external:" + fake + " crash", "--out",
           (dir / "crash.geojson").string(), "--tile-size", "256"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("\"kind\":\"runtime\""), std::string::npos);

  // protocol mismatch is a configuration problem
  r = cli({"infer", "--ortho", f.ortho.string(), "--backend", "external:" + fake + " wrong-protocol", "--out",
           (dir / "proto.geojson").string()});
  EXPECT_EQ(r.code, 1);
}

TEST(Cli, EvalPerfectCocoFixture) {
  TempDir dir;
  nlohmann::json gt = {{"images", {{{"id", 1}, {"width", 20}, {"height", 16}, {"file_name", "a.png"}},
                                   {{"id", 2}, {"width", 20}, {"height", 16}, {"file_name", "b.png"}}}},
                       {"categories", {{{"id", 1}, {"name", "tree crown"}}}},
                       {"annotations", nlohmann::json::array()}};
  nlohmann::json preds = nlohmann::json::array();
  const std::vector<std::vector<double>> rings[] = {{{1, 1, 8, 1, 8, 7, 1, 7}},
                                                    {{10, 2, 18, 3, 15, 12}},
                                                    {{2, 9, 9, 9, 9, 15, 2, 15}}};
  for (int k = 0; k < 3; ++k) {
    const int image = k == 2 ? 2 : 1;
    gt["annotations"].push_back({{"id", k + 1}, {"image_id", image}, {"category_id", 1}, {"segmentation", rings[k]},
                                 {"area", 1.0}, {"bbox", {0, 0, 1, 1}}, {"iscrowd", 0}});
    const auto mask = cs::eval::rasterize_rings(rings[k], 20, 16);
    preds.push_back({{"image_id", image},
                     {"category_id", 1},
                     {"segmentation", cs::geometry::rle_to_json(cs::geometry::rle_encode(mask))},
                     {"score", 1.0}});
  }
  write_text(dir / "g.json", gt.dump());
  write_text(dir / "p.json", preds.dump());

  auto r = cli({"eval", "--gt", (dir / "g.json").string(), "--pred", (dir / "p.json").string(), "--out",
                (dir / "eval.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("map           100.0"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("map50         100.0"), std::string::npos);
  EXPECT_NE(r.out.find("map75         100.0"), std::string::npos);
  const auto doc = cs::geometry::read_json_file(dir / "eval.json");
  EXPECT_EQ(doc["mode"], "coco-mask");
  EXPECT_EQ(doc["map"], 100.0);
  EXPECT_EQ(doc["map50"], 100.0);
  EXPECT_EQ(doc["map75"], 100.0);
  EXPECT_EQ(doc["per_threshold_ap"].size(), 10u);
  EXPECT_EQ(doc["counts"]["tp"], 3);
  EXPECT_EQ(doc["ground_truths"], 3);
  EXPECT_EQ(doc["config"]["max-dets"], 100);

  // same inputs, same bytes
  r = cli({"eval", "--gt", (dir / "g.json").string(), "--pred", (dir / "p.json").string(), "--out",
           (dir / "eval2.json").string()});
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(slurp(dir / "eval.json"), slurp(dir / "eval2.json"));

  // mixing formats, or a result pointing at an unknown image
  r = cli({"eval", "--gt", (dir / "g.json").string(), "--pred", (dir / "p.json").string(), "--max-dets", "0"});
  EXPECT_EQ(r.code, 1);
  preds[0]["image_id"] = 9;
  write_text(dir / "bad.json", preds.dump());
  r = cli({"eval", "--gt", (dir / "g.json").string(), "--pred", (dir / "bad.json").string(), "--out",
           (dir / "e3.json").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("result 0"), std::string::npos);
}

TEST(Cli, EvalPolygonMode) {
  TempDir dir;
  const auto f = write_forest(dir);
  auto r = cli({"eval", "--gt", f.crowns.string(), "--pred", f.crowns.string(), "--out", (dir / "e.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("polygon-iou"), std::string::npos);
  EXPECT_NE(r.out.find("map           100.0"), std::string::npos);
  const auto doc = cs::geometry::read_json_file(dir / "e.json");
  EXPECT_EQ(doc["mode"], "polygon-iou");
  EXPECT_TRUE(doc.contains("note"));

  write_text(dir / "p.json", "[]");
  r = cli({"eval", "--gt", f.crowns.string(), "--pred", (dir / "p.json").string(), "--out", (dir / "e2.json").string()});
  EXPECT_EQ(r.code, 1);
}

TEST(Cli, BuildDatasetAndSplitManifest) {
  TempDir dir;
  const auto f = write_forest(dir);
  const auto ortho = cs::raster::read_geotiff(f.ortho);
  const auto out = dir / "data" / "site_a";
  auto r = cli({"build-dataset", "--ortho", f.ortho.string(), "--crowns", f.crowns.string(), "--out", out.string(),
                "--tile-size", "128", "--role", "train", "--site", "site_a"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto coco = cs::geometry::read_json_file(out / "annotations.json");
  EXPECT_EQ(coco["images"].size(), cs::raster::compute_tile_grid(ortho.width(), ortho.height(), 128, 0.5).size());
  EXPECT_EQ(coco["info"]["tile_size"], 128);
  EXPECT_DOUBLE_EQ(coco["info"]["overlap"].get<double>(), 0.5);
  for (const auto& im : coco["images"]) EXPECT_TRUE(fs::exists(out / im["file_name"].get<std::string>()));
  const auto manifest = cs::geometry::read_json_file(dir / "data" / "splits.json");
  EXPECT_NE(manifest.dump().find("site_a"), std::string::npos);

  // rebuilding is byte-identical
  const std::string first = slurp(out / "annotations.json");
  r = cli({"build-dataset", "--ortho", f.ortho.string(), "--crowns", f.crowns.string(), "--out", out.string(),
           "--tile-size", "128", "--role", "train", "--site", "site_a"});
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(first, slurp(out / "annotations.json"));

  // a site cannot change role
  r = cli({"build-dataset", "--ortho", f.ortho.string(), "--crowns", f.crowns.string(), "--out", out.string(),
           "--tile-size", "128", "--role", "val", "--site", "site_a"});
  EXPECT_EQ(r.code, 1);
  r = cli({"build-dataset", "--ortho", f.ortho.string(), "--crowns", f.crowns.string(), "--out", out.string(),
           "--role", "holdout"});
  EXPECT_EQ(r.code, 1);
  // overriding the orthomosaic CRS so it disagrees with the crowns
  r = cli({"build-dataset", "--ortho", f.ortho.string(), "--crowns", f.crowns.string(), "--out",
           (dir / "x").string(), "--crs", "EPSG:4326"});
  EXPECT_EQ(r.code, 1);
}

TEST(Cli, GeotransformOverride) {
  TempDir dir;
  const auto f = write_forest(dir);
  const auto ortho = cs::raster::read_geotiff(f.ortho);
  const auto gt = ortho.transform().to_gdal();
  std::ostringstream csv;
  csv.precision(17);
  for (int i = 0; i < 6; ++i) csv << (i ? "," : "") << gt[static_cast<std::size_t>(i)];
  std::ofstream(dir / "t.txt") << csv.str();
  auto r = cli({"build-dataset", "--ortho", f.ortho.string(), "--crowns", f.crowns.string(), "--out",
                (dir / "d1").string(), "--tile-size", "128", "--geotransform", csv.str()});
  ASSERT_EQ(r.code, 0) << r.err;
  // shifting the mosaic 1 km east leaves the crowns outside every tile
  auto shifted = gt;
  shifted[0] += 1000.0;
  std::ostringstream side;
  side.precision(17);
  for (double v : shifted) side << v << "\n";
  std::ofstream(dir / "shift.txt") << side.str();
  r = cli({"build-dataset", "--ortho", f.ortho.string(), "--crowns", f.crowns.string(), "--out",
           (dir / "d2").string(), "--tile-size", "128", "--geotransform", (dir / "shift.txt").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_GT(cs::geometry::read_json_file(dir / "d1" / "annotations.json")["annotations"].size(), 0u);
  EXPECT_EQ(cs::geometry::read_json_file(dir / "d2" / "annotations.json")["annotations"].size(), 0u);
}

TEST(Cli, BackendsList) {
  const auto r = cli({"backends", "list"});
  EXPECT_EQ(r.code, 0);
  for (const char* name : {"watershed", "fixture:", "external:"}) EXPECT_NE(r.out.find(name), std::string::npos);
}
