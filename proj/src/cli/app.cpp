#include "crownstitch/cli/app.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "crownstitch/backends/external.hpp"
#include "crownstitch/backends/fixture.hpp"
#include "crownstitch/backends/watershed.hpp"
#include "crownstitch/dataset/coco.hpp"
#include "crownstitch/dataset/split.hpp"
#include "crownstitch/error.hpp"
#include "crownstitch/eval/io.hpp"
#include "crownstitch/eval/metrics.hpp"
#include "crownstitch/geometry/geojson.hpp"
#include "crownstitch/parallel.hpp"
#include "crownstitch/pipeline/inference.hpp"
#include "crownstitch/raster/chm.hpp"
#include "crownstitch/raster/geotiff.hpp"
#include "crownstitch/raster/image_io.hpp"

namespace crownstitch::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

// Line-delimited JSON on stderr. Pipeline events arrive from worker threads.
class EventLog {
 public:
  EventLog(std::ostream& err, bool quiet) : err_(err), quiet_(quiet), start_(std::chrono::steady_clock::now()) {}

  void operator()(nlohmann::json ev, bool force = false) {
    if (quiet_ && !force) return;
    ev["elapsed_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start_)
                           .count();
    std::lock_guard lock(mu_);
    err_ << ev.dump() << '\n';
    err_.flush();
  }

 private:
  std::ostream& err_;
  bool quiet_;
  std::chrono::steady_clock::time_point start_;
  std::mutex mu_;
};

struct GlobalOpts {
  int workers = default_workers();
  bool quiet = false;
};

struct GeorefOpts {
  std::string geotransform;  // six GDAL numbers or a sidecar file
  std::string crs;

  raster::GeoOverride to_override() const {
    raster::GeoOverride ov;
    if (!geotransform.empty()) {
      std::vector<double> nums;
      std::stringstream ss(geotransform);
      std::string part;
      bool numeric = true;
      while (std::getline(ss, part, ',')) {
        try {
          std::size_t used = 0;
          nums.push_back(std::stod(part, &used));
          if (part.find_first_not_of(" \t", used) != std::string::npos) numeric = false;
        } catch (const std::exception&) {
          numeric = false;
        }
      }
      if (numeric && nums.size() == 6) {
        std::array<double, 6> gt{};
        std::copy(nums.begin(), nums.end(), gt.begin());
        ov.transform = raster::AffineTransform::from_gdal(gt);
      } else if (fs::is_regular_file(geotransform)) {
        ov.transform = raster::read_transform_sidecar(geotransform);
      } else {
        throw ValidationError("--geotransform wants six comma-separated numbers or a transform file, got '" +
                              geotransform + "'");
      }
    }
    if (!crs.empty()) ov.crs = crs;
    return ov;
  }
};

void add_georef(CLI::App* sub, GeorefOpts& g, const std::string& what) {
  sub->add_option("--geotransform", g.geotransform,
                  "georeferencing for a " + what + " without it: origin_x,scale_x,0,origin_y,0,scale_y or a "
                  "transform file with those six numbers one per line");
  sub->add_option("--crs", g.crs, "CRS of the " + what + ", e.g. EPSG:32632 (overrides the file)");
}

// ---------------------------------------------------------------- chm

struct ChmOpts {
  std::string dsm, dem, out;
};

int do_chm(const ChmOpts& o, EventLog& log, std::ostream& out) {
  const auto dsm = raster::read_geotiff(o.dsm);
  const auto dem = raster::read_geotiff(o.dem);
  log({{"event", "loaded"}, {"dsm", {dsm.width(), dsm.height()}}, {"dem", {dem.width(), dem.height()}}});
  const auto chm = raster::compute_chm(dsm, dem);
  raster::write_geotiff(chm, o.out);
  log({{"event", "written"}, {"path", o.out}});
  out << "wrote " << chm.width() << "x" << chm.height() << " CHM to " << o.out << "\n";
  return 0;
}

// ---------------------------------------------------------------- build-dataset

struct DatasetOpts {
  std::string ortho, crowns, out, role, site, crowns_crs, manifest;
  GeorefOpts georef;
  dataset::BuildOptions build;
};

int do_build_dataset(const DatasetOpts& o, const GlobalOpts& g, EventLog& log, std::ostream& out) {
  std::optional<dataset::SplitRole> role;
  if (!o.role.empty()) role = dataset::parse_split_role(o.role);

  const auto ortho = raster::read_geotiff(o.ortho, o.georef.to_override());
  const std::string site = o.site.empty() ? fs::path(o.ortho).stem().string() : o.site;
  const auto crowns = dataset::load_crown_annotations(
      o.crowns, site, o.crowns_crs.empty() ? std::nullopt : std::optional<std::string>(o.crowns_crs));
  log({{"event", "loaded"}, {"ortho", {ortho.width(), ortho.height()}}, {"crowns", crowns.crowns.size()}});

  const auto ds = dataset::build_coco_dataset(ortho, crowns, o.build);
  log({{"event", "stage"}, {"stage", "annotations"}, {"images", ds.images.size()}, {"annotations", ds.annotations.size()}});
  dataset::write_tile_images(ortho, ds, o.out, g.workers);
  dataset::write_coco(ds, o.out);
  log({{"event", "written"}, {"path", (fs::path(o.out) / "annotations.json").string()}});

  if (role) {
    const fs::path manifest =
        o.manifest.empty() ? fs::path(o.out).lexically_normal().parent_path() / "splits.json" : fs::path(o.manifest);
    auto m = dataset::SplitManifest::load_or_empty(manifest);
    m.assign(site, *role, static_cast<int>(ds.images.size()));
    m.save(manifest);
    log({{"event", "manifest"}, {"path", manifest.string()}, {"site", site}, {"role", o.role}});
  }
  out << "wrote " << ds.images.size() << " tiles and " << ds.annotations.size() << " annotations to " << o.out
      << "\n";
  return 0;
}

// ---------------------------------------------------------------- infer

struct InferOpts {
  std::string ortho, chm, backend, out, report;
  GeorefOpts georef;
  pipeline::InferenceConfig config;
  backends::WatershedParams watershed;
  int processes = 1;
  double timeout_s = 120.0;
  bool send_chm = false;

  // Keys are the flag names, so the block can be pasted into an [infer]
  // section of a config file.
  ordered_json echo() const {
    ordered_json j;
    j["ortho"] = ortho;
    j["chm"] = chm;
    j["geotransform"] = georef.geotransform;
    j["crs"] = georef.crs;
    j["backend"] = backend;
    j["tile-size"] = config.tile_size;
    j["overlap"] = config.overlap;
    j["score-threshold"] = config.score_threshold;
    j["merge-iou"] = config.merge_iou;
    j["min-crown-area"] = config.min_crown_area;
    j["ws-sigma"] = watershed.smoothing_sigma;
    j["ws-min-distance"] = watershed.min_treetop_distance;
    j["ws-min-height"] = watershed.min_height;
    j["ws-min-pixels"] = watershed.min_crown_pixels;
    j["processes"] = processes;
    j["timeout"] = timeout_s;
    j["send-chm"] = send_chm;
    j["out"] = out;
    return j;
  }
};

std::unique_ptr<backends::SegmentationBackend> make_backend(const InferOpts& o) {
  const auto colon = o.backend.find(':');
  const std::string kind = o.backend.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : o.backend.substr(colon + 1);
  if (kind == "watershed" && colon == std::string::npos) {
    o.watershed.validate();
    return std::make_unique<backends::WatershedBackend>(o.watershed);
  }
  if (kind == "fixture" && !arg.empty()) {
    return std::make_unique<backends::FixtureBackend>(arg);
  }
  if (kind == "external" && !arg.empty()) {
    if (o.processes < 1) throw ValidationError("--processes must be at least 1");
    if (!(o.timeout_s > 0.0)) throw ValidationError("--timeout must be positive");
    backends::ExternalOptions eo;
    eo.command = arg;
    eo.processes = o.processes;
    eo.timeout = std::chrono::milliseconds(static_cast<long long>(o.timeout_s * 1000.0));
    eo.send_chm = o.send_chm;
    return std::make_unique<backends::ExternalBackend>(eo);
  }
  throw ValidationError("unknown backend '" + o.backend + "'; expected watershed, fixture:<dir> or external:<command>");
}

fs::path default_report_path(const fs::path& out) {
  fs::path p = out;
  p.replace_extension(".report.json");
  return p;
}

int do_infer(const InferOpts& o, const GlobalOpts& g, EventLog& log, std::ostream& out) {
  o.config.validate();
  auto backend = make_backend(o);
  const auto ortho = raster::read_geotiff(o.ortho, o.georef.to_override());
  std::optional<raster::GeoRaster> chm;
  if (!o.chm.empty()) chm = raster::read_geotiff(o.chm);
  log({{"event", "loaded"}, {"ortho", {ortho.width(), ortho.height()}}, {"backend", backend->capabilities().name}});

  pipeline::RunOptions run;
  run.workers = g.workers;
  run.on_event = [&log](const nlohmann::json& ev) { log(ev); };
  const auto result = pipeline::run_inference(ortho, *backend, o.config, chm ? &*chm : nullptr, run);

  geometry::write_geojson(result.crowns, o.out);
  ordered_json report;
  report["command"] = "infer";
  report["version"] = CROWNSTITCH_VERSION;
  report["config"] = o.echo();
  const auto run_json = result.report.to_json();
  for (const auto& [k, v] : run_json.items()) report[k] = v;
  const fs::path report_path = o.report.empty() ? default_report_path(o.out) : fs::path(o.report);
  geometry::write_json_file(report_path, report);
  log({{"event", "written"}, {"path", o.out}, {"report", report_path.string()}});

  out << "wrote " << result.crowns.features.size() << " crowns to " << o.out << " (" << result.report.tiles
      << " tiles, " << result.report.failed_tiles.size() << " failed)\n";
  return 0;
}

// ---------------------------------------------------------------- eval

struct EvalOpts {
  std::string gt, pred, out = "eval.json";
  int max_dets = 100;
};

bool is_feature_collection(const nlohmann::json& j) {
  return j.is_object() && j.contains("type") && j["type"] == "FeatureCollection";
}

std::string fixed1(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

int do_eval(const EvalOpts& o, const GlobalOpts& g, EventLog& log, std::ostream& out) {
  if (o.max_dets < 1) throw ValidationError("--max-dets must be at least 1");
  const auto gt = geometry::read_json_file(o.gt);
  const auto pred = geometry::read_json_file(o.pred);

  const bool polygons = is_feature_collection(gt);
  if (polygons != is_feature_collection(pred)) {
    throw ValidationError("--gt and --pred must both be GeoJSON FeatureCollections or both COCO files");
  }
  eval::EvalResult res;
  if (polygons) {
    const auto gfc = geometry::parse_polygon_features(gt);
    const auto pfc = geometry::parse_polygon_features(pred);
    if (gfc.crs && pfc.crs && *gfc.crs != *pfc.crs) {
      throw ValidationError("CRS mismatch: ground truth is " + *gfc.crs + ", predictions are " + *pfc.crs);
    }
    std::vector<geometry::PolygonGeo> gp, pp;
    for (const auto& f : gfc.features) gp.push_back(f.polygon);
    for (const auto& f : pfc.features) pp.push_back(f.polygon);
    res = eval::evaluate_polygons(gp, pp, o.max_dets);
  } else {
    res = eval::evaluate_coco(eval::coco_eval_items(gt, pred), o.max_dets, g.workers);
  }

  ordered_json doc;
  doc["mode"] = polygons ? "polygon-iou" : "coco-mask";
  if (polygons) doc["note"] = "polygon IoU over one scene; not the COCO mask protocol";
  doc["config"] = {{"gt", o.gt}, {"pred", o.pred}, {"max-dets", o.max_dets}};
  const auto res_json = res.to_json();
  for (const auto& [k, v] : res_json.items()) doc[k] = v;
  geometry::write_json_file(o.out, doc);
  log({{"event", "written"}, {"path", o.out}});

  out << "mode          " << (polygons ? "polygon-iou (not COCO mask protocol)" : "coco-mask") << "\n"
      << "images        " << res.images << "\n"
      << "ground truth  " << res.ground_truths << "\n"
      << "detections    " << res.detections << "\n"
      << "map           " << fixed1(res.map) << "\n"
      << "map50         " << fixed1(res.map50) << "\n"
      << "map75         " << fixed1(res.map75) << "\n";
  for (int t = 0; t < eval::kNumThresholds; ++t) {
    out << "  AP@" << 50 + 5 * t << "       " << fixed1(res.per_threshold_ap[t]) << "\n";
  }
  out << "tp/fp/fn@50   " << res.counts.tp << "/" << res.counts.fp << "/" << res.counts.fn << "\n";
  return 0;
}

// ---------------------------------------------------------------- backends list

int do_backends_list(std::ostream& out) {
  out << "watershed        chm  marker watershed on a canopy height model (--chm required)\n"
      << "fixture:<dir>    rgb  replays <dir>/<tile_id>.json result messages\n"
      << "external:<cmd>   rgb  line-delimited JSON protocol with <cmd> over stdin/stdout (--send-chm adds the CHM)\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Tree-crown segmentation over georeferenced orthomosaics", "crownstitch"};
  app.set_version_flag("--version", std::string("crownstitch ") + CROWNSTITCH_VERSION);
  app.set_config("--config", "", "TOML config file; sections are subcommand names, command-line flags win");
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOpts g;
  app.add_option("--workers", g.workers, "worker threads (default: logical CPUs)")->check(CLI::PositiveNumber);
  app.add_flag("--quiet", g.quiet, "only log errors");

  ChmOpts chm;
  auto* chm_cmd = app.add_subcommand("chm", "canopy height model = DSM - DEM (bilinear), clamped at 0");
  chm_cmd->add_option("--dsm", chm.dsm, "surface model GeoTIFF")->required()->check(CLI::ExistingFile);
  chm_cmd->add_option("--dem", chm.dem, "terrain model GeoTIFF")->required()->check(CLI::ExistingFile);
  chm_cmd->add_option("--out", chm.out, "output GeoTIFF")->required();

  DatasetOpts ds;
  auto* ds_cmd = app.add_subcommand("build-dataset", "tile an orthomosaic and its crown polygons into a COCO dataset");
  ds_cmd->add_option("--ortho", ds.ortho, "orthomosaic GeoTIFF")->required()->check(CLI::ExistingFile);
  ds_cmd->add_option("--crowns", ds.crowns, "crown polygons (GeoJSON)")->required()->check(CLI::ExistingFile);
  ds_cmd->add_option("--out", ds.out, "output directory")->required();
  ds_cmd->add_option("--tile-size", ds.build.tile_size, "tile side in pixels")->capture_default_str();
  ds_cmd->add_option("--overlap", ds.build.overlap, "tile overlap fraction")->capture_default_str();
  ds_cmd->add_option("--min-fragment-area", ds.build.min_fragment_area, "drop clipped pieces below this (px^2)")
      ->capture_default_str();
  ds_cmd->add_option("--role", ds.role, "record the site in the split manifest as train, val or test");
  ds_cmd->add_option("--site", ds.site, "site name (default: orthomosaic file stem)");
  ds_cmd->add_option("--manifest", ds.manifest, "split manifest (default: splits.json next to --out)");
  ds_cmd->add_option("--crowns-crs", ds.crowns_crs, "CRS for crown files without one");
  add_georef(ds_cmd, ds.georef, "orthomosaic");

  InferOpts inf;
  auto* inf_cmd = app.add_subcommand("infer", "tiled crown segmentation of an orthomosaic to GeoJSON");
  inf_cmd->add_option("--ortho", inf.ortho, "orthomosaic GeoTIFF")->required()->check(CLI::ExistingFile);
  inf_cmd->add_option("--chm", inf.chm, "canopy height model GeoTIFF")->check(CLI::ExistingFile);
  inf_cmd->add_option("--backend", inf.backend, "watershed | fixture:<dir> | external:<command>")->required();
  inf_cmd->add_option("--out", inf.out, "output GeoJSON")->required();
  inf_cmd->add_option("--report", inf.report, "run report (default: <out>.report.json)");
  inf_cmd->add_option("--tile-size", inf.config.tile_size, "tile side in pixels")->capture_default_str();
  inf_cmd->add_option("--overlap", inf.config.overlap, "tile overlap fraction")->capture_default_str();
  inf_cmd->add_option("--score-threshold", inf.config.score_threshold, "drop instances scoring below")
      ->capture_default_str();
  inf_cmd->add_option("--merge-iou", inf.config.merge_iou, "fuse cross-tile duplicates at this mask IoU")
      ->capture_default_str();
  inf_cmd->add_option("--min-crown-area", inf.config.min_crown_area, "drop final crowns below this (m^2)")
      ->capture_default_str();
  inf_cmd->add_option("--ws-sigma", inf.watershed.smoothing_sigma, "watershed: CHM smoothing sigma (px)")
      ->capture_default_str();
  inf_cmd->add_option("--ws-min-distance", inf.watershed.min_treetop_distance, "watershed: treetop spacing (px)")
      ->capture_default_str();
  inf_cmd->add_option("--ws-min-height", inf.watershed.min_height, "watershed: canopy height cutoff (m)")
      ->capture_default_str();
  inf_cmd->add_option("--ws-min-pixels", inf.watershed.min_crown_pixels, "watershed: smallest crown (px)")
      ->capture_default_str();
  inf_cmd->add_option("--processes", inf.processes, "external: backend processes")->capture_default_str();
  inf_cmd->add_option("--timeout", inf.timeout_s, "external: seconds per tile")->capture_default_str();
  inf_cmd->add_flag("--send-chm", inf.send_chm, "external: send the CHM with every tile");
  add_georef(inf_cmd, inf.georef, "orthomosaic");

  EvalOpts ev;
  auto* ev_cmd = app.add_subcommand("eval", "COCO mask mAP, or polygon-IoU AP for two GeoJSON files");
  ev_cmd->add_option("--gt", ev.gt, "COCO ground truth or GeoJSON")->required()->check(CLI::ExistingFile);
  ev_cmd->add_option("--pred", ev.pred, "COCO results array or GeoJSON")->required()->check(CLI::ExistingFile);
  ev_cmd->add_option("--max-dets", ev.max_dets, "detections kept per image")->capture_default_str();
  ev_cmd->add_option("--out", ev.out, "metrics JSON")->capture_default_str();

  auto* be_cmd = app.add_subcommand("backends", "segmentation backends");
  be_cmd->require_subcommand(1);
  auto* be_list = be_cmd->add_subcommand("list", "list available backends");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "crownstitch: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  EventLog log(err, g.quiet);
  try {
    if (chm_cmd->parsed()) return do_chm(chm, log, out);
    if (ds_cmd->parsed()) return do_build_dataset(ds, g, log, out);
    if (inf_cmd->parsed()) return do_infer(inf, g, log, out);
    if (ev_cmd->parsed()) return do_eval(ev, g, log, out);
    if (be_list->parsed()) return do_backends_list(out);
  } catch (const ValidationError& e) {
    log({{"event", "error"}, {"kind", "validation"}, {"message", e.what()}}, true);
    return 1;
  } catch (const std::exception& e) {
    log({{"event", "error"}, {"kind", "runtime"}, {"message", e.what()}}, true);
    return 2;
  }
  return 1;
}

}  // namespace crownstitch::cli
