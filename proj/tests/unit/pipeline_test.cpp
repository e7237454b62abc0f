#include <gtest/gtest.h>

#include <algorithm>
#include <mutex>
#include <random>
#include <set>

#include "crownstitch/backends/watershed.hpp"
#include "crownstitch/geometry/rle.hpp"
#include "crownstitch/pipeline/inference.hpp"
#include "crownstitch/pipeline/instances.hpp"
#include "support/pipeline_fakes.hpp"
#include "support/synthetic_forest.hpp"

namespace cb = crownstitch::backends;
namespace cg = crownstitch::geometry;
namespace cp = crownstitch::pipeline;
namespace cr = crownstitch::raster;
using crownstitch::testing::Disk;
using crownstitch::testing::disk_polygon;
using crownstitch::testing::DiskBackend;
using crownstitch::testing::EmptyBackend;
using crownstitch::testing::FailingBackend;
using crownstitch::testing::FullInstance;
using crownstitch::testing::merge_oracle;
using crownstitch::testing::random_instance;
using crownstitch::testing::rect_instance;
using crownstitch::testing::to_frame;

namespace {

cb::InstancePrediction pred(double score, int w = 8, int h = 8) {
  cg::BinaryMask m(w, h);
  m.set(3, 3);
  return {score, cg::rle_encode(m), "t"};
}

cr::GeoRaster blank_rgb(int w, int h) {
  return cr::GeoRaster::from_u8(w, h, 3, cr::AffineTransform(0.0, 0.1, 100.0, -0.1), "EPSG:32632",
                                std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h * 3, 0));
}

}  // namespace

// ---------------------------------------------------------------- score filter

TEST(ScoreFilter, InclusiveThreshold) {
  const auto out = cp::filter_by_score({pred(0.2), pred(0.3), pred(0.9)}, 0.3);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_DOUBLE_EQ(out[0].score, 0.3);
  EXPECT_DOUBLE_EQ(out[1].score, 0.9);
  EXPECT_EQ(cp::filter_by_score({pred(0.0), pred(0.5)}, 0.0).size(), 2u);
  EXPECT_TRUE(cp::filter_by_score({}, 0.3).empty());
  EXPECT_THROW(cp::filter_by_score({}, 1.5), crownstitch::ValidationError);
}

// ---------------------------------------------------------------- placement & edges

TEST(Placement, BboxIsTileOffsetPlusMaskBox) {
  cg::BinaryMask m(16, 16);
  m.fill_rect({3, 5, 4, 2});
  m.set(9, 6);
  const cr::TileRect tile{100, 200, 16, 2, 3, {}};
  const auto p = cp::place_instance({0.7, cg::rle_encode(m), "x"}, tile, 4, {0, 0, 1000, 1000});
  ASSERT_TRUE(p);
  EXPECT_EQ(p->bbox, (cr::PixelRect{103, 205, 7, 2}));
  EXPECT_EQ(p->mask, m.crop({3, 5, 7, 2}));
  EXPECT_EQ(p->key, (cp::InstanceKey{2, 3, 4}));
  EXPECT_DOUBLE_EQ(p->score, 0.7);
}

TEST(Placement, ClipsToMosaicExtent) {
  // a 16 px tile hanging 6 px over the right edge of a 10 px wide mosaic
  cg::BinaryMask m(16, 16);
  m.fill_rect({8, 2, 6, 3});
  m.fill_rect({12, 8, 2, 2});
  const cr::TileRect tile{0, 0, 16, 0, 0, {true, true, true, true}};
  const auto p = cp::place_instance({0.5, cg::rle_encode(m), "x"}, tile, 0, {0, 0, 10, 16});
  ASSERT_TRUE(p);
  EXPECT_EQ(p->bbox, (cr::PixelRect{8, 2, 2, 3}));
  cg::BinaryMask only_padding(16, 16);
  only_padding.fill_rect({12, 0, 3, 3});
  EXPECT_FALSE(cp::place_instance({0.5, cg::rle_encode(only_padding), "x"}, tile, 0, {0, 0, 10, 16}));
  EXPECT_FALSE(cp::place_instance({0.5, cg::rle_encode(cg::BinaryMask(16, 16)), "x"}, tile, 0, {0, 0, 10, 16}));
}

TEST(EdgeRemoval, Rules) {
  const cr::TileRect interior{100, 100, 50, 1, 1, {}};
  EXPECT_TRUE(cp::touches_cut_edge(rect_instance({100, 120, 5, 5}, 1, {}), interior));  // col 0
  EXPECT_TRUE(cp::touches_cut_edge(rect_instance({120, 100, 5, 5}, 1, {}), interior));  // row 0
  EXPECT_TRUE(cp::touches_cut_edge(rect_instance({140, 120, 10, 5}, 1, {}), interior));  // col W-1
  EXPECT_TRUE(cp::touches_cut_edge(rect_instance({120, 145, 5, 5}, 1, {}), interior));  // row H-1
  EXPECT_FALSE(cp::touches_cut_edge(rect_instance({101, 101, 48, 48}, 1, {}), interior));

  const cr::TileRect left_border{0, 100, 50, 1, 0, {true, false, false, false}};
  EXPECT_FALSE(cp::touches_cut_edge(rect_instance({0, 120, 5, 5}, 1, {}), left_border));
  EXPECT_TRUE(cp::touches_cut_edge(rect_instance({0, 120, 50, 5}, 1, {}), left_border));
  const cr::TileRect corner{0, 0, 50, 0, 0, {true, true, true, true}};
  EXPECT_FALSE(cp::touches_cut_edge(rect_instance({0, 0, 50, 50}, 1, {}), corner));
}

// ---------------------------------------------------------------- merge

TEST(Merge, LowIouPairStaysSeparate) {
  // 10x10 squares overlapping in a 1-column strip: IoU = 10 / 190
  const auto out =
      cp::merge_instances({rect_instance({0, 0, 10, 10}, 0.5, {0, 0, 0}), rect_instance({9, 0, 10, 10}, 0.6, {0, 1, 0})}, 0.1);
  EXPECT_EQ(out.size(), 2u);
}

TEST(Merge, DuplicatesFuseWithMaxScore) {
  const auto out = cp::merge_instances(
      {rect_instance({5, 5, 10, 10}, 0.4, {0, 1, 2}), rect_instance({5, 5, 10, 10}, 0.8, {0, 0, 7})}, 0.1);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_DOUBLE_EQ(out[0].score, 0.8);
  EXPECT_EQ(out[0].bbox, (cr::PixelRect{5, 5, 10, 10}));
  EXPECT_EQ(out[0].key, (cp::InstanceKey{0, 0, 7}));
}

TEST(Merge, ChainFusesTransitively) {
  // 12x10 rectangles, 4-column overlaps: IoU(A,B) = IoU(B,C) = 40 / 200 = 0.2
  const auto a = rect_instance({0, 0, 12, 10}, 0.3, {0, 0, 0});
  const auto b = rect_instance({8, 0, 12, 10}, 0.9, {0, 0, 1});
  const auto c = rect_instance({16, 0, 12, 10}, 0.5, {0, 0, 2});
  ASSERT_DOUBLE_EQ(cg::placed_mask_iou(a.mask, a.bbox, b.mask, b.bbox), 0.2);
  ASSERT_DOUBLE_EQ(cg::placed_mask_iou(b.mask, b.bbox, c.mask, c.bbox), 0.2);
  ASSERT_DOUBLE_EQ(cg::placed_mask_iou(a.mask, a.bbox, c.mask, c.bbox), 0.0);
  const auto out = cp::merge_instances({a, c, b}, 0.1);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].bbox, (cr::PixelRect{0, 0, 28, 10}));
  EXPECT_EQ(out[0].mask.area(), 280);
  EXPECT_DOUBLE_EQ(out[0].score, 0.9);
  EXPECT_EQ(cp::merge_instances({a, b, c}, 0.25).size(), 3u);
}

TEST(Merge, RepeatsUntilFixpoint) {
  // A and B fuse; only the fused mask reaches the threshold with C:
  // IoU(A,B) = 50/150, IoU(A,C) = IoU(B,C) = 30/115, IoU(AB,C) = 45/150
  const auto a = rect_instance({0, 0, 10, 10}, 0.5, {0, 0, 0});
  const auto b = rect_instance({5, 0, 10, 10}, 0.5, {0, 0, 1});
  const auto c = rect_instance({0, 0, 15, 3}, 0.5, {0, 0, 2});
  ASSERT_LT(cg::placed_mask_iou(a.mask, a.bbox, c.mask, c.bbox), 0.29);
  ASSERT_LT(cg::placed_mask_iou(b.mask, b.bbox, c.mask, c.bbox), 0.29);
  const auto out = cp::merge_instances({a, b, c}, 0.29);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].mask.area(), 150);
}

TEST(Merge, RandomSetsMatchOracleAndAreStable) {
  std::mt19937 rng(21);
  for (int t = 0; t < 100; ++t) {
    const int n = 2 + static_cast<int>(rng() % 12);
    std::vector<cp::PlacedInstance> in;
    for (int i = 0; i < n; ++i) in.push_back(random_instance(rng, {i / 4, i % 4, i}));
    const double iou = 0.05 + 0.05 * (rng() % 8);

    const auto out = cp::merge_instances(in, iou);
    // idempotence
    EXPECT_EQ(cp::merge_instances(out, iou), out);
    // permutation invariance
    auto shuffled = in;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    EXPECT_EQ(cp::merge_instances(shuffled, iou), out);
    // explicit-graph oracle
    std::vector<FullInstance> full;
    for (const auto& p : in) full.push_back({to_frame(p, 48, 48), p.score, p.key});
    const auto ref = merge_oracle(full, iou);
    ASSERT_EQ(out.size(), ref.size()) << "trial " << t;
    for (std::size_t i = 0; i < out.size(); ++i) {
      EXPECT_EQ(to_frame(out[i], 48, 48), ref[i].mask);
      EXPECT_EQ(out[i].score, ref[i].score);
      EXPECT_EQ(out[i].key, ref[i].key);
      EXPECT_EQ(out[i].bbox, to_frame(out[i], 48, 48).bounding_box());
    }
  }
}

// ---------------------------------------------------------------- run_inference

TEST(Inference, ConfigValidation) {
  EXPECT_NO_THROW(cp::InferenceConfig{}.validate());
  for (auto c : {cp::InferenceConfig{0, 0.8, 0.3, 0.1, 1}, cp::InferenceConfig{64, 1.0, 0.3, 0.1, 1},
                 cp::InferenceConfig{64, 0.5, -0.1, 0.1, 1}, cp::InferenceConfig{64, 0.5, 0.3, 1.1, 1},
                 cp::InferenceConfig{64, 0.5, 0.3, 0.1, -1}}) {
    EXPECT_THROW(c.validate(), crownstitch::ValidationError);
  }
}

TEST(Inference, EmptyBackendGivesEmptyCollection) {
  EmptyBackend backend;
  const auto res = cp::run_inference(blank_rgb(100, 80), backend, {64, 0.5, 0.3, 0.1, 1.0});
  EXPECT_TRUE(res.crowns.features.empty());
  EXPECT_EQ(res.report.tiles, 6u);
  EXPECT_EQ(res.report.counts.predicted, 0u);
  EXPECT_EQ(res.crowns.crs, "EPSG:32632");
  const auto j = res.report.to_json();
  EXPECT_EQ(j["counts"]["after_overlap_resolution"], 0);
  EXPECT_EQ(j["backend"], "empty");
}

TEST(Inference, TileFailures) {
  FailingBackend all;
  EXPECT_THROW(cp::run_inference(blank_rgb(100, 80), all, {64, 0.5, 0.3, 0.1, 1.0}), crownstitch::RuntimeFailure);
  FailingBackend some({"tile_0_1", "tile_1_0"});
  const auto res = cp::run_inference(blank_rgb(100, 80), some, {64, 0.5, 0.3, 0.1, 1.0});
  ASSERT_EQ(res.report.failed_tiles.size(), 2u);
  EXPECT_EQ(res.report.failed_tiles[0].tile_id, "tile_0_1");
  EXPECT_NE(res.report.failed_tiles[0].error.find("boom"), std::string::npos);
  EXPECT_EQ(res.report.to_json()["tiles_failed"], 2);
}

TEST(Inference, ChmRequiredWhenBackendNeedsIt) {
  cb::WatershedBackend ws;
  EXPECT_THROW(cp::run_inference(blank_rgb(64, 64), ws, {64, 0.5, 0.3, 0.1, 1.0}), crownstitch::ValidationError);
}

// Perfect detector over a grid of disks: every disk comes out once, the
// polygons are disjoint and each matches its disk.
TEST(Inference, DiskForestRoundTrip) {
  std::mt19937 rng(4);
  const auto forest = crownstitch::testing::make_forest(rng, 3, 4, 5.0, 0.05, 1.0, 2.0);
  DiskBackend backend(forest.disks, 0.8);
  const cp::InferenceConfig cfg{128, 0.6, 0.3, 0.1, 0.5};
  const auto res = cp::run_inference(forest.ortho, backend, cfg, nullptr, {2, {}});
  ASSERT_EQ(res.crowns.features.size(), forest.disks.size());
  std::set<std::size_t> matched;
  for (const auto& f : res.crowns.features) {
    EXPECT_GE(f.polygon.score(), cfg.score_threshold);
    for (std::size_t i = 0; i < forest.disks.size(); ++i)
      if (cg::polygon_iou(f.polygon, disk_polygon(forest.disks[i])) >= 0.9) matched.insert(i);
  }
  EXPECT_EQ(matched.size(), forest.disks.size());
  const auto& c = res.report.counts;
  EXPECT_GE(c.predicted, c.after_score_filter);
  EXPECT_GE(c.after_score_filter, c.after_edge_removal);
  EXPECT_GE(c.after_edge_removal, c.fused);
  EXPECT_GE(c.fused, c.after_overlap_resolution);
  EXPECT_GT(c.edge_dropped, 0u);
  for (std::size_t i = 0; i < res.crowns.features.size(); ++i)
    for (std::size_t j = i + 1; j < res.crowns.features.size(); ++j)
      EXPECT_LT(cg::intersection_area(res.crowns.features[i].polygon, res.crowns.features[j].polygon), 1e-6);

  // worker count does not change the output
  DiskBackend again(forest.disks, 0.8);
  const auto serial = cp::run_inference(forest.ortho, again, cfg, nullptr, {1, {}});
  EXPECT_EQ(cg::to_geojson(serial.crowns).dump(), cg::to_geojson(res.crowns).dump());
}

TEST(Inference, CrownInOverlapZoneIsReportedOnce) {
  // 200x100 px mosaic, 100 px tiles at 50% overlap: origins 0, 50, 100. A
  // crown centered at x = 75 px sits wholly inside tiles 0 and 1.
  const double gsd = 0.1;
  auto forest = crownstitch::testing::render_forest(200, 100, gsd, {{500000.0 + 7.5, 5200000.0 - 5.0, 1.5, 20.0}});
  DiskBackend backend(forest.disks, 0.9);
  const auto res = cp::run_inference(forest.ortho, backend, {100, 0.5, 0.3, 0.1, 1.0});
  EXPECT_EQ(res.report.counts.after_edge_removal, 2u);
  ASSERT_EQ(res.crowns.features.size(), 1u);
  EXPECT_GT(cg::polygon_iou(res.crowns.features[0].polygon, disk_polygon(forest.disks[0])), 0.9);
}

TEST(Inference, ScoreFilterAppliesBeforeFusion) {
  auto forest = crownstitch::testing::render_forest(100, 100, 0.1, {{500000.0 + 5.0, 5200000.0 - 5.0, 2.0, 20.0}});
  DiskBackend low(forest.disks, 0.29);
  const auto res = cp::run_inference(forest.ortho, low, {100, 0.5, 0.3, 0.1, 1.0});
  EXPECT_EQ(res.report.counts.predicted, 1u);
  EXPECT_EQ(res.report.counts.after_score_filter, 0u);
  EXPECT_TRUE(res.crowns.features.empty());
}

TEST(Inference, MinCrownAreaDropsSmallCrowns) {
  auto forest = crownstitch::testing::render_forest(
      100, 100, 0.1, {{500000.0 + 3.0, 5200000.0 - 3.0, 0.4, 20.0}, {500000.0 + 7.0, 5200000.0 - 7.0, 1.5, 20.0}});
  DiskBackend backend(forest.disks, 0.9);
  const auto res = cp::run_inference(forest.ortho, backend, {100, 0.5, 0.3, 0.1, 1.0});
  EXPECT_EQ(res.report.counts.fused, 2u);
  ASSERT_EQ(res.crowns.features.size(), 1u);
  EXPECT_GT(res.crowns.features[0].polygon.area(), 1.0);
}

TEST(Inference, WatershedOnSmallForest) {
  std::mt19937 rng(8);
  const auto forest = crownstitch::testing::make_forest(rng, 2, 3, 6.0, 0.05, 1.5, 2.5);
  cb::WatershedBackend backend({3.0, 20.0, 2.0, 100});
  std::vector<nlohmann::json> events;
  std::mutex mu;
  cp::RunOptions opts{2, [&](const nlohmann::json& e) {
                        std::lock_guard lock(mu);
                        events.push_back(e);
                      }};
  const auto res = cp::run_inference(forest.ortho, backend, {128, 0.8, 0.3, 0.1, 1.0}, &forest.chm, opts);
  ASSERT_EQ(res.crowns.features.size(), forest.disks.size());
  for (const auto& d : forest.disks) {
    double best = 0;
    for (const auto& f : res.crowns.features) best = std::max(best, cg::polygon_iou(f.polygon, disk_polygon(d)));
    EXPECT_GE(best, 0.5);
  }
  const auto tiles = std::count_if(events.begin(), events.end(), [](const auto& e) { return e["event"] == "tile"; });
  EXPECT_EQ(static_cast<std::size_t>(tiles), res.report.tiles);
}
