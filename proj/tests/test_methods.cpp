#include <gtest/gtest.h>

#include <random>
#include <string>
#include <vector>

#include "groundkit/harness.hpp"
#include "groundkit/methods.hpp"
#include "parser_corpus.hpp"

using namespace groundkit;

namespace {

GroundingSample make_sample(BBox gt, std::string instruction = "open settings") {
  GroundingSample s;
  s.id = "s1";
  s.image_ref = "unused.png";
  s.instruction = std::move(instruction);
  s.gt = gt;
  s.platform = Platform::kDesktop;
  return s;
}

}  // namespace

TEST(ParserCorpus, PointAnswers) {
  for (const auto& c : corpus::point_answers()) {
    if (c.expect) {
      Point p;
      ASSERT_NO_THROW(p = parse_point(c.raw, corpus::kWidth, corpus::kHeight)) << c.raw;
      EXPECT_NEAR(p.x, c.expect->x, 1e-9) << c.raw;
      EXPECT_NEAR(p.y, c.expect->y, 1e-9) << c.raw;
    } else {
      try {
        parse_point(c.raw, corpus::kWidth, corpus::kHeight);
        ADD_FAILURE() << "expected parse error for: " << c.raw;
      } catch (const ParseError& e) {
        EXPECT_EQ(e.raw(), c.raw);
      }
    }
  }
}

TEST(ParserCorpus, GridIdAnswers) {
  for (const auto& c : corpus::grid_id_answers()) {
    if (c.expect) {
      ExtremityIds ids;
      ASSERT_NO_THROW(ids = parse_grid_ids(c.raw, corpus::kMaxId)) << c.raw;
      EXPECT_EQ(ids, *c.expect) << c.raw;
    } else {
      EXPECT_THROW(parse_grid_ids(c.raw, corpus::kMaxId), ParseError) << c.raw;
    }
  }
}

TEST(ParserCorpus, RefusalsBecomeRecordedMisses) {
  const RasterImage img(400, 300);
  const GroundingSample s = make_sample({10, 10, 50, 50});
  for (const std::string& refusal : corpus::refusals()) {
    for (const char* spec : {"direct", "axis-grid", "mark-grid"}) {
      ConstantResponderModel model(refusal);
      Prediction p;
      ASSERT_NO_THROW(p = run_method(s, img, model, parse_method_spec(spec)));
      EXPECT_FALSE(p.click.has_value());
      EXPECT_EQ(p.failure, FailureKind::kParse);
      EXPECT_FALSE(p.failure_reason.empty());
      EXPECT_EQ(p.stages.size(), 1u);
      EXPECT_EQ(p.stages[0].raw_response, refusal);
    }
  }
}

TEST(Prompts, StemAndDeterminism) {
  const MethodConfig d = MethodConfig::defaults(MethodKind::kDirect);
  const std::string p = build_prompt(d, "open settings", 0, 800, 600);
  EXPECT_NE(p.find("Where should I click if I want to open settings?"), std::string::npos);
  EXPECT_EQ(p, build_prompt(d, "open settings", 0, 800, 600));
  EXPECT_THROW(build_prompt(d, "", 0, 800, 600), ArgumentError);
}

TEST(Prompts, MarkGridRefinementMentionsBothImages) {
  const MethodConfig m = MethodConfig::defaults(MethodKind::kMarkGrid);
  const std::string s0 = build_prompt(m, "open settings", 0, 800, 600);
  const std::string s1 = build_prompt(m, "open settings", 1, 1024, 512);
  for (const char* word : {"leftmost", "topmost", "rightmost", "bottommost"}) {
    EXPECT_NE(s0.find(word), std::string::npos);
    EXPECT_NE(s1.find(word), std::string::npos);
  }
  EXPECT_NE(s1.find("two images"), std::string::npos);
  EXPECT_NE(s1.find("original screenshot"), std::string::npos);
  EXPECT_NE(s1.find("magnified crop"), std::string::npos);
  EXPECT_EQ(s0.find("two images"), std::string::npos);
}

TEST(MethodConfig, DefaultsAndValidation) {
  const MethodConfig m = MethodConfig::defaults(MethodKind::kMarkGrid);
  EXPECT_EQ(m.rows, 8);
  EXPECT_EQ(m.zoom_levels, 1);
  EXPECT_EQ(m.crop_short_side, 512);
  EXPECT_EQ(MethodConfig::defaults(MethodKind::kGridAugmented).rows, 9);
  EXPECT_EQ(MethodConfig::defaults(MethodKind::kCoordinateScaffold).label_mode, LabelMode::kCoords);
  EXPECT_THROW(parse_method_spec("mark-grid:zoom=3"), ArgumentError);
  EXPECT_THROW(parse_method_spec("mark-grid:short_side=32"), ArgumentError);
  EXPECT_THROW(parse_method_spec("axis-grid:interval=5"), ArgumentError);
  EXPECT_THROW(parse_method_spec("teleport"), ArgumentError);
  EXPECT_THROW(parse_method_spec("mark-grid:rows"), ArgumentError);
  EXPECT_THROW(parse_method_spec("mark-grid:rows=abc"), ArgumentError);
}

TEST(MethodConfig, SpecParsingAndDigest) {
  const MethodConfig a = parse_method_spec("mark-grid:rows=5,cols=5,zoom=2");
  EXPECT_EQ(a.rows, 5);
  EXPECT_EQ(a.zoom_levels, 2);
  const MethodConfig b = parse_method_spec("axis-grid:interval=50,sides=bottom+left,grid=false");
  EXPECT_EQ(b.axis_sides, kAxisBottom | kAxisLeft);
  EXPECT_FALSE(b.draw_grid);
  EXPECT_EQ(method_digest(a), method_digest(MethodConfig::from_json(a.to_json())));
  EXPECT_NE(method_digest(a), method_digest(parse_method_spec("mark-grid:rows=5,cols=5,zoom=1")));
  // parameters irrelevant to the kind do not change the digest
  MethodConfig d = MethodConfig::defaults(MethodKind::kDirect);
  const std::string before = method_digest(d);
  d.axis_interval = 50;
  EXPECT_EQ(method_digest(d), before);
  EXPECT_EQ(method_digest(a).size(), 16u);
  EXPECT_EQ(parse_method_spec("mark_grid").kind, MethodKind::kMarkGrid);
}

TEST(SinglePass, DirectWithCenterEchoHits) {
  const RasterImage img(800, 600);
  const GroundingSample s = make_sample({100, 100, 200, 150});
  FixedResponderModel model({"(150, 125)"});
  const Prediction p = run_single_pass(s, img, model, MethodConfig::defaults(MethodKind::kDirect));
  ASSERT_TRUE(p.click);
  EXPECT_EQ(*p.click, (Point{150, 125}));
  EXPECT_TRUE(point_in_bbox(*p.click, s.gt));
  EXPECT_EQ(p.stages.size(), 1u);
  EXPECT_EQ(p.stages[0].image_digests[0], img.digest());
}

TEST(SinglePass, AxisGridPerfectReaderHitsSyntheticBenchmark) {
  SynthOptions o;
  o.n_samples = 12;
  o.seed = 3;
  const SynthBenchmark sb = synth_benchmark(o);
  PerfectReaderModel model;
  for (MethodKind k : {MethodKind::kAxisGrid, MethodKind::kCoordinateScaffold, MethodKind::kDirect}) {
    for (std::size_t i = 0; i < sb.images.size(); ++i) {
      const auto& s = sb.benchmark.samples[i];
      const Prediction p = run_single_pass(s, sb.images[i], model, MethodConfig::defaults(k));
      ASSERT_TRUE(p.click);
      EXPECT_TRUE(point_in_bbox(*p.click, s.gt)) << to_string(k) << " " << s.id;
    }
  }
}

TEST(SinglePass, ScaffoldIndicesNeverShowCoordinates) {
  const RasterImage img(600, 400);
  const MethodConfig cfg = MethodConfig::defaults(MethodKind::kScaffoldPrompting);
  const Rendered r = render_method_overlay(img, cfg);
  ASSERT_EQ(r.plan.texts.size(), 36u);
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 6; ++j) {
      EXPECT_EQ(r.plan.texts[i * 6 + j].s, "(" + std::to_string(i + 1) + "," + std::to_string(j + 1) + ")");
    }
  }
  // the controller sends exactly this render
  FixedResponderModel model({"(1, 1)"});
  const Prediction p = run_single_pass(make_sample({0, 0, 10, 10}), img, model, cfg);
  EXPECT_EQ(p.stages[0].image_digests[0], r.image.digest());
}

TEST(MarkGrid, ZoomZeroClicksCellCenter) {
  const RasterImage img(800, 600);
  // inside cell 10 (x 100..200, y 75..150)
  const GroundingSample s = make_sample({120, 90, 180, 140});
  PerfectReaderModel model;
  MethodConfig cfg = MethodConfig::defaults(MethodKind::kMarkGrid);
  cfg.zoom_levels = 0;
  const Prediction p = run_mark_grid(s, img, model, cfg);
  EXPECT_EQ(p.stages.size(), 1u);
  EXPECT_EQ(p.stages[0].raw_response, "leftmost: 10, topmost: 10, rightmost: 10, bottommost: 10");
  ASSERT_TRUE(p.click);
  EXPECT_EQ(*p.click, (Point{150, 112.5}));
}

TEST(MarkGrid, ZoomOneConsumesTwoScriptEntries) {
  const RasterImage img(800, 600);
  FixedResponderModel model({"leftmost: 10, topmost: 10, rightmost: 10, bottommost: 10",
                             "leftmost: 28, topmost: 28, rightmost: 29, bottommost: 37", "spare"});
  const Prediction p = run_mark_grid(make_sample({120, 90, 180, 140}), img, model,
                                     MethodConfig::defaults(MethodKind::kMarkGrid));
  EXPECT_EQ(model.calls(), 2);
  EXPECT_EQ(model.remaining(), 1u);
  ASSERT_EQ(p.stages.size(), 2u);
  EXPECT_EQ(p.stages[1].image_digests.size(), 2u);
  EXPECT_FALSE(p.degraded);
}

TEST(MarkGrid, FullCropAnswerReturnsCoarseBoxCenter) {
  std::mt19937 rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const int w = std::uniform_int_distribution<int>(400, 1600)(rng);
    const int h = std::uniform_int_distribution<int>(300, 1200)(rng);
    const RasterImage img(w, h);
    const GridSpec coarse(8, 8, w, h);
    std::uniform_int_distribution<int> id(1, 64);
    int a = id(rng), b = id(rng);
    const ExtremityIds e{std::min(a, b), std::min(a, b), std::max(a, b), std::max(a, b)};
    const BBox b0 = extremity_bbox(coarse, e);
    FixedResponderModel model({format_extremity_ids(e), "leftmost: 1, topmost: 1, rightmost: 64, bottommost: 64"});
    const Prediction p =
        run_mark_grid(make_sample({0, 0, 1, 1}), img, model, MethodConfig::defaults(MethodKind::kMarkGrid));
    ASSERT_TRUE(p.click);
    EXPECT_LE(std::abs(p.click->x - b0.center().x), 0.5);
    EXPECT_LE(std::abs(p.click->y - b0.center().y), 0.5);
  }
}

TEST(MarkGrid, RefinementParseFailureFallsBackToCoarseBox) {
  const RasterImage img(800, 600);
  FixedResponderModel model({"leftmost: 10, topmost: 10, rightmost: 11, bottommost: 19", "no idea"});
  const Prediction p = run_mark_grid(make_sample({120, 90, 180, 140}), img, model,
                                     MethodConfig::defaults(MethodKind::kMarkGrid));
  ASSERT_TRUE(p.click);
  EXPECT_TRUE(p.degraded);
  EXPECT_EQ(p.failure, FailureKind::kNone);
  EXPECT_EQ(*p.click, (BBox{100, 75, 300, 225}.center()));
  EXPECT_EQ(replay_click(p), p.click);
}

TEST(MarkGrid, CoarseParseFailureIsRecordedMiss) {
  const RasterImage img(800, 600);
  FixedResponderModel model({"leftmost: 99, topmost: 1, rightmost: 1, bottommost: 1"});
  const Prediction p = run_mark_grid(make_sample({120, 90, 180, 140}), img, model,
                                     MethodConfig::defaults(MethodKind::kMarkGrid));
  EXPECT_FALSE(p.click);
  EXPECT_EQ(p.failure, FailureKind::kParse);
  EXPECT_EQ(model.calls(), 1);
}

TEST(MarkGrid, StageCountIsOnePlusZoom) {
  const RasterImage img(1024, 768);
  for (int zoom : {0, 1, 2}) {
    PerfectReaderModel inner;
    struct Counting : Model {
      Model& m;
      int n = 0;
      explicit Counting(Model& mm) : m(mm) {}
      std::string name() const override { return "counting"; }
      Completion complete(const ChatRequest& r, const StageContext& c) override {
        ++n;
        return m.complete(r, c);
      }
    } counting(inner);
    MethodConfig cfg = MethodConfig::defaults(MethodKind::kMarkGrid);
    cfg.zoom_levels = zoom;
    const Prediction p = run_mark_grid(make_sample({300, 200, 420, 260}), img, counting, cfg);
    EXPECT_EQ(counting.n, 1 + zoom);
    EXPECT_EQ(static_cast<int>(p.stages.size()), 1 + zoom);
    ASSERT_TRUE(p.click);
    if (zoom > 0) {
      EXPECT_TRUE(point_in_bbox(*p.click, {300, 200, 420, 260}));
    }
  }
}

TEST(MarkGrid, MarginWidensCrop) {
  const RasterImage img(800, 600);
  MethodConfig cfg = MethodConfig::defaults(MethodKind::kMarkGrid);
  cfg.crop_margin = 20;
  PerfectReaderModel model;
  const Prediction p = run_mark_grid(make_sample({120, 90, 180, 140}), img, model, cfg);
  const Transform t = method_detail::transform_from_json(p.stages[1].parsed["transform"]);
  EXPECT_EQ(t.offset_x, 80);
  EXPECT_EQ(t.offset_y, 55);
}

// Random scripted answers: every click lies in the image and the stored
// trace reproduces it exactly.
TEST(Provenance, ReplayReproducesClickBitForBit) {
  std::mt19937 rng(44);
  const char* specs[] = {"mark-grid", "mark-grid:zoom=2", "mark-grid:zoom=0", "mark-grid:center=centroid",
                         "mark-grid:rows=5,cols=5,margin=12", "direct", "axis-grid", "coordinate-scaffold"};
  for (int trial = 0; trial < 300; ++trial) {
    const MethodConfig cfg = parse_method_spec(specs[trial % 8]);
    const int w = std::uniform_int_distribution<int>(400, 1400)(rng);
    const int h = std::uniform_int_distribution<int>(300, 1000)(rng);
    const RasterImage img(w, h);
    const int n = cfg.rows * cfg.cols;
    std::vector<std::string> script;
    for (int k = 0; k < 3; ++k) {
      if (cfg.single_pass()) {
        script.push_back("(" + std::to_string(std::uniform_int_distribution<int>(-50, 1500)(rng)) + ", " +
                         std::to_string(std::uniform_int_distribution<int>(-50, 1500)(rng)) + ")");
      } else {
        std::uniform_int_distribution<int> id(1, n);
        script.push_back(format_extremity_ids({id(rng), id(rng), id(rng), id(rng)}));
      }
    }
    FixedResponderModel model(script);
    const Prediction p = run_method(make_sample({0, 0, 10, 10}), img, model, cfg);
    ASSERT_TRUE(p.click);
    EXPECT_TRUE(std::isfinite(p.click->x) && std::isfinite(p.click->y));
    EXPECT_TRUE(point_in_bbox(*p.click, {0, 0, double(w), double(h)}));
    const auto replayed = replay_click(prediction_from_json(nlohmann::json::parse(prediction_to_json(p).dump())));
    ASSERT_TRUE(replayed);
    EXPECT_EQ(replayed->x, p.click->x);
    EXPECT_EQ(replayed->y, p.click->y);
  }
}

TEST(Prediction, JsonRoundTrip) {
  const RasterImage img(800, 600);
  PerfectReaderModel model;
  const Prediction p = run_mark_grid(make_sample({120, 90, 180, 140}), img, model,
                                     MethodConfig::defaults(MethodKind::kMarkGrid));
  const Prediction q = prediction_from_json(prediction_to_json(p));
  EXPECT_EQ(q.click, p.click);
  EXPECT_EQ(q.bbox, p.bbox);
  EXPECT_EQ(q.stages.size(), p.stages.size());
  EXPECT_EQ(prediction_to_json(q), prediction_to_json(p));
}
