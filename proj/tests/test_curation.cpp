#include <fmt/format.h>
#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "exprdit/curation.hpp"
#include "test_util.hpp"

namespace exprdit {
namespace {

using nlohmann::json;

std::filesystem::path scratch_dir() {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  auto dir = std::filesystem::temp_directory_path() / fmt::format("exprdit_{}_{}", info->test_suite_name(), info->name());
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST(BlurScore, ConstantFrameIsExactlyZero) {
  EXPECT_EQ(blur_score(Tensor<double>(Shape{6, 9}, 0.37)), 0.0);
  EXPECT_EQ(clip_blur_score(VideoClip{Tensor<float>(Shape{10, 8, 8, 3}, 0.6f)}), 0.0);
}

TEST(BlurScore, SinglePixelHandConvolution) {
  Tensor<double> f(Shape{5, 5});
  f[12] = 1.0;
  // Responses: -4 at the centre, 1 at the four neighbours, 0 elsewhere. Mean 0.
  // The border reflection never reaches the centre pixel.
  EXPECT_NEAR(blur_score(f), 20.0 / 25.0, 1e-15);
}

TEST(BlurScore, CheckerboardSharperThanBoxBlurred) {
  Tensor<double> c(Shape{8, 8}), b(Shape{8, 8});
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) c[y * 8 + x] = (x + y) % 2;
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) {
      double s = 0;
      for (std::size_t dy = 0; dy < 2; ++dy)
        for (std::size_t dx = 0; dx < 2; ++dx) s += c[std::min<std::size_t>(y + dy, 7) * 8 + std::min<std::size_t>(x + dx, 7)];
      b[y * 8 + x] = s / 4;
    }
  EXPECT_GT(blur_score(c), blur_score(b));
}

TEST(BlurScore, InteriorTranslationInvariant) {
  Tensor<double> a(Shape{9, 9}), b(Shape{9, 9});
  a[3 * 9 + 3] = 1.0;
  a[3 * 9 + 4] = 0.5;
  b[5 * 9 + 4] = 1.0;
  b[5 * 9 + 5] = 0.5;
  EXPECT_NEAR(blur_score(a), blur_score(b), 1e-15);
}

TEST(BlurScore, TooSmallRejected) { EXPECT_THROW(blur_score(Tensor<double>(Shape{2, 5})), InvalidShapeError); }

LandmarkTrack static_track(std::size_t f, std::size_t l = 16) {
  Tensor<double> p(Shape{f, l, 2});
  for (std::size_t t = 0; t < f; ++t)
    for (std::size_t k = 0; k < l; ++k) {
      p[(t * l + k) * 2] = 0.2 + 0.04 * k;
      p[(t * l + k) * 2 + 1] = 0.5 + 0.01 * (k % 3);
    }
  return {p};
}

LandmarkTrack oscillating_track(std::size_t f, double amp) {
  auto tr = static_track(f);
  for (std::size_t t = 0; t < f; ++t)
    for (std::size_t k = 0; k < 16; ++k) tr.points[(t * 16 + k) * 2 + 1] += amp * std::sin(2 * std::numbers::pi * t / 8.0);
  return tr;
}

LandmarkTrack rotating_track(std::size_t f, double max_deg) {
  auto tr = static_track(f);
  for (std::size_t t = 0; t < f; ++t) {
    const double a = max_deg * std::sin(2 * std::numbers::pi * t / 8.0) * std::numbers::pi / 180.0;
    for (std::size_t k = 0; k < 16; ++k) {
      double& x = tr.points[(t * 16 + k) * 2];
      double& y = tr.points[(t * 16 + k) * 2 + 1];
      const double dx = x - 0.5, dy = y - 0.5;
      x = 0.5 + std::cos(a) * dx - std::sin(a) * dy;
      y = 0.5 + std::sin(a) * dx + std::cos(a) * dy;
    }
  }
  return tr;
}

TEST(ExpressiveSelect, StaticTrackRejected) {
  const auto s = expressive_select(static_track(10), CurationConfig{});
  EXPECT_EQ(s.motion, 0.0);
  EXPECT_EQ(s.angular, 0.0);
  EXPECT_FALSE(s.accepted);
}

TEST(ExpressiveSelect, SineOscillationClosedForm) {
  const std::size_t f = 16;
  const double amp = 0.05;
  std::vector<double> mags;
  for (std::size_t t = 0; t + 1 < f; ++t)
    mags.push_back(2 * amp * std::abs(std::sin(std::numbers::pi / 8) * std::cos(std::numbers::pi * (2.0 * t + 1) / 8)));
  double mean = 0, var = 0;
  for (double m : mags) mean += m / mags.size();
  for (double m : mags) var += (m - mean) * (m - mean) / mags.size();
  const auto s = expressive_select(oscillating_track(f, amp), CurationConfig{});
  EXPECT_NEAR(s.motion, std::sqrt(var), 1e-12);
  EXPECT_GT(s.motion, 0.005);
  EXPECT_TRUE(s.accepted);
  EXPECT_NEAR(s.angular, 0.0, 1e-9);
}

TEST(ExpressiveSelect, RotationAcceptedThroughAngularBranch) {
  CurationConfig cfg;
  cfg.motion_threshold = 1e9;
  const auto s = expressive_select(rotating_track(16, 10.0), cfg);
  EXPECT_GT(s.angular, 2.0);
  EXPECT_TRUE(s.accepted);
}

TEST(ExpressiveSelect, TranslationInvariant) {
  auto a = oscillating_track(12, 0.03), b = a;
  for (std::size_t i = 0; i < b.points.size(); i += 2) {
    b.points[i] += 0.125;
    b.points[i + 1] -= 0.25;
  }
  const auto sa = expressive_select(a, CurationConfig{}), sb = expressive_select(b, CurationConfig{});
  EXPECT_NEAR(sa.motion, sb.motion, 1e-12);
  EXPECT_NEAR(sa.angular, sb.angular, 1e-9);
}

TEST(ExpressiveSelect, Errors) {
  EXPECT_THROW(expressive_select(static_track(1), CurationConfig{}), InsufficientFramesError);
  EXPECT_THROW(expressive_select(static_track(4, 6), CurationConfig{}), InvalidShapeError);
}

TEST(PersonCount, Thresholds) {
  ClipManifestRecord r;
  r.boxes = {{{0.1, 0.1, 0.4, 0.9}, {0.6, 0.1, 0.9, 0.9}}, {{0.1, 0.1, 0.4, 0.9}, {0.6, 0.1, 0.9, 0.9}}};
  EXPECT_TRUE(person_count_filter(r).accepted);
  r.boxes[1].pop_back();
  EXPECT_FALSE(person_count_filter(r).accepted);
  EXPECT_EQ(person_count_filter(r).score, 1.0);
  r.boxes = {{}, {}};
  EXPECT_FALSE(person_count_filter(r).accepted);
  r.boxes.clear();
  EXPECT_THROW(person_count_filter(r), MalformedManifestError);
}

struct Fixture {
  std::filesystem::path dir;
  std::filesystem::path sharp, flat;

  Fixture() : dir(scratch_dir()), sharp(dir / "sharp.fpvc"), flat(dir / "flat.fpvc") {
    write_clip(sharp, VideoClip{testing_util::uniform_tensor<float>({16, 8, 8, 1}, 3)});
    write_clip(flat, VideoClip{Tensor<float>(Shape{16, 8, 8, 1}, 0.4f)});
  }
};

json landmarks_json(const LandmarkTrack& tr) {
  ClipManifestRecord r;
  r.landmarks = {tr};
  return record_to_json(r)["landmarks"][0];
}

json record(const std::string& id, std::size_t min_boxes, const std::string& clip, const LandmarkTrack& lm) {
  json boxes = json::array();
  for (std::size_t t = 0; t < 16; ++t) {
    json frame = json::array();
    const std::size_t n = (t == 7) ? min_boxes : 2;
    for (std::size_t i = 0; i < n; ++i) frame.push_back({0.5 * i + 0.05, 0.1, 0.5 * i + 0.45, 0.9});
    boxes.push_back(frame);
  }
  return {{"clip_id", id},
          {"frame_count", 16},
          {"fps", 25},
          {"boxes", boxes},
          {"landmarks", {landmarks_json(lm), landmarks_json(static_track(16))}},
          {"clip_path", clip},
          {"aesthetic", 5.5}};
}

void write_manifest(const std::filesystem::path& p, const std::vector<std::string>& lines) {
  std::ofstream out(p);
  for (const auto& l : lines) out << l << '\n';
}

TEST(CurateManifest, SixRecordStageOracle) {
  Fixture fx;
  const auto moving = oscillating_track(16, 0.2);
  // a: passes all; b: one frame with a single person; c: no persons in frame 7;
  // d: flat clip; e: static landmarks; f: rotation only, caught by the angle branch.
  write_manifest(fx.dir / "in.jsonl", {record("a", 2, "sharp.fpvc", moving).dump(), record("b", 1, "sharp.fpvc", moving).dump(),
                                       record("c", 0, "sharp.fpvc", moving).dump(), record("d", 2, "flat.fpvc", moving).dump(),
                                       record("e", 2, "sharp.fpvc", static_track(16)).dump(),
                                       record("f", 2, "sharp.fpvc", rotating_track(16, 10.0)).dump()});
  CurationConfig cfg;
  cfg.motion_threshold = 0.02;  // rotation alone falls below this
  const auto sum = curate_manifest(fx.dir / "in.jsonl", fx.dir / "out.jsonl", cfg);
  EXPECT_EQ(sum.read, 6u);
  EXPECT_EQ(sum.accepted, 2u);
  EXPECT_EQ(sum.rejected_by_stage, (std::map<std::string, std::size_t>{{"person_count", 2}, {"blur", 1}, {"expressiveness", 1}}));

  std::ifstream in(fx.dir / "out.jsonl");
  std::map<std::string, json> out;
  std::string line;
  while (std::getline(in, line)) {
    auto j = json::parse(line);
    out[j["clip_id"]] = j;
  }
  EXPECT_TRUE(out["a"]["accepted"]);
  EXPECT_EQ(out["b"]["reject_reason"], "person_count");
  EXPECT_EQ(out["b"]["person_count"], 1);
  EXPECT_EQ(out["c"]["reject_reason"], "person_count");
  EXPECT_EQ(out["c"]["person_count"], 0);
  EXPECT_EQ(out["d"]["reject_reason"], "blur");
  EXPECT_EQ(out["d"]["blur_score"], 0.0);
  EXPECT_EQ(out["e"]["reject_reason"], "expressiveness");
  EXPECT_TRUE(out["f"]["accepted"]);
  EXPECT_LT(out["f"]["motion_score"].get<double>(), 0.02);
  EXPECT_GT(out["f"]["angular_score"].get<double>(), 2.0);
  EXPECT_EQ(out["a"]["aesthetic"], 5.5);
  EXPECT_TRUE(out["a"]["reject_reason"].is_null());
}

TEST(CurateManifest, IdempotentAndByteIdentical) {
  Fixture fx;
  write_manifest(fx.dir / "in.jsonl", {record("x", 2, "sharp.fpvc", oscillating_track(16, 0.05)).dump(),
                                       record("y", 2, "flat.fpvc", static_track(16)).dump()});
  curate_manifest(fx.dir / "in.jsonl", fx.dir / "o1.jsonl", CurationConfig{});
  curate_manifest(fx.dir / "in.jsonl", fx.dir / "o2.jsonl", CurationConfig{});
  EXPECT_EQ(slurp(fx.dir / "o1.jsonl"), slurp(fx.dir / "o2.jsonl"));
  // Re-curating the curated output reproduces it.
  curate_manifest(fx.dir / "o1.jsonl", fx.dir / "o3.jsonl", CurationConfig{});
  EXPECT_EQ(slurp(fx.dir / "o1.jsonl"), slurp(fx.dir / "o3.jsonl"));
}

TEST(CurateManifest, EmptyInput) {
  Fixture fx;
  write_manifest(fx.dir / "in.jsonl", {});
  const auto s = curate_manifest(fx.dir / "in.jsonl", fx.dir / "out.jsonl", CurationConfig{});
  EXPECT_EQ(s.read, 0u);
  EXPECT_EQ(s.accepted, 0u);
  EXPECT_EQ(slurp(fx.dir / "out.jsonl"), "");
}

TEST(CurateManifest, MalformedLinesContinue) {
  Fixture fx;
  auto bad_box = record("z", 2, "sharp.fpvc", static_track(16));
  bad_box["boxes"][0][0] = {0.5, 0.1, 0.2, 0.9};
  write_manifest(fx.dir / "in.jsonl", {"{not json", record("x", 2, "sharp.fpvc", oscillating_track(16, 0.05)).dump(),
                                       bad_box.dump(), R"({"clip_id":"q","frame_count":2,"boxes":[]})"});
  const auto s = curate_manifest(fx.dir / "in.jsonl", fx.dir / "out.jsonl", CurationConfig{});
  EXPECT_EQ(s.read, 4u);
  EXPECT_EQ(s.accepted, 1u);
  EXPECT_EQ(s.rejected_by_stage.at("malformed"), 3u);
  ASSERT_EQ(s.errors.size(), 3u);
  EXPECT_EQ(s.errors[0].rfind("line 1:", 0), 0u);
  EXPECT_EQ(s.errors[1].rfind("line 3:", 0), 0u);
  EXPECT_NE(s.errors[2].find("empty frames list"), std::string::npos) << s.errors[2];
}

}  // namespace
}  // namespace exprdit
