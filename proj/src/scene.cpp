#include "exprdit/scene.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "exprdit/rng.hpp"

namespace exprdit {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kScaleFrac = 0.24;  // s / column width
constexpr double kShiftFrac = 0.10;  // A / column width
constexpr double kAspect = 1.2;
constexpr double kMaxRoll = 10.0;
constexpr double kMinScale = 3.2;  // px; keeps eye and mouth pixels disjoint
constexpr std::uint64_t kLiftSeed = 0x5EED;

// Feature layout in units of s, face-local coordinates (v points down).
constexpr double kEyeU = 0.42, kEyeV = -0.42, kEyeRx = 0.24, kEyeRyMax = 0.3;
constexpr double kPupilR = 0.16, kPupilU = 0.2, kPupilV = 0.15;
constexpr double kMouthV = 0.62, kMouthRxMax = 0.55, kMouthRyMax = 0.32;
constexpr double kSplitV = 0.05;
// Rectangles containing every eye / mouth candidate.
constexpr double kEyeRect[4] = {-kEyeU - std::max(kEyeRx, kPupilU + kPupilR), kEyeU + std::max(kEyeRx, kPupilU + kPupilR),
                                kEyeV - std::max(kEyeRyMax, kPupilV + kPupilR),
                                kEyeV + std::max(kEyeRyMax, kPupilV + kPupilR)};
constexpr double kMouthRect[4] = {-kMouthRxMax, kMouthRxMax, kMouthV - kMouthRyMax, kMouthV + kMouthRyMax};

// 1 - r^4 inside the unit radius: flat-topped and strictly decreasing.
double profile(double r) {
  if (r >= 1.0) return 0.0;
  const double r2 = r * r;
  return 1.0 - r2 * r2;
}

struct FaceGeom {
  double ocx, ocy, cs, sn, s;
  double bg, face_val;
  double eye_ry, pupil_dx, pupil_dy;
  double mouth_rx, mouth_ry;
};

FaceGeom make_geom(const SceneTemplate& tmpl, const CharacterLayout& c, const FaceParams& p) {
  const double th = p[kRoll] * kPi / 180.0, s = c.scale;
  return {c.cx + p[kDx],
          c.cy + p[kDy],
          std::cos(th),
          std::sin(th),
          s,
          tmpl.background,
          c.brightness * (1.0 + 0.15 * p[kEmo]),
          (0.15 + 0.15 * p[kEyeOpen]) * s,
          kPupilU * s * p[kYaw] / 20.0,
          kPupilV * s * p[kPitch] / 15.0,
          0.55 * s * p[kMouthWidth],
          (0.12 + 0.2 * p[kMouthOpen]) * s};
}

struct Local {
  double u, v;
};

Local to_local(const FaceGeom& g, double px, double py) {
  const double dx = px - g.ocx, dy = py - g.ocy;
  return {g.cs * dx + g.sn * dy, -g.sn * dx + g.cs * dy};
}

double face_profile(const FaceGeom& g, Local l) { return profile(std::hypot(l.u / g.s, l.v / (kAspect * g.s))); }

[[gnu::noinline]] double sample_value(const FaceGeom& g, double px, double py) {
  const Local l = to_local(g, px, py);
  const double fp = face_profile(g, l);
  if (fp == 0.0) return g.bg;
  const double s = g.s;
  double ep = 0.0, pp = 0.0, mp = 0.0;
  if (l.v < kSplitV * s) {
    for (double side : {-1.0, 1.0}) {
      const double ex = side * kEyeU * s, ey = kEyeV * s;
      ep = std::max(ep, profile(std::hypot((l.u - ex) / (kEyeRx * s), (l.v - ey) / g.eye_ry)));
      pp = std::max(pp, profile(std::hypot(l.u - ex - g.pupil_dx, l.v - ey - g.pupil_dy) / (kPupilR * s)));
    }
  } else {
    mp = profile(std::hypot(l.u / g.mouth_rx, (l.v - kMouthV * s) / g.mouth_ry));
  }
  return g.bg + fp * (g.face_val - g.bg) - fp * g.face_val * (0.4 * ep + 0.35 * pp) - fp * g.face_val * 0.7 * mp;
}

[[gnu::noinline]] float pixel_value(const FaceGeom& g, std::size_t x, std::size_t y) {
  const double fx = static_cast<double>(x), fy = static_cast<double>(y);
  const double v = (sample_value(g, fx + 0.25, fy + 0.25) + sample_value(g, fx + 0.75, fy + 0.25) +
                    sample_value(g, fx + 0.25, fy + 0.75) + sample_value(g, fx + 0.75, fy + 0.75)) /
                   4.0;
  return static_cast<float>(std::clamp(v, 0.0, 1.0));
}

constexpr double kSampleOffsets[4][2] = {{0.25, 0.25}, {0.75, 0.25}, {0.25, 0.75}, {0.75, 0.75}};

// Any of the pixel's samples inside the local-coordinate rectangle.
bool touches(const FaceGeom& g, std::size_t x, std::size_t y, double u0, double u1, double v0, double v1) {
  for (const auto& o : kSampleOffsets) {
    const Local l = to_local(g, static_cast<double>(x) + o[0], static_cast<double>(y) + o[1]);
    if (l.u >= u0 && l.u <= u1 && l.v >= v0 && l.v <= v1) return true;
  }
  return false;
}

struct PixelBox {
  std::size_t x0, x1, y0, y1;  // half-open
};

// Image-space box of the pixels whose samples may fall in the face rectangle.
PixelBox face_box(const FaceGeom& g, const CharacterLayout& c, std::size_t height) {
  const double hx = std::hypot(g.s * g.cs, kAspect * g.s * g.sn);
  const double hy = std::hypot(g.s * g.sn, kAspect * g.s * g.cs);
  auto lo = [](double v, std::size_t min) {
    return static_cast<std::size_t>(std::max(static_cast<double>(min), std::floor(v - 1.0)));
  };
  auto hi = [](double v, std::size_t max) {
    return static_cast<std::size_t>(std::min(static_cast<double>(max), std::ceil(v + 1.0)));
  };
  return {lo(g.ocx - hx, c.col0), hi(g.ocx + hx, c.col1), lo(g.ocy - hy, 0), hi(g.ocy + hy, height)};
}

FaceParams grid_params(const CharacterLayout& c, const std::array<std::size_t, kNumFaceParams>& levels) {
  FaceParams p{};
  for (std::size_t k = 0; k < kNumFaceParams; ++k) p[k] = grid_value(c, k, levels[k]);
  return p;
}

Tensor<double> lift(const std::vector<double>& raw, std::size_t dim, const char* stream) {
  Rng rng(kLiftSeed, stream);
  Tensor<double> out(Shape{dim});
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = raw[i];
  for (std::size_t i = raw.size(); i < dim; ++i) {
    double a = rng.uniform(0.0, 2.0 * kPi);
    for (double r : raw) a += 1.5 * rng.normal() * r;
    out[i] = std::sin(a);
  }
  return out;
}

double normalized(const CharacterLayout& c, const FaceParams& p, std::size_t k) {
  const auto r = param_range(c, k);
  return (2.0 * p[k] - r.lo - r.hi) / (r.hi - r.lo);
}

}  // namespace

ParamRange param_range(const CharacterLayout& c, std::size_t k) {
  switch (k) {
    case kDx:
    case kDy: return {-c.amplitude, c.amplitude};
    case kRoll: return {-kMaxRoll, kMaxRoll};
    case kEmo: return {-1.0, 1.0};
    case kEyeOpen: return {0.2, 1.0};
    case kYaw: return {-20.0, 20.0};
    case kPitch: return {-15.0, 15.0};
    case kMouthOpen: return {0.0, 1.0};
    case kMouthWidth: return {0.5, 1.0};
    default: throw InvalidShapeError(fmt::format("param_range: no face parameter {}", k));
  }
}

double grid_value(const CharacterLayout& c, std::size_t k, std::size_t level) {
  const auto r = param_range(c, k);
  return r.lo + (r.hi - r.lo) * static_cast<double>(level) / static_cast<double>(kGridLevels - 1);
}

double grid_step(const CharacterLayout& c, std::size_t k) {
  const auto r = param_range(c, k);
  return (r.hi - r.lo) / static_cast<double>(kGridLevels - 1);
}

double render_pixel(const SceneTemplate& tmpl, const CharacterLayout& c, const FaceParams& p, std::size_t x,
                    std::size_t y) {
  return pixel_value(make_geom(tmpl, c, p), x, y);
}

VideoClip render_scene(const SceneTemplate& tmpl, const std::vector<std::vector<FaceParams>>& params) {
  if (params.size() != tmpl.characters.size()) {
    throw InvalidShapeError(fmt::format("render_scene: {} parameter tracks for {} characters", params.size(),
                                        tmpl.characters.size()));
  }
  const std::size_t f = params.empty() ? 0 : params.front().size(), h = tmpl.height, w = tmpl.width;
  if (f == 0) throw EmptyTrackError("render_scene: no frames");
  VideoClip clip{Tensor<float>(Shape{f, h, w, 1}, static_cast<float>(tmpl.background))};
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& c = tmpl.characters[i];
    if (params[i].size() != f) throw InvalidShapeError("render_scene: parameter tracks differ in length");
    for (std::size_t t = 0; t < f; ++t) {
      const FaceGeom g = make_geom(tmpl, c, params[i][t]);
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = c.col0; x < c.col1; ++x) clip.frames[(t * h + y) * w + x] = pixel_value(g, x, y);
    }
  }
  return clip;
}

CharacterScene describe_character(const SceneTemplate& tmpl, std::size_t index, std::vector<FaceParams> params) {
  const auto& c = tmpl.characters.at(index);
  const std::size_t f = params.size(), h = tmpl.height, w = tmpl.width;
  CharacterScene out;
  out.character_id = c.character_id;
  out.implicit.character_id = c.character_id;
  out.implicit.e_lip = Tensor<double>(Shape{f, 16});
  out.implicit.e_eye = Tensor<double>(Shape{f, 6});
  out.implicit.e_head = Tensor<double>(Shape{f, 6});
  out.implicit.e_emo = Tensor<double>(Shape{f, 16});
  out.mask = {c.character_id, Tensor<float>(Shape{f, h, w})};
  out.landmarks.points = Tensor<double>(Shape{f, 16, 2});
  out.gaze.angles = Tensor<double>(Shape{f, 2});
  out.pose.vectors = Tensor<double>(Shape{f, 3});
  out.expression.vectors = Tensor<double>(Shape{f, 4});

  auto put_row = [](Tensor<double>& dst, std::size_t t, const Tensor<double>& row) {
    std::copy(row.storage().begin(), row.storage().end(), dst.data() + t * row.size());
  };
  for (std::size_t t = 0; t < f; ++t) {
    const auto& p = params[t];
    auto n = [&](std::size_t k) { return normalized(c, p, k); };
    put_row(out.implicit.e_lip, t, lift({n(kMouthOpen), n(kMouthWidth)}, 16, "lift.lip"));
    put_row(out.implicit.e_eye, t, lift({n(kEyeOpen), n(kYaw), n(kPitch)}, 6, "lift.eye"));
    put_row(out.implicit.e_head, t, lift({n(kDx), n(kDy), n(kRoll)}, 6, "lift.head"));
    put_row(out.implicit.e_emo, t, lift({n(kEmo)}, 16, "lift.emo"));

    out.gaze.angles.at(t, 0) = p[kYaw];
    out.gaze.angles.at(t, 1) = p[kPitch];
    out.pose.vectors.at(t, 0) = p[kDx] / static_cast<double>(w);
    out.pose.vectors.at(t, 1) = p[kDy] / static_cast<double>(h);
    out.pose.vectors.at(t, 2) = p[kRoll];
    out.expression.vectors.at(t, 0) = p[kMouthOpen];
    out.expression.vectors.at(t, 1) = p[kMouthWidth];
    out.expression.vectors.at(t, 2) = p[kEyeOpen];
    out.expression.vectors.at(t, 3) = p[kEmo];

    const FaceGeom g = make_geom(tmpl, c, p);
    const double s = g.s;
    auto landmark = [&](std::size_t k, double u, double v) {
      out.landmarks.points[(t * 16 + k) * 2] = (g.ocx + g.cs * u - g.sn * v) / static_cast<double>(w);
      out.landmarks.points[(t * 16 + k) * 2 + 1] = (g.ocy + g.sn * u + g.cs * v) / static_cast<double>(h);
    };
    for (std::size_t k = 0; k < 8; ++k) {
      const double a = 2.0 * kPi * static_cast<double>(k) / 8.0;
      landmark(k, s * std::cos(a), kAspect * s * std::sin(a));
    }
    landmark(8, -kEyeU * s, kEyeV * s);
    landmark(9, kEyeU * s, kEyeV * s);
    landmark(10, -kEyeU * s + g.pupil_dx, kEyeV * s + g.pupil_dy);
    landmark(11, kEyeU * s + g.pupil_dx, kEyeV * s + g.pupil_dy);
    landmark(12, -g.mouth_rx, kMouthV * s);
    landmark(13, g.mouth_rx, kMouthV * s);
    landmark(14, 0.0, kMouthV * s - g.mouth_ry);
    landmark(15, 0.0, kMouthV * s + g.mouth_ry);

    // Mask: bounding box of pixels with any sample on the face, grown by 1 px.
    const PixelBox b = face_box(g, c, h);
    std::size_t x0 = w, x1 = 0, y0 = h, y1 = 0;
    for (std::size_t y = b.y0; y < b.y1; ++y)
      for (std::size_t x = b.x0; x < b.x1; ++x) {
        bool on = false;
        for (const auto& o : kSampleOffsets)
          on = on || face_profile(g, to_local(g, static_cast<double>(x) + o[0], static_cast<double>(y) + o[1])) > 0.0;
        if (!on) continue;
        x0 = std::min(x0, x);
        x1 = std::max(x1, x + 1);
        y0 = std::min(y0, y);
        y1 = std::max(y1, y + 1);
      }
    if (x0 >= x1) continue;
    if (x0 < c.col0 + 1 || x1 + 1 > c.col1 || y0 < 1 || y1 + 1 > h) {
      throw PlacementError(fmt::format("character {} leaves its region at frame {}", c.character_id, t));
    }
    for (std::size_t y = y0 - 1; y < y1 + 1; ++y)
      for (std::size_t x = x0 - 1; x < x1 + 1; ++x) out.mask.mask[(t * h + y) * w + x] = 1.0f;
  }
  out.params = std::move(params);
  return out;
}

CharacterTracks to_character_tracks(const CharacterScene& c) {
  CharacterTracks t;
  t.character_id = c.character_id;
  t.landmarks = c.landmarks;
  t.gaze = c.gaze;
  t.expression = c.expression;
  t.pose = c.pose;
  return t;
}

std::vector<ImplicitExpressionTrack> SyntheticScene::implicit_tracks() const {
  std::vector<ImplicitExpressionTrack> out;
  for (const auto& c : characters) out.push_back(c.implicit);
  return out;
}

std::vector<FaceMaskTrack> SyntheticScene::masks() const {
  std::vector<FaceMaskTrack> out;
  for (const auto& c : characters) out.push_back(c.mask);
  return out;
}

std::vector<CharacterTracks> SyntheticScene::tracks() const {
  std::vector<CharacterTracks> out;
  for (const auto& c : characters) out.push_back(to_character_tracks(c));
  return out;
}

SceneTemplate make_template(const SceneOptions& opts) {
  if (opts.n_characters == 0) throw PlacementError("synthetic scene needs at least one character");
  SceneTemplate tmpl;
  tmpl.height = opts.height;
  tmpl.width = opts.width;
  const double rw = static_cast<double>(opts.width) / static_cast<double>(opts.n_characters);
  const double s = kScaleFrac * rw, a = kShiftFrac * rw;
  const double th = kMaxRoll * kPi / 180.0;
  const double hx = std::hypot(s * std::cos(th), kAspect * s * std::sin(th));
  const double hy = kAspect * s;
  // Worst-case face extent plus the 1 px mask margin and sample spread.
  const double need_x = a + hx + 2.0, need_y = a + hy + 2.0;
  if (s < kMinScale || 2.0 * need_x > std::floor(rw) || 2.0 * need_y > static_cast<double>(opts.height)) {
    throw PlacementError(fmt::format("cannot place {} characters disjointly in {}x{}", opts.n_characters, opts.height,
                                     opts.width));
  }
  Rng rng(opts.seed, "scene.identity");
  for (std::size_t i = 0; i < opts.n_characters; ++i) {
    CharacterLayout c;
    c.character_id = static_cast<int>(i);
    c.col0 = static_cast<std::size_t>(std::lround(static_cast<double>(i) * rw));
    c.col1 = static_cast<std::size_t>(std::lround(static_cast<double>(i + 1) * rw));
    c.cx = 0.5 * static_cast<double>(c.col0 + c.col1);
    c.cy = 0.5 * static_cast<double>(opts.height);
    c.scale = s;
    c.amplitude = a;
    c.brightness = rng.uniform(0.55, 0.8);
    tmpl.characters.push_back(c);
  }
  return tmpl;
}

SyntheticScene generate_synthetic_scene(const SceneOptions& opts) {
  if (opts.frames == 0) throw EmptyTrackError("synthetic scene needs at least one frame");
  SyntheticScene scene;
  scene.options = opts;
  scene.layout = make_template(opts);
  const double frames = static_cast<double>(opts.frames);
  std::vector<std::vector<FaceParams>> params;
  for (std::size_t i = 0; i < opts.n_characters; ++i) {
    const auto& c = scene.layout.characters[i];
    Rng rng(opts.seed, "scene.motion", i);
    std::vector<FaceParams> track(opts.frames);
    for (std::size_t k = 0; k < kNumFaceParams; ++k) {
      // Band-limited trajectory: three sinusoids of at most 1.5 cycles per clip.
      double w[3], fr[3], ph[3], wsum = 0.0;
      for (int j = 0; j < 3; ++j) {
        w[j] = rng.uniform(0.2, 1.0);
        fr[j] = rng.uniform(0.3, 1.5);
        ph[j] = rng.uniform(0.0, 2.0 * kPi);
        wsum += w[j];
      }
      const auto r = param_range(c, k);
      const double mid = 0.5 * (r.lo + r.hi), half = 0.5 * (r.hi - r.lo);
      for (std::size_t t = 0; t < opts.frames; ++t) {
        double g = 0.0;
        for (int j = 0; j < 3; ++j) g += w[j] * std::sin(2.0 * kPi * fr[j] * static_cast<double>(t) / frames + ph[j]);
        double v = std::clamp(mid + half * opts.amplitude * g / wsum, r.lo, r.hi);
        if (opts.snap_to_grid) {
          const double lv = std::round((v - r.lo) / grid_step(c, k));
          v = grid_value(c, k, static_cast<std::size_t>(std::clamp(lv, 0.0, static_cast<double>(kGridLevels - 1))));
        }
        track[t][k] = v;
      }
    }
    params.push_back(std::move(track));
  }
  scene.clip = render_scene(scene.layout, params);
  for (std::size_t i = 0; i < opts.n_characters; ++i)
    scene.characters.push_back(describe_character(scene.layout, i, std::move(params[i])));
  return scene;
}

FitResult fit_scene_parameters(const VideoClip& clip, const SceneTemplate& tmpl) {
  validate_clip(clip);
  const std::size_t f = clip.num_frames(), h = tmpl.height, w = tmpl.width, ch = clip.channels();
  if (clip.height() != h || clip.width() != w) {
    throw InvalidShapeError(fmt::format("fit_scene_parameters: clip {}x{} does not match template {}x{}", clip.height(),
                                        clip.width(), h, w));
  }
  std::vector<double> target(f * h * w);
  for (std::size_t i = 0; i < target.size(); ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < ch; ++c) s += clip.frames[i * ch + c];
    target[i] = s / static_cast<double>(ch);
  }
  const double bgf = static_cast<float>(std::clamp(tmpl.background, 0.0, 1.0));
  constexpr std::size_t kOuter = kGridLevels * kGridLevels * kGridLevels * kGridLevels;
  constexpr std::size_t kEye = kGridLevels * kGridLevels * kGridLevels;
  constexpr std::size_t kMouth = kGridLevels * kGridLevels;

  FitResult result;
  double total_err = 0.0;
  std::vector<std::size_t> eye_px, mouth_px;
  for (std::size_t ci = 0; ci < tmpl.characters.size(); ++ci) {
    const auto& c = tmpl.characters[ci];
    const double s = c.scale;
    std::vector<FaceParams> best_params(f);
    for (std::size_t t = 0; t < f; ++t) {
      const double* tg = target.data() + t * h * w;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t o = 0; o < kOuter; ++o) {
        std::array<std::size_t, kNumFaceParams> lv{};
        lv[kDx] = o / 125;
        lv[kDy] = (o / 25) % 5;
        lv[kRoll] = (o / 5) % 5;
        lv[kEmo] = o % 5;
        FaceParams p = grid_params(c, lv);
        const FaceGeom g0 = make_geom(tmpl, c, p);
        const PixelBox b = face_box(g0, c, h);
        eye_px.clear();
        mouth_px.clear();
        double base = 0.0;
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = c.col0; x < c.col1; ++x) {
            const std::size_t i = y * w + x;
            if (y < b.y0 || y >= b.y1 || x < b.x0 || x >= b.x1) {
              base += (bgf - tg[i]) * (bgf - tg[i]);
            } else if (touches(g0, x, y, kEyeRect[0] * s, kEyeRect[1] * s, kEyeRect[2] * s, kEyeRect[3] * s)) {
              eye_px.push_back(i);
            } else if (touches(g0, x, y, kMouthRect[0] * s, kMouthRect[1] * s, kMouthRect[2] * s, kMouthRect[3] * s)) {
              mouth_px.push_back(i);
            } else {
              const double d = pixel_value(g0, x, y) - tg[i];
              base += d * d;
            }
          }
        if (!(base < best)) continue;

        auto search = [&](std::size_t count, const std::vector<std::size_t>& pixels, auto set_levels, double bound) {
          double best_err = std::numeric_limits<double>::infinity();
          std::size_t best_idx = 0;
          for (std::size_t e = 0; e < count; ++e) {
            set_levels(e);
            const FaceGeom g = make_geom(tmpl, c, grid_params(c, lv));
            double err = 0.0;
            bool pruned = false;
            for (std::size_t i : pixels) {
              const double d = pixel_value(g, i % w, i / w) - tg[i];
              err += d * d;
              if (!(err < best_err) || !(err < bound)) {
                pruned = true;
                break;
              }
            }
            if (!pruned && err < best_err) {
              best_err = err;
              best_idx = e;
            }
          }
          set_levels(best_idx);
          return best_err;
        };
        const double eye_err = search(
            kEye, eye_px,
            [&](std::size_t e) {
              lv[kEyeOpen] = e / 25;
              lv[kYaw] = (e / 5) % 5;
              lv[kPitch] = e % 5;
            },
            best - base);
        if (!(base + eye_err < best)) continue;
        const double mouth_err = search(
            kMouth, mouth_px,
            [&](std::size_t m) {
              lv[kMouthOpen] = m / 5;
              lv[kMouthWidth] = m % 5;
            },
            best - base - eye_err);
        const double err = base + eye_err + mouth_err;
        if (err < best) {
          best = err;
          best_params[t] = grid_params(c, lv);
        }
      }
      total_err += best;
    }
    result.characters.push_back(describe_character(tmpl, ci, std::move(best_params)));
  }
  // Pixels outside every column are background.
  for (std::size_t t = 0; t < f; ++t)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const bool covered = std::any_of(tmpl.characters.begin(), tmpl.characters.end(),
                                         [&](const CharacterLayout& c) { return x >= c.col0 && x < c.col1; });
        if (!covered) total_err += (bgf - target[(t * h + y) * w + x]) * (bgf - target[(t * h + y) * w + x]);
      }
  result.mse = total_err / static_cast<double>(f * h * w);
  return result;
}

TrainingExample make_training_example(const SyntheticScene& scene) {
  TrainingExample ex;
  ex.latent = encode(scene.clip).tokens;
  const std::size_t f = ex.latent.dim(0), lh = ex.latent.dim(1), lw = ex.latent.dim(2), lc = ex.latent.dim(3);
  ex.reference = Tensor<double>(Shape{lh, lw, lc});
  std::copy_n(ex.latent.data(), lh * lw * lc, ex.reference.data());
  ex.tracks = scene.implicit_tracks();
  ex.masks = build_latent_mask(scene.masks(), Dims3{f, lh, lw});
  return ex;
}

ClipManifestRecord make_manifest_record(const SyntheticScene& scene, const std::string& clip_id,
                                        const std::string& clip_path) {
  ClipManifestRecord r;
  r.clip_id = clip_id;
  r.frame_count = scene.clip.num_frames();
  r.fps = scene.clip.frame_rate;
  r.clip_path = clip_path;
  const std::size_t h = scene.layout.height, w = scene.layout.width;
  r.boxes.resize(r.frame_count);
  for (const auto& c : scene.characters) {
    r.landmarks.push_back(c.landmarks);
    for (std::size_t t = 0; t < r.frame_count; ++t) {
      std::size_t x0 = w, x1 = 0, y0 = h, y1 = 0;
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
          if (c.mask.mask[(t * h + y) * w + x] > 0.5f) {
            x0 = std::min(x0, x);
            x1 = std::max(x1, x + 1);
            y0 = std::min(y0, y);
            y1 = std::max(y1, y + 1);
          }
      if (x0 < x1) {
        r.boxes[t].push_back({static_cast<double>(x0) / static_cast<double>(w), static_cast<double>(y0) / static_cast<double>(h),
                              static_cast<double>(x1) / static_cast<double>(w), static_cast<double>(y1) / static_cast<double>(h)});
      }
    }
  }
  return r;
}

nlohmann::json scene_options_to_json(const SceneOptions& o) {
  return {{"seed", o.seed},          {"n_characters", o.n_characters}, {"frames", o.frames},
          {"height", o.height},      {"width", o.width},               {"amplitude", o.amplitude},
          {"snap_to_grid", o.snap_to_grid}};
}

SceneOptions scene_options_from_json(const nlohmann::json& j) {
  SceneOptions o;
  try {
    o.seed = j.at("seed").get<std::uint64_t>();
    o.n_characters = j.at("n_characters").get<std::size_t>();
    o.frames = j.at("frames").get<std::size_t>();
    o.height = j.at("height").get<std::size_t>();
    o.width = j.at("width").get<std::size_t>();
    o.amplitude = j.at("amplitude").get<double>();
    o.snap_to_grid = j.at("snap_to_grid").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw IncompleteInputError(std::string("scene options: ") + e.what());
  }
  return o;
}

}  // namespace exprdit
