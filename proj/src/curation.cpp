#include "exprdit/curation.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace exprdit {

namespace {

using nlohmann::json;

const char* const kKnownKeys[] = {"clip_id",      "frame_count",   "fps",         "boxes",    "landmarks",
                                  "caption",      "clip_path",     "blur_score",  "person_count",
                                  "motion_score", "angular_score", "accepted",    "reject_reason"};

[[noreturn]] void malformed(const std::string& what) { throw MalformedManifestError(what); }

const json& require(const json& j, const char* key) {
  if (!j.contains(key)) malformed(fmt::format("missing field '{}'", key));
  return j.at(key);
}

double population_std(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  // Shifted by v[0] so constant input gives exactly 0.
  double mean = 0.0;
  for (double x : v) mean += x - v[0];
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - v[0] - mean) * (x - v[0] - mean);
  return std::sqrt(var / static_cast<double>(v.size()));
}

}  // namespace

ClipManifestRecord record_from_json(const json& j) {
  if (!j.is_object()) malformed("record is not a JSON object");
  ClipManifestRecord r;
  try {
    r.clip_id = require(j, "clip_id").get<std::string>();
    r.frame_count = require(j, "frame_count").get<std::size_t>();
    if (j.contains("fps")) r.fps = j.at("fps").get<double>();
    const auto& boxes = require(j, "boxes");
    if (!boxes.is_array() || boxes.empty()) malformed(fmt::format("clip {}: empty frames list", r.clip_id));
    if (boxes.size() != r.frame_count) {
      malformed(fmt::format("clip {}: {} box frames for frame_count {}", r.clip_id, boxes.size(), r.frame_count));
    }
    for (const auto& frame : boxes) {
      auto& out = r.boxes.emplace_back();
      for (const auto& b : frame) {
        const auto box = b.get<PersonBox>();
        const bool in_range = std::all_of(box.begin(), box.end(), [](double v) { return v >= 0.0 && v <= 1.0; });
        if (!in_range || box[0] >= box[2] || box[1] >= box[3]) {
          malformed(fmt::format("clip {}: invalid box [{}]", r.clip_id, fmt::join(box, ", ")));
        }
        out.push_back(box);
      }
    }
    for (const auto& person : require(j, "landmarks")) {
      const auto frames = person.get<std::vector<std::vector<std::array<double, 2>>>>();
      const std::size_t f = frames.size(), l = f ? frames.front().size() : 0;
      Tensor<double> pts(Shape{f, l, 2});
      for (std::size_t t = 0; t < f; ++t) {
        if (frames[t].size() != l) malformed(fmt::format("clip {}: ragged landmark track", r.clip_id));
        for (std::size_t k = 0; k < l; ++k) {
          pts[(t * l + k) * 2] = frames[t][k][0];
          pts[(t * l + k) * 2 + 1] = frames[t][k][1];
        }
      }
      r.landmarks.push_back({std::move(pts)});
    }
    if (j.contains("caption") && !j.at("caption").is_null()) r.caption = j.at("caption").get<std::string>();
    if (j.contains("clip_path") && !j.at("clip_path").is_null()) r.clip_path = j.at("clip_path").get<std::string>();
  } catch (const json::exception& e) {
    malformed(fmt::format("clip {}: {}", r.clip_id.empty() ? "?" : r.clip_id, e.what()));
  }
  for (const auto& [k, v] : j.items()) {
    if (std::find(std::begin(kKnownKeys), std::end(kKnownKeys), k) == std::end(kKnownKeys)) r.extra[k] = v;
  }
  return r;
}

json record_to_json(const ClipManifestRecord& r) {
  json j = r.extra;
  j["clip_id"] = r.clip_id;
  j["frame_count"] = r.frame_count;
  j["fps"] = r.fps;
  j["boxes"] = r.boxes;
  json lms = json::array();
  for (const auto& tr : r.landmarks) {
    const std::size_t f = tr.points.dim(0), l = tr.points.dim(1);
    json person = json::array();
    for (std::size_t t = 0; t < f; ++t) {
      json frame = json::array();
      for (std::size_t k = 0; k < l; ++k) frame.push_back({tr.points[(t * l + k) * 2], tr.points[(t * l + k) * 2 + 1]});
      person.push_back(std::move(frame));
    }
    lms.push_back(std::move(person));
  }
  j["landmarks"] = std::move(lms);
  if (r.caption) j["caption"] = *r.caption;
  if (r.clip_path) j["clip_path"] = *r.clip_path;
  if (r.blur_score) j["blur_score"] = *r.blur_score;
  if (r.person_count) j["person_count"] = *r.person_count;
  if (r.motion_score) j["motion_score"] = *r.motion_score;
  if (r.angular_score) j["angular_score"] = *r.angular_score;
  j["accepted"] = r.accepted;
  j["reject_reason"] = r.reject_reason ? json(*r.reject_reason) : json(nullptr);
  return j;
}

StageResult person_count_filter(const ClipManifestRecord& rec, std::size_t min_count) {
  if (rec.boxes.empty()) malformed(fmt::format("clip {}: empty frames list", rec.clip_id));
  std::size_t m = rec.boxes.front().size();
  for (const auto& f : rec.boxes) m = std::min(m, f.size());
  return {m >= min_count, static_cast<double>(m)};
}

double blur_score(const Tensor<double>& frame) {
  if (frame.rank() != 2 || frame.dim(0) < 3 || frame.dim(1) < 3) {
    throw InvalidShapeError(fmt::format("blur_score: frame {} must be H x W with H, W >= 3", shape_str(frame.shape())));
  }
  const std::size_t h = frame.dim(0), w = frame.dim(1);
  // Reflect-101 borders: index -1 reads 1, index n reads n - 2.
  auto reflect = [](std::ptrdiff_t i, std::size_t n) {
    if (i < 0) return static_cast<std::size_t>(-i);
    if (i >= static_cast<std::ptrdiff_t>(n)) return 2 * n - 2 - static_cast<std::size_t>(i);
    return static_cast<std::size_t>(i);
  };
  auto px = [&](std::ptrdiff_t y, std::ptrdiff_t x) { return frame[reflect(y, h) * w + reflect(x, w)]; };
  std::vector<double> resp(h * w);
  for (std::ptrdiff_t y = 0; y < static_cast<std::ptrdiff_t>(h); ++y)
    for (std::ptrdiff_t x = 0; x < static_cast<std::ptrdiff_t>(w); ++x)
      resp[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)] =
          px(y - 1, x) + px(y + 1, x) + px(y, x - 1) + px(y, x + 1) - 4.0 * px(y, x);
  const double sd = population_std(resp);
  return sd * sd;
}

double clip_blur_score(const VideoClip& clip, std::size_t samples) {
  validate_clip(clip);
  const std::size_t f = clip.num_frames(), h = clip.height(), w = clip.width(), ch = clip.channels();
  const std::size_t n = std::max<std::size_t>(1, std::min(samples, f));
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t t = n == 1 ? 0 : (i * (f - 1) + (n - 1) / 2) / (n - 1);
    Tensor<double> g(Shape{h, w});
    const float* base = clip.frames.data() + t * h * w * ch;
    for (std::size_t p = 0; p < h * w; ++p) {
      double s = 0.0;
      for (std::size_t c = 0; c < ch; ++c) s += base[p * ch + c];
      g[p] = s / static_cast<double>(ch);
    }
    best = std::min(best, blur_score(g));
  }
  return best;
}

ExpressivenessScores expressive_select(const LandmarkTrack& track, const CurationConfig& cfg) {
  const auto& p = track.points;
  if (p.rank() != 3 || p.dim(2) != 2) throw InvalidShapeError("expressive_select: landmarks must be f x L x 2");
  const std::size_t f = p.dim(0), l = p.dim(1);
  if (f < 2) throw InsufficientFramesError(fmt::format("expressive_select: need at least 2 frames, got {}", f));
  const auto [ia, ib] = cfg.angle_pair;
  if (ia >= l || ib >= l) {
    throw InvalidShapeError(fmt::format("expressive_select: angle pair ({}, {}) outside {} landmarks", ia, ib, l));
  }
  auto at = [&](std::size_t t, std::size_t k, std::size_t c) { return p[(t * l + k) * 2 + c]; };

  ExpressivenessScores s;
  std::vector<double> mags(f - 1);
  for (std::size_t k = 0; k < l; ++k) {
    for (std::size_t t = 0; t + 1 < f; ++t) mags[t] = std::hypot(at(t + 1, k, 0) - at(t, k, 0), at(t + 1, k, 1) - at(t, k, 1));
    s.motion += population_std(mags);
  }
  s.motion /= static_cast<double>(l);

  std::vector<double> angles(f);
  const double deg = 180.0 / std::numbers::pi;
  for (std::size_t t = 0; t < f; ++t) {
    double a = std::atan2(at(t, ib, 1) - at(t, ia, 1), at(t, ib, 0) - at(t, ia, 0)) * deg;
    if (t > 0) a = angles[0] + std::remainder(a - angles[0], 360.0);
    angles[t] = a;
  }
  s.angular = population_std(angles);
  s.accepted = s.motion >= cfg.motion_threshold || s.angular >= cfg.angle_threshold;
  return s;
}

void curate_record(ClipManifestRecord& rec, const CurationConfig& cfg, const std::filesystem::path& base_dir) {
  rec.reject_reason.reset();
  const auto pc = person_count_filter(rec, cfg.min_persons);
  rec.person_count = static_cast<std::size_t>(pc.score);

  if (!rec.clip_path) malformed(fmt::format("clip {}: missing field 'clip_path'", rec.clip_id));
  std::filesystem::path cp(*rec.clip_path);
  if (cp.is_relative()) cp = base_dir / cp;
  const double blur = clip_blur_score(read_clip(cp), cfg.blur_sample_frames);
  rec.blur_score = blur;

  ExpressivenessScores ex;
  for (const auto& tr : rec.landmarks) {
    if (tr.points.dim(0) != rec.frame_count) {
      malformed(fmt::format("clip {}: landmark track has {} frames, expected {}", rec.clip_id, tr.points.dim(0),
                            rec.frame_count));
    }
    const auto s = expressive_select(tr, cfg);
    ex.motion = std::max(ex.motion, s.motion);
    ex.angular = std::max(ex.angular, s.angular);
    ex.accepted = ex.accepted || s.accepted;
  }
  rec.motion_score = ex.motion;
  rec.angular_score = ex.angular;

  if (!pc.accepted) {
    rec.reject_reason = "person_count";
  } else if (!(blur >= cfg.blur_threshold)) {
    rec.reject_reason = "blur";
  } else if (!ex.accepted) {
    rec.reject_reason = "expressiveness";
  }
  rec.accepted = !rec.reject_reason;
}

CurationSummary curate_manifest(const std::filesystem::path& in_path, const std::filesystem::path& out_path,
                                const CurationConfig& cfg) {
  std::ifstream in(in_path);
  if (!in) throw IoError("cannot open " + in_path.string());
  const auto base_dir = in_path.parent_path();
  CurationSummary summary;
  std::ostringstream out;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++summary.read;
    try {
      auto rec = record_from_json(json::parse(line));
      curate_record(rec, cfg, base_dir);
      if (rec.accepted) {
        ++summary.accepted;
      } else {
        ++summary.rejected_by_stage[*rec.reject_reason];
      }
      out << record_to_json(rec).dump() << '\n';
    } catch (const std::exception& e) {
      const std::string msg = fmt::format("line {}: {}", lineno, e.what());
      summary.errors.push_back(msg);
      ++summary.rejected_by_stage["malformed"];
      out << json{{"line", lineno}, {"accepted", false}, {"reject_reason", "malformed"}, {"error", msg}}.dump() << '\n';
    }
  }
  std::ofstream o(out_path, std::ios::binary);
  if (!o) throw IoError("cannot open " + out_path.string() + " for writing");
  o << out.str();
  if (!o) throw IoError("failed writing " + out_path.string());
  return summary;
}

}  // namespace exprdit
