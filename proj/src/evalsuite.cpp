#include "exprdit/evalsuite.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>

namespace exprdit {

namespace {

void require_same_shape(const char* op, const Shape& a, const Shape& b) {
  if (a != b) throw InvalidShapeError(fmt::format("{}: shapes {} and {} differ", op, shape_str(a), shape_str(b)));
}

void require_rank(const char* op, const Tensor<double>& t, std::size_t rank, std::size_t last = 0) {
  if (t.rank() != rank || (last && t.shape().back() != last)) {
    throw InvalidShapeError(fmt::format("{}: unexpected track shape {}", op, shape_str(t.shape())));
  }
}

// Mean over rows of the Euclidean distance between matching rows of width d.
double mean_row_distance(const Tensor<double>& a, const Tensor<double>& b, std::size_t d) {
  const std::size_t rows = a.size() / d;
  double acc = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = a[r * d + j] - b[r * d + j];
      s += diff * diff;
    }
    acc += std::sqrt(s);
  }
  return acc / static_cast<double>(rows);
}

std::vector<double> gray_frame(const VideoClip& clip, std::size_t t) {
  const std::size_t h = clip.height(), w = clip.width(), ch = clip.channels();
  std::vector<double> g(h * w);
  const float* base = clip.frames.data() + t * h * w * ch;
  for (std::size_t i = 0; i < h * w; ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < ch; ++c) s += base[i * ch + c];
    g[i] = s / static_cast<double>(ch);
  }
  return g;
}

}  // namespace

double psnr_from_mse(double mse) {
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double psnr(const VideoClip& a, const VideoClip& b) {
  require_same_shape("psnr", a.frames.shape(), b.frames.shape());
  validate_clip(a);
  const std::size_t f = a.num_frames(), per = a.frames.size() / f;
  double acc = 0.0;
  for (std::size_t t = 0; t < f; ++t) {
    double s = 0.0;
    for (std::size_t i = t * per; i < (t + 1) * per; ++i) {
      const double d = static_cast<double>(a.frames[i]) - static_cast<double>(b.frames[i]);
      s += d * d;
    }
    acc += psnr_from_mse(s / static_cast<double>(per));
  }
  return acc / static_cast<double>(f);
}

double ssim(const VideoClip& a, const VideoClip& b) {
  constexpr std::size_t kWin = 7;
  constexpr double kC1 = 0.01 * 0.01, kC2 = 0.03 * 0.03;
  require_same_shape("ssim", a.frames.shape(), b.frames.shape());
  if (a.frames.rank() != 4) throw InvalidShapeError("ssim: clips must be f x H x W x ch");
  const std::size_t h = a.height(), w = a.width();
  if (h < kWin || w < kWin) throw InvalidShapeError(fmt::format("ssim: frame {}x{} smaller than the 7x7 window", h, w));
  const double n = kWin * kWin;
  double total = 0.0;
  for (std::size_t t = 0; t < a.num_frames(); ++t) {
    const auto x = gray_frame(a, t), y = gray_frame(b, t);
    double frame_acc = 0.0;
    for (std::size_t i = 0; i + kWin <= h; ++i)
      for (std::size_t j = 0; j + kWin <= w; ++j) {
        double sx = 0, sy = 0;
        for (std::size_t di = 0; di < kWin; ++di)
          for (std::size_t dj = 0; dj < kWin; ++dj) {
            sx += x[(i + di) * w + j + dj];
            sy += y[(i + di) * w + j + dj];
          }
        const double mx = sx / n, my = sy / n;
        double vx = 0, vy = 0, cxy = 0;
        for (std::size_t di = 0; di < kWin; ++di)
          for (std::size_t dj = 0; dj < kWin; ++dj) {
            const double dx = x[(i + di) * w + j + dj] - mx, dy = y[(i + di) * w + j + dj] - my;
            vx += dx * dx;
            vy += dy * dy;
            cxy += dx * dy;
          }
        vx /= n - 1;
        vy /= n - 1;
        cxy /= n - 1;
        frame_acc += ((2 * mx * my + kC1) * (2 * cxy + kC2)) / ((mx * mx + my * my + kC1) * (vx + vy + kC2));
      }
    total += frame_acc / static_cast<double>((h - kWin + 1) * (w - kWin + 1));
  }
  return total / static_cast<double>(a.num_frames());
}

double lmd(const LandmarkTrack& pred, const LandmarkTrack& gt) {
  require_rank("lmd", pred.points, 3, 2);
  require_same_shape("lmd", pred.points.shape(), gt.points.shape());
  return mean_row_distance(pred.points, gt.points, 2);
}

double mae_angular(const GazeTrack& pred, const GazeTrack& gt) {
  require_rank("mae_angular", pred.angles, 2, 2);
  require_same_shape("mae_angular", pred.angles.shape(), gt.angles.shape());
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.angles.size(); ++i) {
    const double d = std::fmod(std::abs(pred.angles[i] - gt.angles[i]), 360.0);
    acc += std::min(d, 360.0 - d);
  }
  return acc / static_cast<double>(pred.angles.size());
}

double aed(const ExprFeatTrack& pred, const ExprFeatTrack& gt) {
  require_rank("aed", pred.vectors, 2);
  require_same_shape("aed", pred.vectors.shape(), gt.vectors.shape());
  return mean_row_distance(pred.vectors, gt.vectors, pred.vectors.dim(1));
}

double apd(const PoseTrack& pred, const PoseTrack& gt) {
  require_rank("apd", pred.vectors, 2);
  require_same_shape("apd", pred.vectors.shape(), gt.vectors.shape());
  return mean_row_distance(pred.vectors, gt.vectors, pred.vectors.dim(1));
}

std::string to_string(ReenactMode mode) { return mode == ReenactMode::kSelf ? "self" : "cross"; }

ReenactMode parse_mode(const std::string& s) {
  if (s == "self") return ReenactMode::kSelf;
  if (s == "cross") return ReenactMode::kCross;
  throw ConfigError("unknown reenactment mode '" + s + "' (expected self or cross)");
}

std::string Report::to_jsonl() const {
  std::string out;
  for (const auto& r : records) {
    nlohmann::json j = {{"clip_id", r.clip_id}, {"mode", to_string(r.mode)}, {"metrics", r.metrics}};
    out += j.dump() + "\n";
  }
  nlohmann::json agg = {{"aggregate", true}, {"mode", to_string(mode)}, {"count", records.size()}, {"metrics", aggregate}};
  out += agg.dump() + "\n";
  return out;
}

void Report::write(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << to_jsonl();
  if (!out) throw IoError("failed writing " + path.string());
}

namespace {

std::vector<std::string> missing_fields(const CharacterTracks& c, ReenactMode mode) {
  std::vector<std::string> m;
  if (mode == ReenactMode::kSelf && !c.landmarks) m.emplace_back("landmarks");
  if (!c.gaze) m.emplace_back("gaze");
  if (mode == ReenactMode::kCross && !c.expression) m.emplace_back("expression");
  if (mode == ReenactMode::kCross && !c.pose) m.emplace_back("pose");
  return m;
}

void require_complete(const std::string& clip_id, const std::string& what, const std::vector<CharacterTracks>& tracks,
                      ReenactMode mode) {
  if (tracks.empty()) throw IncompleteInputError(fmt::format("clip {}: no {} tracks", clip_id, what));
  for (const auto& c : tracks) {
    const auto m = missing_fields(c, mode);
    if (!m.empty()) {
      throw IncompleteInputError(
          fmt::format("clip {} character {}: {} tracks missing {}", clip_id, c.character_id, what, fmt::join(m, ", ")));
    }
  }
}

}  // namespace

Report run_reenactment(ReenactMode mode, const std::vector<ReenactmentItem>& items, const GenerateFn& generate,
                       const EstimateFn& estimate) {
  for (const auto& it : items) require_complete(it.clip_id, "driving", it.driving_tracks, mode);
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return items[a].clip_id < items[b].clip_id; });

  Report report;
  report.mode = mode;
  for (auto idx : order) {
    const auto& it = items[idx];
    const VideoClip gen = generate(it);
    require_same_shape("run_reenactment", gen.frames.shape(), it.driving.frames.shape());
    const auto recovered = estimate(gen, it);
    require_complete(it.clip_id, "recovered", recovered, mode);

    ReportRecord rec{it.clip_id, mode, {}};
    if (mode == ReenactMode::kSelf) {
      rec.metrics["psnr"] = psnr(gen, it.driving);
      rec.metrics["ssim"] = ssim(gen, it.driving);
    }
    double l = 0, g = 0, e = 0, p = 0;
    for (const auto& gt : it.driving_tracks) {
      auto found = std::find_if(recovered.begin(), recovered.end(),
                                [&](const CharacterTracks& c) { return c.character_id == gt.character_id; });
      if (found == recovered.end()) {
        throw IncompleteInputError(fmt::format("clip {}: no recovered tracks for character {}", it.clip_id, gt.character_id));
      }
      g += mae_angular(*found->gaze, *gt.gaze);
      if (mode == ReenactMode::kSelf) {
        l += lmd(*found->landmarks, *gt.landmarks);
      } else {
        e += aed(*found->expression, *gt.expression);
        p += apd(*found->pose, *gt.pose);
      }
    }
    const double n = static_cast<double>(it.driving_tracks.size());
    rec.metrics["mae"] = g / n;
    if (mode == ReenactMode::kSelf) {
      rec.metrics["lmd"] = l / n;
    } else {
      rec.metrics["aed"] = e / n;
      rec.metrics["apd"] = p / n;
    }
    report.records.push_back(std::move(rec));
  }
  if (!report.records.empty()) {
    for (const auto& [name, _] : report.records.front().metrics) {
      double s = 0.0;
      for (const auto& r : report.records) s += r.metrics.at(name);
      report.aggregate[name] = s / static_cast<double>(report.records.size());
    }
  }
  return report;
}

}  // namespace exprdit
