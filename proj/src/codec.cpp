#include "exprdit/codec.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "binary_io.hpp"

namespace exprdit {

void validate_clip(const VideoClip& clip) {
  const auto& s = clip.frames.shape();
  if (s.size() != 4) throw InvalidShapeError("clip must be f x H x W x ch, got " + shape_str(s));
  if (s[1] % kSpatialFold != 0 || s[2] % kSpatialFold != 0) {
    throw InvalidShapeError(fmt::format("clip height and width must be even, got {}x{}", s[1], s[2]));
  }
  if (s[3] != 1 && s[3] != 3) throw InvalidShapeError(fmt::format("clip must have 1 or 3 channels, got {}", s[3]));
}

LatentClip encode(const VideoClip& clip) {
  validate_clip(clip);
  const std::size_t f = clip.num_frames(), hh = clip.height(), ww = clip.width(), ch = clip.channels();
  const std::size_t h = hh / 2, w = ww / 2, c_lat = 4 * ch;
  Tensor<double> lat(Shape{f, h, w, c_lat});
  const auto& px = clip.frames;
  for (std::size_t t = 0; t < f; ++t)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx)
            for (std::size_t c = 0; c < ch; ++c) {
              const double v = px[((t * hh + 2 * y + dy) * ww + 2 * x + dx) * ch + c];
              lat[((t * h + y) * w + x) * c_lat + (dy * 2 + dx) * ch + c] = 2.0 * v - 1.0;
            }
  return {std::move(lat)};
}

VideoClip decode(const LatentClip& latent) {
  const auto& s = latent.tokens.shape();
  if (s.size() != 4) throw InvalidShapeError("latent must be f x h x w x c, got " + shape_str(s));
  if (s[3] % 4 != 0) throw InvalidShapeError(fmt::format("latent channel count {} not divisible by 4", s[3]));
  const std::size_t f = s[0], h = s[1], w = s[2], c_lat = s[3], ch = c_lat / 4;
  const std::size_t hh = 2 * h, ww = 2 * w;
  Tensor<float> px(Shape{f, hh, ww, ch});
  const auto& lat = latent.tokens;
  for (std::size_t t = 0; t < f; ++t)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx)
            for (std::size_t c = 0; c < ch; ++c) {
              const double l = lat[((t * h + y) * w + x) * c_lat + (dy * 2 + dx) * ch + c];
              const double v = std::clamp((l + 1.0) / 2.0, 0.0, 1.0);
              px[((t * hh + 2 * y + dy) * ww + 2 * x + dx) * ch + c] = static_cast<float>(v);
            }
  return {std::move(px), 25.0};
}

void write_clip(const std::filesystem::path& path, const VideoClip& clip) {
  validate_clip(clip);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write("FPVC", 4);
  for (std::size_t i = 0; i < 4; ++i) binio::write_u32(out, static_cast<std::uint32_t>(clip.frames.dim(i)));
  binio::write_f32_array(out, clip.frames.flat());
  if (!out) throw IoError("failed writing " + path.string());
}

VideoClip read_clip(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "FPVC", 4) != 0) {
    throw IoError(path.string() + ": not an FPVC clip");
  }
  Shape shape(4);
  for (auto& e : shape) {
    auto v = binio::read_u32(in);
    if (!v) throw IoError(path.string() + ": truncated header");
    e = *v;
  }
  for (auto e : shape) {
    if (e == 0) throw InvalidShapeError(path.string() + ": zero extent in header");
  }
  std::vector<float> data(shape_numel(shape));
  if (!binio::read_f32_array(in, data)) throw IoError(path.string() + ": truncated sample data");
  if (in.peek() != std::char_traits<char>::eof()) throw IoError(path.string() + ": trailing bytes after samples");
  VideoClip clip{Tensor<float>(shape, std::move(data)), 25.0};
  validate_clip(clip);
  return clip;
}

}  // namespace exprdit
