#pragma once

#include <filesystem>

#include "exprdit/tensor.hpp"

namespace exprdit {

// Pixel clip, frames x height x width x channels, values in [0, 1].
struct VideoClip {
  Tensor<float> frames;
  double frame_rate = 25.0;

  std::size_t num_frames() const { return frames.dim(0); }
  std::size_t height() const { return frames.dim(1); }
  std::size_t width() const { return frames.dim(2); }
  std::size_t channels() const { return frames.dim(3); }
};

// Latent clip, frames x (H/2) x (W/2) x (4 * channels).
struct LatentClip {
  Tensor<double> tokens;

  std::size_t num_frames() const { return tokens.dim(0); }
  std::size_t height() const { return tokens.dim(1); }
  std::size_t width() const { return tokens.dim(2); }
  std::size_t channels() const { return tokens.dim(3); }
};

inline constexpr std::size_t kSpatialFold = 2;

// Invertible stand-in for a video autoencoder: 2x2 space-to-depth fold per
// frame (channel index = (dy * 2 + dx) * ch + c) followed by v -> 2v - 1.
// Latents are held in double precision so decode(encode(x)) reproduces every
// float32 pixel >= 2^-31 (and exact zeros) bit for bit.
LatentClip encode(const VideoClip& clip);

// Exact inverse of encode; values outside [0, 1] (e.g. from sampled latents)
// are clamped.
VideoClip decode(const LatentClip& latent);

void validate_clip(const VideoClip& clip);

// FPVC container: "FPVC", little-endian u32 f, H, W, ch, then float32 samples
// in row-major f x H x W x ch order.
void write_clip(const std::filesystem::path& path, const VideoClip& clip);
VideoClip read_clip(const std::filesystem::path& path);

}  // namespace exprdit
