#include <gtest/gtest.h>

#include <filesystem>
#include <cstring>
#include <fstream>
#include <random>

#include "exprdit/codec.hpp"
#include "test_util.hpp"

namespace exprdit {
namespace {

VideoClip random_clip(std::mt19937_64& gen) {
  std::uniform_int_distribution<std::size_t> frames(1, 4), half(1, 6), chan(0, 1);
  Shape s{frames(gen), 2 * half(gen), 2 * half(gen), chan(gen) ? std::size_t{3} : std::size_t{1}};
  return {testing_util::uniform_tensor<float>(s, gen()), 25.0};
}

TEST(Codec, ConstantHalfMapsToZeroLatent) {
  VideoClip clip{Tensor<float>(Shape{4, 8, 8, 1}, 0.5f)};
  auto lat = encode(clip);
  EXPECT_EQ(lat.tokens.shape(), (Shape{4, 4, 4, 4}));
  for (double v : lat.tokens.storage()) EXPECT_EQ(v, 0.0);
}

TEST(Codec, FoldLayoutIsRowMajorWithinBlock) {
  const float a = 0.1f, b = 0.2f, c = 0.7f, d = 0.9f;
  VideoClip clip{Tensor<float>(Shape{1, 2, 2, 1}, {a, b, c, d})};
  auto lat = encode(clip);
  ASSERT_EQ(lat.tokens.shape(), (Shape{1, 1, 1, 4}));
  EXPECT_EQ(lat.tokens[0], 2.0 * a - 1.0);
  EXPECT_EQ(lat.tokens[1], 2.0 * b - 1.0);
  EXPECT_EQ(lat.tokens[2], 2.0 * c - 1.0);
  EXPECT_EQ(lat.tokens[3], 2.0 * d - 1.0);
}

TEST(Codec, SinglePixelRoundTrip) {
  VideoClip clip{Tensor<float>(Shape{2, 4, 6, 1}, 0.0f)};
  clip.frames[1 * 24 + 2 * 6 + 3] = 1.0f;
  EXPECT_EQ(decode(encode(clip)).frames, clip.frames);
}

TEST(Codec, RoundTripIsBitExactProperty) {
  std::mt19937_64 gen(1234);
  for (int trial = 0; trial < 200; ++trial) {
    auto clip = random_clip(gen);
    ASSERT_EQ(decode(encode(clip)).frames, clip.frames) << "trial " << trial;
  }
}

TEST(Codec, EncodeIsAffineInPixels) {
  auto delta = testing_util::uniform_tensor<float>({2, 4, 4, 1}, 6, -0.25, 0.25);
  VideoClip base{Tensor<float>(Shape{2, 4, 4, 1}, 0.5f)};
  VideoClip shifted = base;
  for (std::size_t i = 0; i < delta.size(); ++i) shifted.frames[i] += delta[i];
  auto l0 = encode(base).tokens;
  auto l1 = encode(shifted).tokens;
  auto ld = encode(VideoClip{delta}).tokens;  // folded 2 * delta - 1
  for (std::size_t i = 0; i < l0.size(); ++i) EXPECT_NEAR(l1[i] - l0[i], ld[i] + 1.0, 1e-6);
}

TEST(Codec, ZeroLatentDecodesToMidGray) {
  LatentClip lat{Tensor<double>(Shape{2, 3, 3, 4})};
  auto clip = decode(lat);
  EXPECT_EQ(clip.frames.shape(), (Shape{2, 6, 6, 1}));
  for (float v : clip.frames.storage()) EXPECT_EQ(v, 0.5f);
}

TEST(Codec, OutOfRangeLatentIsClamped) {
  LatentClip lat{Tensor<double>(Shape{1, 1, 1, 4}, {3.0, -7.0, 0.0, 1.0})};
  auto clip = decode(lat);
  EXPECT_EQ(clip.frames[0], 1.0f);
  EXPECT_EQ(clip.frames[1], 0.0f);
  EXPECT_EQ(clip.frames[2], 0.5f);
}

TEST(Codec, OddDimensionsRejected) {
  EXPECT_THROW(encode(VideoClip{Tensor<float>(Shape{1, 3, 4, 1})}), InvalidShapeError);
  EXPECT_THROW(encode(VideoClip{Tensor<float>(Shape{1, 4, 5, 1})}), InvalidShapeError);
  EXPECT_THROW(encode(VideoClip{Tensor<float>(Shape{1, 4, 4, 2})}), InvalidShapeError);
}

TEST(Codec, ChannelsNotDivisibleByFourRejected) {
  EXPECT_THROW(decode(LatentClip{Tensor<double>(Shape{1, 2, 2, 6})}), InvalidShapeError);
}

TEST(ClipFile, HeaderLayoutAndRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "exprdit_clip_test.fpvc";
  VideoClip clip{testing_util::uniform_tensor<float>({3, 4, 2, 1}, 77)};
  write_clip(path, clip);
  std::ifstream in(path, std::ios::binary);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), {});
  ASSERT_EQ(bytes.size(), 4 + 16 + 4 * clip.frames.size());
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "FPVC");
  std::uint32_t f;
  std::memcpy(&f, bytes.data() + 4, 4);
  EXPECT_EQ(f, 3u);
  EXPECT_EQ(read_clip(path).frames, clip.frames);

  std::filesystem::resize_file(path, bytes.size() - 3);
  EXPECT_THROW(read_clip(path), IoError);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace exprdit
