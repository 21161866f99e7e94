// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "gridattn/grid.hpp"

namespace gridattn {

/// 8-bit RGB image, row-major, three bytes per pixel.
struct RgbImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(std::size_t h, std::size_t w, std::uint8_t fill = 255) : height(h), width(w), pixels(3 * h * w, fill) {}

  std::uint8_t* at(std::size_t r, std::size_t c) { return &pixels[3 * (r * width + c)]; }
  const std::uint8_t* at(std::size_t r, std::size_t c) const { return &pixels[3 * (r * width + c)]; }
  void set(std::size_t r, std::size_t c, std::uint8_t red, std::uint8_t green, std::uint8_t blue) {
    std::uint8_t* p = at(r, c);
    p[0] = red;
    p[1] = green;
    p[2] = blue;
  }

  bool operator==(const RgbImage&) const = default;
};

/// Binary PPM (P6, maxval 255).
RgbImage decode_ppm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_ppm(const RgbImage& img);
RgbImage read_ppm(const std::filesystem::path& path);
void write_ppm(const RgbImage& img, const std::filesystem::path& path);

struct Rect {
  std::size_t row = 0;
  std::size_t col = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  bool operator==(const Rect&) const = default;
};

inline constexpr int kDefaultWhiteThreshold = 220;

/// Smallest rectangle holding every pixel whose channel mean is below
/// `white_threshold`.
Rect tissue_bbox(const RgbImage& img, int white_threshold = kDefaultWhiteThreshold);

RgbImage crop(const RgbImage& img, const Rect& r);

/// Flips and clockwise rotations, matching apply_transform on grids.
RgbImage transform_image(const RgbImage& img, Transform t);

/// 2x box downscale (rounded mean of each 2x2 block); odd edges dropped.
RgbImage downscale2x(const RgbImage& img);

struct Patch {
  std::size_t row = 0;
  std::size_t col = 0;
  std::size_t size = 0;
  std::vector<std::uint8_t> pixels;  // size x size RGB
};

struct Tiling {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Patch> patches;  // row-major
};

/// Non-overlapping p x p tiles anchored at the top-left; partial strips on the
/// bottom and right are dropped.
Tiling tile(const RgbImage& img, std::size_t patch_size);

/// Deterministic orientation-free stand-in for a CNN feature extractor.
///
/// Output: mean and variance of each channel (values scaled to [0, 1]),
/// followed by a fixed seeded Gaussian projection of the three 8-bin channel
/// histograms to depth - 6 values. For depth < 6 only the leading moments are
/// kept. Moments and histograms are accumulated in integers, so the result is
/// bit-identical for any flip or rotation of the patch.
class ToyExtractor {
 public:
  static constexpr std::size_t kMomentCount = 6;
  static constexpr std::size_t kHistogramBins = 8;

  ToyExtractor(std::size_t depth, std::uint64_t seed);

  std::size_t depth() const { return depth_; }
  std::vector<float> operator()(const Patch& patch) const;

 private:
  std::size_t depth_;
  std::vector<double> projection_;  // (depth - 6) x 24
};

std::vector<float> toy_features(const Patch& patch, std::size_t depth, std::uint64_t seed);

struct ExtractOptions {
  std::size_t patch_size = 224;
  std::size_t depth = 512;
  std::uint64_t seed = 0;
  int white_threshold = kDefaultWhiteThreshold;
  float microns_per_pixel = 0.0f;
  unsigned threads = 1;
  std::string source_id;
};

/// tissue_bbox -> crop -> tile -> toy features -> pack_grid.
GridFeatureMap extract_grid(const RgbImage& img, const ExtractOptions& options);

/// Comma-separated table, one line per cell: i, j, f1, ..., fK. A first line
/// starting with "i," is treated as a header; blank and '#' lines are skipped.
GridFeatureMap parse_feature_table(std::string_view text, std::size_t rows, std::size_t cols, const GridMeta& meta);
GridFeatureMap import_features(const std::filesystem::path& csv_path, std::size_t rows, std::size_t cols,
                               const GridMeta& meta);

}  // namespace gridattn
