// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gridattn/tensor.hpp"

namespace gridattn {

/// Compressed slide: cell (i, j) holds the K features of the patch whose
/// top-left pixel is (i * patch_size_px, j * patch_size_px).
struct GridFeatureMap {
  Tensor3f grid;
  std::uint32_t patch_size_px = 224;
  float microns_per_pixel = 0.0f;  // 0 = unknown
  std::string source_id;

  std::size_t rows() const { return grid.rows(); }
  std::size_t cols() const { return grid.cols(); }
  std::size_t depth() const { return grid.depth(); }
};

struct GridMeta {
  std::uint32_t patch_size_px = 224;
  float microns_per_pixel = 0.0f;
  std::string source_id;
};

struct PatchFeature {
  std::size_t row = 0;
  std::size_t col = 0;
  std::vector<float> values;
};

/// Every cell of the rows x cols grid must be supplied exactly once.
GridFeatureMap pack_grid(std::span<const PatchFeature> features, std::size_t rows, std::size_t cols,
                         const GridMeta& meta);

// GFM1 file: "GFM1", u32 rows, cols, depth, patch_size_px, reserved (0),
// f32 microns_per_pixel, then rows*cols*depth f32 values in tensor order.
// All fields little-endian.
inline constexpr std::size_t kGfmHeaderBytes = 4 + 5 * 4 + 4;

std::vector<std::uint8_t> encode_gfm(const GridFeatureMap& g);
GridFeatureMap decode_gfm(std::span<const std::uint8_t> bytes, std::string source_id = {});

void write_gfm(const GridFeatureMap& g, const std::filesystem::path& path);
/// The file stem becomes the source_id (the format does not store it).
GridFeatureMap read_gfm(const std::filesystem::path& path);

enum class Transform {
  kIdentity,
  kHFlip,
  kVFlip,
  kRot90,
  kRot180,
  kRot270,
  kShiftH1,
  kShiftH2,
  kShiftV1,
  kShiftV2,
};

/// The nine training augmentations, in manifest order.
inline constexpr std::array<Transform, 9> kAugmentations = {
    Transform::kHFlip,  Transform::kVFlip,   Transform::kRot90,   Transform::kRot180, Transform::kRot270,
    Transform::kShiftH1, Transform::kShiftH2, Transform::kShiftV1, Transform::kShiftV2,
};

std::string_view to_string(Transform t);
/// Accepts the names produced by to_string; "" and "none" mean identity.
Transform parse_transform(std::string_view text);
bool is_rigid(Transform t);
/// Inverse of a flip or rotation.
Transform inverse(Transform t);

/// Moves every cell by (drow, dcol); vacated cells become zero.
template <class T>
BasicTensor3<T> shift_cells(const BasicTensor3<T>& x, std::ptrdiff_t drow, std::ptrdiff_t dcol);

/// Rotations are clockwise: cell (i, j) of an R x C grid lands on
/// (j, R - 1 - i) of the C x R result. Horizontal shifts move content toward
/// higher column indices, vertical shifts toward higher rows.
template <class T>
BasicTensor3<T> apply_transform(const BasicTensor3<T>& x, Transform t);

GridFeatureMap augment_grid(const GridFeatureMap& g, Transform t);

}  // namespace gridattn
