// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "gridattn/model.hpp"

namespace gridattn {

/// Row-major map with values in [0, 1].
struct HeatMap {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  bool operator==(const HeatMap&) const = default;
};

/// Min-max normalisation; a constant map becomes all zeros.
HeatMap normalize(HeatMap map);

/// Nearest-neighbour upscaling: every cell becomes a factor x factor block.
HeatMap upscale(const HeatMap& map, std::size_t factor);

/// Channel `channel` of the attention map for `mode`, normalised and upscaled
/// by `patch_size`.
HeatMap export_attention(const ForwardTrace& trace, PoolMode mode, std::size_t channel, std::size_t patch_size);

/// Class activation map over the convolution output G': each cell scores
/// relu(sum_h d(target)/dG'[., ., h] * G'[., ., h]), normalised and upscaled.
/// Per-cell gradients are used instead of Grad-CAM's spatially averaged
/// channel weights because those averages vanish here: the spatial softmax
/// ignores a constant added to a whole channel of G', so every channel's
/// gradient sums to zero over the grid. For spatially uniform gradients the
/// two definitions coincide. The target is the logit of `target_class`
/// (default: the predicted class) or the regression score.
HeatMap grad_cam(const ModelParams& params, const Tensor3& grid, std::optional<int> target_class,
                 std::size_t patch_size);

/// The map of grad_cam from already computed activations and target
/// gradients, both M' x N' x H.
HeatMap grad_cam_from(const Tensor3& activations, const Tensor3& gradients);

/// Binary PGM (P5), byte = floor(255 v + 0.5).
std::vector<std::uint8_t> encode_pgm(const HeatMap& map);
HeatMap decode_pgm(std::span<const std::uint8_t> bytes);
void write_pgm(const HeatMap& map, const std::filesystem::path& path);
HeatMap read_pgm(const std::filesystem::path& path);

/// Blue-to-red pseudo-colour table: entry i is
/// (i, 255 - |2i - 255|, 255 - i), i.e. blue at 0, mid grey-green at the
/// centre, red at 255.
std::array<std::array<std::uint8_t, 3>, 256> color_table();

/// Binary PPM (P6) through color_table().
void write_color_ppm(const HeatMap& map, const std::filesystem::path& path);

}  // namespace gridattn
