// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "gridattn/tensor.hpp"

// Forward and backward passes of the layers used by the attention classifier.
// Backward functions accumulate into their gradient outputs (+=), so several
// consumers of one value can share a gradient buffer.
namespace gridattn::ops {

enum class PoolMode { kMax, kMin, kAvg };
enum class Activation { kRelu, kTanh };

std::string_view to_string(PoolMode mode);
std::string_view to_string(Activation kind);
PoolMode parse_pool_mode(std::string_view text);
Activation parse_activation(std::string_view text);

/// Kernels are stored as an (H, n*n, K) tensor: filter h, tap (di*n + dj),
/// channel k. Zero same-padding keeps the spatial size.
Tensor3 conv_depthk(const Tensor3& grid, const Tensor3& kernels, std::span<const double> bias);

/// Returns the odd tap width n of an (H, n*n, K) kernel tensor.
std::size_t kernel_width(const Tensor3& kernels);

void conv_depthk_backward(const Tensor3& grid, const Tensor3& kernels, const Tensor3& grad_out,
                          Tensor3* grad_grid, Tensor3* grad_kernels, std::span<double> grad_bias);

/// Stride-1 windowed pooling centred on each cell. Cells outside the grid are
/// excluded from the window rather than padded.
Tensor3 spatial_pool(const Tensor3& x, PoolMode mode, std::size_t window);

void spatial_pool_backward(const Tensor3& x, PoolMode mode, std::size_t window, const Tensor3& grad_out,
                           Tensor3& grad_x);

/// Softmax over all cells of each channel.
Tensor3 spatial_softmax(const Tensor3& x);

void spatial_softmax_backward(const Tensor3& y, const Tensor3& grad_out, Tensor3& grad_x);

/// v[h, k] = sum over cells of attention[., ., h] * grid[., ., k]; returned
/// as an (H, K, 1) tensor.
Tensor3 attend_aggregate(const Tensor3& attention, const Tensor3& grid);

void attend_aggregate_backward(const Tensor3& attention, const Tensor3& grid, const Tensor3& grad_out,
                               Tensor3* grad_attention, Tensor3* grad_grid);

Tensor3 activation(const Tensor3& x, Activation kind);

void activation_backward(const Tensor3& x, const Tensor3& y, Activation kind, const Tensor3& grad_out,
                         Tensor3& grad_x);

/// out = weights * features + bias, weights stored as a (C, D, 1) tensor.
std::vector<double> linear_head(std::span<const double> features, const Tensor3& weights,
                                std::span<const double> bias);

void linear_head_backward(std::span<const double> features, const Tensor3& weights,
                          std::span<const double> grad_out, std::span<double> grad_features,
                          Tensor3* grad_weights, std::span<double> grad_bias);

}  // namespace gridattn::ops
