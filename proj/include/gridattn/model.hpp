// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "gridattn/grid.hpp"
#include "gridattn/manifest.hpp"
#include "gridattn/ops.hpp"
#include "gridattn/tape.hpp"
#include "gridattn/tensor.hpp"

namespace gridattn {

using ops::Activation;
using ops::PoolMode;

struct AttentionConfig {
  std::size_t depth = 512;      // K, feature length of each grid cell
  std::size_t heads = 64;       // H, filters of the depth-spanning convolution
  std::size_t kernel = 3;       // n, spatial tap width
  std::size_t pool_window = 3;  // stride-1 pooling window
  std::vector<PoolMode> modes = {PoolMode::kMax, PoolMode::kMin};
  Activation activation = Activation::kRelu;
  TaskKind task = TaskKind::kClassification;

  /// 2 logits for classification, 1 score for regression.
  std::size_t output_dim() const { return task == TaskKind::kClassification ? 2 : 1; }
  /// |modes| * H * K
  std::size_t feature_length() const { return modes.size() * heads * depth; }

  bool operator==(const AttentionConfig&) const = default;
};

/// Throws kInvalidConfig unless H < K, n and the pooling window are odd, and
/// modes is a non-empty duplicate-free list.
void validate(const AttentionConfig& cfg);

/// Modes sorted into the fixed concatenation order max, min, avg.
std::vector<PoolMode> canonical_modes(std::vector<PoolMode> modes);

/// All trainable weights in one flat vector laid out as conv kernels
/// (H, n*n, K), conv bias (H), linear weights (C, D), linear bias (C).
class ModelParams {
 public:
  ModelParams() = default;
  explicit ModelParams(AttentionConfig cfg);

  const AttentionConfig& config() const { return config_; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }

  std::span<double> conv_kernels() { return block(0); }
  std::span<double> conv_bias() { return block(1); }
  std::span<double> linear_weights() { return block(2); }
  std::span<double> linear_bias() { return block(3); }
  std::span<const double> conv_kernels() const { return block(0); }
  std::span<const double> conv_bias() const { return block(1); }
  std::span<const double> linear_weights() const { return block(2); }
  std::span<const double> linear_bias() const { return block(3); }

  Shape conv_kernels_shape() const;
  Shape linear_weights_shape() const;

  bool operator==(const ModelParams&) const = default;

 private:
  std::span<double> block(int b) { return std::span<double>(values_).subspan(offsets_[b], offsets_[b + 1] - offsets_[b]); }
  std::span<const double> block(int b) const {
    return std::span<const double>(values_).subspan(offsets_[b], offsets_[b + 1] - offsets_[b]);
  }

  AttentionConfig config_;
  std::vector<double> values_;
  std::size_t offsets_[5] = {0, 0, 0, 0, 0};
};

/// Weights uniform in +-sqrt(6 / fan_in), biases zero, deterministic per seed.
ModelParams init_params(const AttentionConfig& cfg, std::uint64_t seed);

/// Per-sample outputs of a forward pass. Vectors are indexed like
/// config.modes.
struct ForwardTrace {
  Tensor3 conv_out;                  // M' x N' x H
  std::vector<Tensor3> pooled;       // M' x N' x H per mode
  std::vector<Tensor3> attention;    // M' x N' x H per mode, channels sum to 1
  std::vector<Tensor3> aggregated;   // H x K x 1 per mode, before activation
  std::vector<Tensor3> activated;    // H x K x 1 per mode
  std::vector<double> concat;        // |modes| * H * K
  std::vector<double> output;        // C values
  std::vector<PoolMode> modes;
  TaskKind task = TaskKind::kClassification;
};

/// Tape handles of one recorded forward pass.
struct ForwardGraph {
  ad::Var grid, kernels, conv_bias, weights, linear_bias;
  ad::Var conv_out;
  std::vector<ad::Var> pooled, attention, aggregated, activated;
  ad::Var concat, output;
};

/// Records the forward pass on `tape`. Parameters are tape parameters when
/// `track_params` is set; the grid when `track_grid` is set.
ForwardGraph record_forward(ad::Tape& tape, const Tensor3& grid, const ModelParams& params, bool track_params,
                            bool track_grid = false);

ForwardTrace forward(const Tensor3& grid, const ModelParams& params);
ForwardTrace forward(const GridFeatureMap& g, const ModelParams& params);

struct Prediction {
  int label = 0;             // classification: argmax, ties -> 0
  double probability = 0.0;  // classification: softmax probability of class 1
  double score = 0.0;        // regression output, or probability for classification
};

Prediction predict(const ForwardTrace& trace);

/// Loss of one sample: cross entropy against class `target` or squared error
/// against score `target`, according to the model's task.
ad::Var record_loss(ad::Tape& tape, ad::Var output, TaskKind task, double target);

struct LossGradient {
  double loss = 0.0;
  std::vector<double> gradient;  // same layout as ModelParams::values()
};

LossGradient loss_and_gradient(const Tensor3& grid, const ModelParams& params, double target);
double loss_value(const Tensor3& grid, const ModelParams& params, double target);

// GAM1 checkpoint: "GAM1", u32 depth, heads, kernel, pool_window, output_dim,
// task (0 classification, 1 regression), mode bitmask (1 max, 2 min, 4 avg),
// activation (0 relu, 1 tanh), then every parameter in ModelParams order as
// an f64. Little-endian.
std::vector<std::uint8_t> encode_checkpoint(const ModelParams& params);
ModelParams decode_checkpoint(std::span<const std::uint8_t> bytes);
void write_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams read_checkpoint(const std::filesystem::path& path);

Tensor3 to_tensor(const GridFeatureMap& g);

}  // namespace gridattn
