// SPDX-License-Identifier: Apache-2.0
#include "gridattn/ops.hpp"

#include <algorithm>
#include <cmath>

#include "gridattn/simd/kernels.hpp"

namespace gridattn::ops {

namespace {

void require(bool ok, ErrorCode code, const std::string& what) {
  if (!ok) throw Error(code, what);
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  require(a == b, ErrorCode::kDimensionMismatch,
          std::string(what) + ": " + to_string(a) + " vs " + to_string(b));
}

struct Window {
  std::size_t r0, r1, c0, c1;  // half-open
};

Window window_at(const Shape& s, std::size_t i, std::size_t j, std::size_t radius) {
  return {i >= radius ? i - radius : 0, std::min(s.rows, i + radius + 1), j >= radius ? j - radius : 0,
          std::min(s.cols, j + radius + 1)};
}

// Row-major first extremum inside the window; forward and backward share it.
std::size_t extremum_offset(const Tensor3& x, const Window& w, std::size_t k, bool want_max) {
  std::size_t best = x.offset(w.r0, w.c0, k);
  const auto values = x.values();
  for (std::size_t r = w.r0; r < w.r1; ++r) {
    for (std::size_t c = w.c0; c < w.c1; ++c) {
      const std::size_t off = x.offset(r, c, k);
      if (want_max ? values[off] > values[best] : values[off] < values[best]) best = off;
    }
  }
  return best;
}

}  // namespace

std::string_view to_string(PoolMode mode) {
  switch (mode) {
    case PoolMode::kMax: return "max";
    case PoolMode::kMin: return "min";
    case PoolMode::kAvg: return "avg";
  }
  return "?";
}

std::string_view to_string(Activation kind) {
  return kind == Activation::kRelu ? "relu" : "tanh";
}

PoolMode parse_pool_mode(std::string_view text) {
  if (text == "max") return PoolMode::kMax;
  if (text == "min") return PoolMode::kMin;
  if (text == "avg") return PoolMode::kAvg;
  throw Error(ErrorCode::kInvalidConfig, "unknown pooling mode '" + std::string(text) + "'");
}

Activation parse_activation(std::string_view text) {
  if (text == "relu") return Activation::kRelu;
  if (text == "tanh") return Activation::kTanh;
  throw Error(ErrorCode::kInvalidConfig, "unknown activation '" + std::string(text) + "'");
}

std::size_t kernel_width(const Tensor3& kernels) {
  const std::size_t taps = kernels.cols();
  std::size_t n = 1;
  while (n * n < taps) ++n;
  require(n * n == taps && n % 2 == 1, ErrorCode::kInvalidConfig,
          "kernel tap count " + std::to_string(taps) + " is not the square of an odd width");
  return n;
}

Tensor3 conv_depthk(const Tensor3& grid, const Tensor3& kernels, std::span<const double> bias) {
  const std::size_t n = kernel_width(kernels);
  const std::size_t filters = kernels.rows();
  const std::size_t depth = grid.depth();
  require(kernels.depth() == depth, ErrorCode::kDimensionMismatch,
          "kernel depth " + std::to_string(kernels.depth()) + " != grid depth " + std::to_string(depth));
  require(bias.size() == filters, ErrorCode::kDimensionMismatch, "conv bias length != filter count");

  const std::size_t radius = n / 2;
  Tensor3 out(grid.rows(), grid.cols(), filters);
  for (std::size_t i = 0; i < grid.rows(); ++i) {
    for (std::size_t j = 0; j < grid.cols(); ++j) {
      const Window w = window_at(grid.shape(), i, j, radius);
      for (std::size_t h = 0; h < filters; ++h) {
        double acc = bias[h];
        for (std::size_t r = w.r0; r < w.r1; ++r) {
          for (std::size_t c = w.c0; c < w.c1; ++c) {
            const std::size_t tap = (r + radius - i) * n + (c + radius - j);
            acc += simd::dot(&kernels(h, tap), &grid(r, c), depth);
          }
        }
        out(i, j, h) = acc;
      }
    }
  }
  return out;
}

void conv_depthk_backward(const Tensor3& grid, const Tensor3& kernels, const Tensor3& grad_out,
                          Tensor3* grad_grid, Tensor3* grad_kernels, std::span<double> grad_bias) {
  const std::size_t n = kernel_width(kernels);
  const std::size_t filters = kernels.rows();
  const std::size_t depth = grid.depth();
  require_same_shape(grad_out.shape(), Shape{grid.rows(), grid.cols(), filters}, "conv grad_out");
  if (grad_grid) require_same_shape(grad_grid->shape(), grid.shape(), "conv grad_grid");
  if (grad_kernels) require_same_shape(grad_kernels->shape(), kernels.shape(), "conv grad_kernels");

  const std::size_t radius = n / 2;
  for (std::size_t i = 0; i < grid.rows(); ++i) {
    for (std::size_t j = 0; j < grid.cols(); ++j) {
      const Window w = window_at(grid.shape(), i, j, radius);
      for (std::size_t h = 0; h < filters; ++h) {
        const double g = grad_out(i, j, h);
        if (!grad_bias.empty()) grad_bias[h] += g;
        if (g == 0.0) continue;
        for (std::size_t r = w.r0; r < w.r1; ++r) {
          for (std::size_t c = w.c0; c < w.c1; ++c) {
            const std::size_t tap = (r + radius - i) * n + (c + radius - j);
            if (grad_grid) simd::axpy(g, &kernels(h, tap), &(*grad_grid)(r, c), depth);
            if (grad_kernels) simd::axpy(g, &grid(r, c), &(*grad_kernels)(h, tap), depth);
          }
        }
      }
    }
  }
}

Tensor3 spatial_pool(const Tensor3& x, PoolMode mode, std::size_t window) {
  require(window % 2 == 1, ErrorCode::kInvalidConfig,
          "pooling window must be odd, got " + std::to_string(window));
  const std::size_t radius = window / 2;
  Tensor3 out(x.shape());
  const auto values = x.values();
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) {
      const Window w = window_at(x.shape(), i, j, radius);
      for (std::size_t k = 0; k < x.depth(); ++k) {
        if (mode == PoolMode::kAvg) {
          double sum = 0.0;
          for (std::size_t r = w.r0; r < w.r1; ++r)
            for (std::size_t c = w.c0; c < w.c1; ++c) sum += x(r, c, k);
          out(i, j, k) = sum / static_cast<double>((w.r1 - w.r0) * (w.c1 - w.c0));
        } else {
          out(i, j, k) = values[extremum_offset(x, w, k, mode == PoolMode::kMax)];
        }
      }
    }
  }
  return out;
}

void spatial_pool_backward(const Tensor3& x, PoolMode mode, std::size_t window, const Tensor3& grad_out,
                           Tensor3& grad_x) {
  require(window % 2 == 1, ErrorCode::kInvalidConfig, "pooling window must be odd");
  require_same_shape(grad_out.shape(), x.shape(), "pool grad_out");
  require_same_shape(grad_x.shape(), x.shape(), "pool grad_x");
  const std::size_t radius = window / 2;
  auto gx = grad_x.values();
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) {
      const Window w = window_at(x.shape(), i, j, radius);
      for (std::size_t k = 0; k < x.depth(); ++k) {
        const double g = grad_out(i, j, k);
        if (mode == PoolMode::kAvg) {
          const double share = g / static_cast<double>((w.r1 - w.r0) * (w.c1 - w.c0));
          for (std::size_t r = w.r0; r < w.r1; ++r)
            for (std::size_t c = w.c0; c < w.c1; ++c) grad_x(r, c, k) += share;
        } else {
          gx[extremum_offset(x, w, k, mode == PoolMode::kMax)] += g;
        }
      }
    }
  }
}

Tensor3 spatial_softmax(const Tensor3& x) {
  Tensor3 out(x.shape());
  const std::size_t cells = x.shape().cells();
  const std::size_t depth = x.depth();
  const auto in = x.values();
  auto y = out.values();
  for (std::size_t k = 0; k < depth; ++k) {
    double peak = in[k];
    for (std::size_t c = 1; c < cells; ++c) peak = std::max(peak, in[c * depth + k]);
    double total = 0.0;
    for (std::size_t c = 0; c < cells; ++c) {
      const double e = std::exp(in[c * depth + k] - peak);
      y[c * depth + k] = e;
      total += e;
    }
    for (std::size_t c = 0; c < cells; ++c) y[c * depth + k] /= total;
  }
  return out;
}

void spatial_softmax_backward(const Tensor3& y, const Tensor3& grad_out, Tensor3& grad_x) {
  require_same_shape(grad_out.shape(), y.shape(), "softmax grad_out");
  require_same_shape(grad_x.shape(), y.shape(), "softmax grad_x");
  const std::size_t cells = y.shape().cells();
  const std::size_t depth = y.depth();
  const auto yv = y.values();
  const auto gy = grad_out.values();
  auto gx = grad_x.values();
  for (std::size_t k = 0; k < depth; ++k) {
    double inner = 0.0;
    for (std::size_t c = 0; c < cells; ++c) inner += gy[c * depth + k] * yv[c * depth + k];
    for (std::size_t c = 0; c < cells; ++c) {
      const std::size_t o = c * depth + k;
      gx[o] += yv[o] * (gy[o] - inner);
    }
  }
}

Tensor3 attend_aggregate(const Tensor3& attention, const Tensor3& grid) {
  require(attention.rows() == grid.rows() && attention.cols() == grid.cols(), ErrorCode::kDimensionMismatch,
          "attention " + to_string(attention.shape()) + " and grid " + to_string(grid.shape()) +
              " differ spatially");
  const std::size_t heads = attention.depth();
  const std::size_t depth = grid.depth();
  Tensor3 v(heads, depth, 1);
  for (std::size_t i = 0; i < grid.rows(); ++i) {
    for (std::size_t j = 0; j < grid.cols(); ++j) {
      for (std::size_t h = 0; h < heads; ++h) {
        simd::axpy(attention(i, j, h), &grid(i, j), &v(h, 0), depth);
      }
    }
  }
  return v;
}

void attend_aggregate_backward(const Tensor3& attention, const Tensor3& grid, const Tensor3& grad_out,
                               Tensor3* grad_attention, Tensor3* grad_grid) {
  const std::size_t heads = attention.depth();
  const std::size_t depth = grid.depth();
  require_same_shape(grad_out.shape(), Shape{heads, depth, 1}, "aggregate grad_out");
  if (grad_attention) require_same_shape(grad_attention->shape(), attention.shape(), "aggregate grad_attention");
  if (grad_grid) require_same_shape(grad_grid->shape(), grid.shape(), "aggregate grad_grid");
  for (std::size_t i = 0; i < grid.rows(); ++i) {
    for (std::size_t j = 0; j < grid.cols(); ++j) {
      for (std::size_t h = 0; h < heads; ++h) {
        if (grad_attention) (*grad_attention)(i, j, h) += simd::dot(&grad_out(h, 0), &grid(i, j), depth);
        if (grad_grid) simd::axpy(attention(i, j, h), &grad_out(h, 0), &(*grad_grid)(i, j), depth);
      }
    }
  }
}

Tensor3 activation(const Tensor3& x, Activation kind) {
  Tensor3 out(x.shape());
  auto y = out.values();
  const auto in = x.values();
  for (std::size_t i = 0; i < in.size(); ++i) {
    y[i] = kind == Activation::kRelu ? std::max(in[i], 0.0) : std::tanh(in[i]);
  }
  return out;
}

void activation_backward(const Tensor3& x, const Tensor3& y, Activation kind, const Tensor3& grad_out,
                         Tensor3& grad_x) {
  require_same_shape(grad_out.shape(), x.shape(), "activation grad_out");
  require_same_shape(grad_x.shape(), x.shape(), "activation grad_x");
  const auto in = x.values();
  const auto out = y.values();
  const auto gy = grad_out.values();
  auto gx = grad_x.values();
  for (std::size_t i = 0; i < in.size(); ++i) {
    const double d = kind == Activation::kRelu ? (in[i] > 0.0 ? 1.0 : 0.0) : 1.0 - out[i] * out[i];
    gx[i] += d * gy[i];
  }
}

std::vector<double> linear_head(std::span<const double> features, const Tensor3& weights,
                                std::span<const double> bias) {
  const std::size_t outputs = weights.rows();
  require(weights.cols() == features.size() && weights.depth() == 1, ErrorCode::kDimensionMismatch,
          "linear weights " + to_string(weights.shape()) + " vs feature length " +
              std::to_string(features.size()));
  require(bias.size() == outputs, ErrorCode::kDimensionMismatch, "linear bias length != output count");
  std::vector<double> out(outputs);
  for (std::size_t c = 0; c < outputs; ++c) {
    out[c] = simd::dot(&weights(c, 0), features.data(), features.size()) + bias[c];
  }
  return out;
}

void linear_head_backward(std::span<const double> features, const Tensor3& weights,
                          std::span<const double> grad_out, std::span<double> grad_features,
                          Tensor3* grad_weights, std::span<double> grad_bias) {
  const std::size_t outputs = weights.rows();
  const std::size_t length = features.size();
  require(weights.cols() == length && grad_out.size() == outputs, ErrorCode::kDimensionMismatch,
          "linear backward shapes");
  for (std::size_t c = 0; c < outputs; ++c) {
    const double g = grad_out[c];
    if (!grad_bias.empty()) grad_bias[c] += g;
    if (!grad_features.empty()) simd::axpy(g, &weights(c, 0), grad_features.data(), length);
    if (grad_weights) simd::axpy(g, features.data(), &(*grad_weights)(c, 0), length);
  }
}

}  // namespace gridattn::ops
