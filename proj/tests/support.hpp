// SPDX-License-Identifier: Apache-2.0
// Shared helpers for the unit and acceptance tests.
#pragma once

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <string>
#include <vector>

#include "gridattn/gradcheck.hpp"
#include "gridattn/model.hpp"
#include "gridattn/rng.hpp"
#include "gridattn/tape.hpp"
#include "gridattn/tensor.hpp"

namespace gridattn::testing {

inline Tensor3 random_tensor(Rng& rng, Shape shape, double scale = 1.0) {
  Tensor3 t(shape);
  for (double& v : t.values()) v = scale * rng.normal();
  return t;
}

inline Tensor3f random_tensorf(Rng& rng, Shape shape) {
  Tensor3f t(shape);
  for (float& v : t.values()) v = static_cast<float>(rng.normal());
  return t;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("gridattn_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

using OpBuilder = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

/// Checks the tape gradient of `build` against central differences. Every
/// input is a parameter; the output is reduced to a scalar through fixed
/// random weights so that every output element contributes.
inline GradientReport check_op(const std::vector<Tensor3>& inputs, const OpBuilder& build, Rng& rng,
                               double eps = 1e-5) {
  std::vector<double> params;
  for (const Tensor3& t : inputs) params.insert(params.end(), t.values().begin(), t.values().end());

  auto unpack = [&inputs](std::span<const double> theta) {
    std::vector<Tensor3> out;
    std::size_t offset = 0;
    for (const Tensor3& t : inputs) {
      out.emplace_back(t.shape(), std::vector<double>(theta.begin() + offset, theta.begin() + offset + t.size()));
      offset += t.size();
    }
    return out;
  };

  std::vector<double> weights;
  {
    ad::Tape tape;
    std::vector<ad::Var> leaves;
    for (const Tensor3& t : inputs) leaves.push_back(tape.constant(t));
    const std::size_t n = tape.value(build(tape, leaves)).size();
    for (std::size_t i = 0; i < n; ++i) weights.push_back(rng.uniform(-1.0, 1.0));
  }

  Objective objective;
  objective.value = [&](std::span<const double> theta) {
    ad::Tape tape;
    std::vector<ad::Var> leaves;
    for (Tensor3& t : unpack(theta)) leaves.push_back(tape.constant(std::move(t)));
    return tape.value(ad::weighted_sum(tape, build(tape, leaves), weights)).values()[0];
  };
  objective.gradient = [&](std::span<const double> theta) {
    ad::Tape tape;
    std::vector<ad::Var> leaves;
    for (Tensor3& t : unpack(theta)) leaves.push_back(tape.parameter(std::move(t)));
    const ad::Var root = ad::weighted_sum(tape, build(tape, leaves), weights);
    tape.backward(root);
    std::vector<double> g;
    for (ad::Var leaf : leaves) {
      const auto v = tape.grad(leaf).values();
      g.insert(g.end(), v.begin(), v.end());
    }
    return g;
  };
  return grad_check(objective, params, eps);
}

struct ModelGradientCheck {
  GradientReport report;          // every parameter except the convolution bias
  double max_conv_bias_grad = 0;  // |analytic| over the convolution bias
};

/// Full-network gradient check of the single-sample loss. The convolution
/// bias shifts a whole channel, which the spatial softmax cancels, so its
/// gradient is identically zero; finite differences there only see roundoff
/// (about |loss| * 1e-16 / eps), which the 1e-8 denominator floor would turn
/// into a spurious 1e-3 relative error. It is checked for being zero instead.
inline ModelGradientCheck check_model_gradient(const ModelParams& p, const Tensor3& grid, double target,
                                               double eps = 1e-5) {
  const std::size_t b0 = p.conv_kernels().size();
  const std::size_t b1 = b0 + p.conv_bias().size();
  auto is_free = [b0, b1](std::size_t i) { return i < b0 || i >= b1; };
  std::vector<double> theta;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (is_free(i)) theta.push_back(p.values()[i]);
  auto with = [&](std::span<const double> t) {
    ModelParams q = p;
    std::size_t k = 0;
    for (std::size_t i = 0; i < q.size(); ++i)
      if (is_free(i)) q.values()[i] = t[k++];
    return q;
  };
  Objective obj;
  obj.value = [&](std::span<const double> t) { return loss_value(grid, with(t), target); };
  obj.gradient = [&](std::span<const double> t) {
    const std::vector<double> full = loss_and_gradient(grid, with(t), target).gradient;
    std::vector<double> out;
    for (std::size_t i = 0; i < full.size(); ++i)
      if (is_free(i)) out.push_back(full[i]);
    return out;
  };
  ModelGradientCheck out;
  out.report = grad_check(obj, theta, eps);
  const std::vector<double> full = loss_and_gradient(grid, p, target).gradient;
  for (std::size_t i = b0; i < b1; ++i) out.max_conv_bias_grad = std::max(out.max_conv_bias_grad, std::fabs(full[i]));
  return out;
}

}  // namespace gridattn::testing
