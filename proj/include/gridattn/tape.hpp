// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "gridattn/ops.hpp"
#include "gridattn/tensor.hpp"

// Minimal reverse-mode differentiation over the ops in ops.hpp. A Tape records
// each forward value together with the closure that pushes its gradient back
// to its inputs; backward() replays the closures in reverse order.
namespace gridattn::ad {

struct Var {
  static constexpr std::size_t kInvalid = std::numeric_limits<std::size_t>::max();
  std::size_t id = kInvalid;
  bool valid() const { return id != kInvalid; }
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, Var self)>;

  /// Leaf that never receives a gradient.
  Var constant(Tensor3 value);
  /// Leaf whose gradient is collected by backward().
  Var parameter(Tensor3 value);

  /// Appends an interior node. `fn` runs during backward() only when the node
  /// depends on at least one parameter.
  Var record(Tensor3 value, std::span<const Var> inputs, BackwardFn fn);

  const Tensor3& value(Var v) const;
  bool requires_grad(Var v) const;

  /// Gradient of the last backward() root with respect to `v`.
  const Tensor3& grad(Var v) const;

  /// Accumulation buffer used by backward closures; null when `v` does not
  /// require a gradient.
  Tensor3* grad_buffer(Var v);

  /// Reverse sweep from a scalar (single-element) node.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }
  void clear();

 private:
  struct Node {
    Tensor3 value;
    bool requires_grad = false;
    BackwardFn backward;
    std::optional<Tensor3> grad;
  };

  const Node& node(Var v) const;
  Node& node(Var v);

  std::vector<Node> nodes_;
  bool has_gradients_ = false;
};

Var conv_depthk(Tape& tape, Var grid, Var kernels, Var bias);
Var spatial_pool(Tape& tape, Var x, ops::PoolMode mode, std::size_t window);
Var spatial_softmax(Tape& tape, Var x);
Var attend_aggregate(Tape& tape, Var attention, Var grid);
Var activation(Tape& tape, Var x, ops::Activation kind);
/// Flattens and joins the inputs in order into a 1 x 1 x total vector.
Var concat(Tape& tape, std::span<const Var> parts);
Var linear_head(Tape& tape, Var features, Var weights, Var bias);

/// -log softmax(logits)[label] for a two-element logit vector.
Var cross_entropy(Tape& tape, Var logits, int label);
/// (score - target)^2 for a single-element score.
Var mse(Tape& tape, Var score, double target);
Var sum(Tape& tape, Var x);
/// sum_i weights[i] * x[i]; a scalar probe used by gradient checks.
Var weighted_sum(Tape& tape, Var x, std::vector<double> weights);
Var element(Tape& tape, Var x, std::size_t index);

}  // namespace gridattn::ad
