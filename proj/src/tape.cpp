// SPDX-License-Identifier: Apache-2.0
#include "gridattn/tape.hpp"

#include <algorithm>
#include <cmath>

#include "gridattn/error.hpp"

namespace gridattn::ad {

Var Tape::constant(Tensor3 value) {
  has_gradients_ = false;
  nodes_.push_back(Node{std::move(value), false, {}, std::nullopt});
  return Var{nodes_.size() - 1};
}

Var Tape::parameter(Tensor3 value) {
  has_gradients_ = false;
  nodes_.push_back(Node{std::move(value), true, {}, std::nullopt});
  return Var{nodes_.size() - 1};
}

Var Tape::record(Tensor3 value, std::span<const Var> inputs, BackwardFn fn) {
  bool needs = false;
  for (Var in : inputs) needs = needs || node(in).requires_grad;
  has_gradients_ = false;
  nodes_.push_back(Node{std::move(value), needs, needs ? std::move(fn) : BackwardFn{}, std::nullopt});
  return Var{nodes_.size() - 1};
}

const Tape::Node& Tape::node(Var v) const {
  if (!v.valid() || v.id >= nodes_.size()) {
    throw Error(ErrorCode::kState, "variable is not recorded on this tape");
  }
  return nodes_[v.id];
}

Tape::Node& Tape::node(Var v) {
  return const_cast<Node&>(static_cast<const Tape*>(this)->node(v));
}

const Tensor3& Tape::value(Var v) const { return node(v).value; }

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

const Tensor3& Tape::grad(Var v) const {
  const Node& n = node(v);
  if (!has_gradients_) throw Error(ErrorCode::kState, "gradient requested before backward()");
  if (!n.grad) throw Error(ErrorCode::kState, "variable does not depend on any parameter");
  return *n.grad;
}

Tensor3* Tape::grad_buffer(Var v) {
  Node& n = node(v);
  return n.grad ? &*n.grad : nullptr;
}

void Tape::backward(Var root) {
  Node& r = node(root);
  if (r.value.size() != 1) {
    throw Error(ErrorCode::kDimensionMismatch, "backward() needs a scalar root, got " + to_string(r.value.shape()));
  }
  for (std::size_t i = 0; i <= root.id; ++i) {
    Node& n = nodes_[i];
    if (n.requires_grad) {
      n.grad.emplace(n.value.shape(), 0.0);
    } else {
      n.grad.reset();
    }
  }
  for (std::size_t i = root.id + 1; i < nodes_.size(); ++i) nodes_[i].grad.reset();
  if (r.grad) r.grad->storage()[0] = 1.0;
  for (std::size_t i = root.id + 1; i-- > 0;) {
    if (nodes_[i].backward) nodes_[i].backward(*this, Var{i});
  }
  has_gradients_ = true;
}

void Tape::clear() {
  nodes_.clear();
  has_gradients_ = false;
}

namespace {

std::span<double> maybe_span(Tensor3* t) {
  return t ? t->values() : std::span<double>{};
}

}  // namespace

Var conv_depthk(Tape& tape, Var grid, Var kernels, Var bias) {
  Tensor3 out = ops::conv_depthk(tape.value(grid), tape.value(kernels), tape.value(bias).values());
  const Var inputs[] = {grid, kernels, bias};
  return tape.record(std::move(out), inputs, [grid, kernels, bias](Tape& t, Var self) {
    ops::conv_depthk_backward(t.value(grid), t.value(kernels), *t.grad_buffer(self), t.grad_buffer(grid),
                              t.grad_buffer(kernels), maybe_span(t.grad_buffer(bias)));
  });
}

Var spatial_pool(Tape& tape, Var x, ops::PoolMode mode, std::size_t window) {
  Tensor3 out = ops::spatial_pool(tape.value(x), mode, window);
  const Var inputs[] = {x};
  return tape.record(std::move(out), inputs, [x, mode, window](Tape& t, Var self) {
    ops::spatial_pool_backward(t.value(x), mode, window, *t.grad_buffer(self), *t.grad_buffer(x));
  });
}

Var spatial_softmax(Tape& tape, Var x) {
  Tensor3 out = ops::spatial_softmax(tape.value(x));
  const Var inputs[] = {x};
  return tape.record(std::move(out), inputs, [x](Tape& t, Var self) {
    ops::spatial_softmax_backward(t.value(self), *t.grad_buffer(self), *t.grad_buffer(x));
  });
}

Var attend_aggregate(Tape& tape, Var attention, Var grid) {
  Tensor3 out = ops::attend_aggregate(tape.value(attention), tape.value(grid));
  const Var inputs[] = {attention, grid};
  return tape.record(std::move(out), inputs, [attention, grid](Tape& t, Var self) {
    ops::attend_aggregate_backward(t.value(attention), t.value(grid), *t.grad_buffer(self),
                                   t.grad_buffer(attention), t.grad_buffer(grid));
  });
}

Var activation(Tape& tape, Var x, ops::Activation kind) {
  Tensor3 out = ops::activation(tape.value(x), kind);
  const Var inputs[] = {x};
  return tape.record(std::move(out), inputs, [x, kind](Tape& t, Var self) {
    ops::activation_backward(t.value(x), t.value(self), kind, *t.grad_buffer(self), *t.grad_buffer(x));
  });
}

Var concat(Tape& tape, std::span<const Var> parts) {
  std::vector<double> joined;
  for (Var p : parts) {
    const auto v = tape.value(p).values();
    joined.insert(joined.end(), v.begin(), v.end());
  }
  const std::size_t total = joined.size();
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape.record(Tensor3(Shape{1, 1, total}, std::move(joined)), parts, [inputs](Tape& t, Var self) {
    const auto g = t.grad_buffer(self)->values();
    std::size_t offset = 0;
    for (Var p : inputs) {
      const std::size_t len = t.value(p).size();
      if (Tensor3* gp = t.grad_buffer(p)) {
        auto dst = gp->values();
        for (std::size_t i = 0; i < len; ++i) dst[i] += g[offset + i];
      }
      offset += len;
    }
  });
}

Var linear_head(Tape& tape, Var features, Var weights, Var bias) {
  std::vector<double> out =
      ops::linear_head(tape.value(features).values(), tape.value(weights), tape.value(bias).values());
  const std::size_t n = out.size();
  const Var inputs[] = {features, weights, bias};
  return tape.record(Tensor3(Shape{1, 1, n}, std::move(out)), inputs,
                     [features, weights, bias](Tape& t, Var self) {
                       ops::linear_head_backward(t.value(features).values(), t.value(weights),
                                                 t.grad_buffer(self)->values(),
                                                 maybe_span(t.grad_buffer(features)), t.grad_buffer(weights),
                                                 maybe_span(t.grad_buffer(bias)));
                     });
}

Var cross_entropy(Tape& tape, Var logits, int label) {
  const auto z = tape.value(logits).values();
  if (z.size() != 2) throw Error(ErrorCode::kDimensionMismatch, "cross entropy expects two logits");
  if (label != 0 && label != 1) {
    throw Error(ErrorCode::kInvalidConfig, "class label must be 0 or 1, got " + std::to_string(label));
  }
  const double peak = std::max(z[0], z[1]);
  const double lse = peak + std::log(std::exp(z[0] - peak) + std::exp(z[1] - peak));
  const double loss = lse - z[static_cast<std::size_t>(label)];
  const Var inputs[] = {logits};
  return tape.record(Tensor3(Shape{1, 1, 1}, loss), inputs, [logits, label, lse](Tape& t, Var self) {
    const double g = t.grad_buffer(self)->values()[0];
    const auto zz = t.value(logits).values();
    auto gz = t.grad_buffer(logits)->values();
    for (std::size_t c = 0; c < 2; ++c) {
      const double p = std::exp(zz[c] - lse);
      gz[c] += g * (p - (static_cast<int>(c) == label ? 1.0 : 0.0));
    }
  });
}

Var mse(Tape& tape, Var score, double target) {
  const auto s = tape.value(score).values();
  if (s.size() != 1) throw Error(ErrorCode::kDimensionMismatch, "mse expects a single score");
  const double diff = s[0] - target;
  const Var inputs[] = {score};
  return tape.record(Tensor3(Shape{1, 1, 1}, diff * diff), inputs, [score, diff](Tape& t, Var self) {
    t.grad_buffer(score)->values()[0] += t.grad_buffer(self)->values()[0] * 2.0 * diff;
  });
}

Var sum(Tape& tape, Var x) {
  double total = 0.0;
  for (double v : tape.value(x).values()) total += v;
  const Var inputs[] = {x};
  return tape.record(Tensor3(Shape{1, 1, 1}, total), inputs, [x](Tape& t, Var self) {
    const double g = t.grad_buffer(self)->values()[0];
    for (double& d : t.grad_buffer(x)->values()) d += g;
  });
}

Var weighted_sum(Tape& tape, Var x, std::vector<double> weights) {
  const auto v = tape.value(x).values();
  if (weights.size() != v.size()) throw Error(ErrorCode::kDimensionMismatch, "weighted_sum length mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) total += weights[i] * v[i];
  const Var inputs[] = {x};
  return tape.record(Tensor3(Shape{1, 1, 1}, total), inputs, [x, w = std::move(weights)](Tape& t, Var self) {
    const double g = t.grad_buffer(self)->values()[0];
    auto gx = t.grad_buffer(x)->values();
    for (std::size_t i = 0; i < w.size(); ++i) gx[i] += g * w[i];
  });
}

Var element(Tape& tape, Var x, std::size_t index) {
  const auto v = tape.value(x).values();
  if (index >= v.size()) throw Error(ErrorCode::kOutOfRange, "element index out of range");
  const Var inputs[] = {x};
  return tape.record(Tensor3(Shape{1, 1, 1}, v[index]), inputs, [x, index](Tape& t, Var self) {
    t.grad_buffer(x)->values()[index] += t.grad_buffer(self)->values()[0];
  });
}

}  // namespace gridattn::ad
