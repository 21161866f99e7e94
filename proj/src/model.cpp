// SPDX-License-Identifier: Apache-2.0
#include "gridattn/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>

#include "gridattn/error.hpp"
#include "gridattn/rng.hpp"

namespace gridattn {

namespace {

int mode_rank(PoolMode m) {
  switch (m) {
    case PoolMode::kMax: return 0;
    case PoolMode::kMin: return 1;
    case PoolMode::kAvg: return 2;
  }
  return 3;
}

}  // namespace

std::vector<PoolMode> canonical_modes(std::vector<PoolMode> modes) {
  std::sort(modes.begin(), modes.end(), [](PoolMode a, PoolMode b) { return mode_rank(a) < mode_rank(b); });
  return modes;
}

void validate(const AttentionConfig& cfg) {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::kInvalidConfig, what); };
  if (cfg.depth == 0) fail("feature depth K must be positive");
  if (cfg.heads == 0) fail("attention channel count H must be positive");
  if (cfg.heads >= cfg.depth) {
    fail("H must be smaller than K (H=" + std::to_string(cfg.heads) + ", K=" + std::to_string(cfg.depth) + ")");
  }
  if (cfg.kernel % 2 == 0) fail("kernel width n must be odd, got " + std::to_string(cfg.kernel));
  if (cfg.pool_window % 2 == 0) fail("pooling window must be odd, got " + std::to_string(cfg.pool_window));
  if (cfg.modes.empty()) fail("at least one pooling mode is required");
  auto sorted = canonical_modes(cfg.modes);
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) fail("pooling modes must not repeat");
}

ModelParams::ModelParams(AttentionConfig cfg) : config_(std::move(cfg)) {
  validate(config_);
  config_.modes = canonical_modes(config_.modes);
  const std::size_t sizes[4] = {config_.heads * config_.kernel * config_.kernel * config_.depth, config_.heads,
                                config_.output_dim() * config_.feature_length(), config_.output_dim()};
  for (int b = 0; b < 4; ++b) offsets_[b + 1] = offsets_[b] + sizes[b];
  values_.assign(offsets_[4], 0.0);
}

Shape ModelParams::conv_kernels_shape() const {
  return Shape{config_.heads, config_.kernel * config_.kernel, config_.depth};
}

Shape ModelParams::linear_weights_shape() const {
  return Shape{config_.output_dim(), config_.feature_length(), 1};
}

ModelParams init_params(const AttentionConfig& cfg, std::uint64_t seed) {
  ModelParams p(cfg);
  Rng rng(seed);
  const double conv_limit = std::sqrt(6.0 / static_cast<double>(cfg.kernel * cfg.kernel * cfg.depth));
  for (double& w : p.conv_kernels()) w = rng.uniform(-conv_limit, conv_limit);
  const double linear_limit = std::sqrt(6.0 / static_cast<double>(p.config().feature_length()));
  for (double& w : p.linear_weights()) w = rng.uniform(-linear_limit, linear_limit);
  return p;
}

Tensor3 to_tensor(const GridFeatureMap& g) { return tensor_cast<double>(g.grid); }

ForwardGraph record_forward(ad::Tape& tape, const Tensor3& grid, const ModelParams& params, bool track_params,
                            bool track_grid) {
  const AttentionConfig& cfg = params.config();
  if (grid.depth() != cfg.depth) {
    throw Error(ErrorCode::kDimensionMismatch, "grid depth " + std::to_string(grid.depth()) +
                                                   " does not match model depth " + std::to_string(cfg.depth));
  }
  auto leaf = [&](Tensor3 t, bool track) { return track ? tape.parameter(std::move(t)) : tape.constant(std::move(t)); };
  auto block_tensor = [](Shape s, std::span<const double> v) {
    return Tensor3(s, std::vector<double>(v.begin(), v.end()));
  };

  ForwardGraph g;
  g.grid = leaf(grid, track_grid);
  g.kernels = leaf(block_tensor(params.conv_kernels_shape(), params.conv_kernels()), track_params);
  g.conv_bias = leaf(block_tensor(Shape{1, 1, cfg.heads}, params.conv_bias()), track_params);
  g.weights = leaf(block_tensor(params.linear_weights_shape(), params.linear_weights()), track_params);
  g.linear_bias = leaf(block_tensor(Shape{1, 1, cfg.output_dim()}, params.linear_bias()), track_params);

  g.conv_out = ad::conv_depthk(tape, g.grid, g.kernels, g.conv_bias);
  for (PoolMode mode : cfg.modes) {
    const ad::Var pooled = ad::spatial_pool(tape, g.conv_out, mode, cfg.pool_window);
    const ad::Var attention = ad::spatial_softmax(tape, pooled);
    const ad::Var aggregated = ad::attend_aggregate(tape, attention, g.grid);
    g.pooled.push_back(pooled);
    g.attention.push_back(attention);
    g.aggregated.push_back(aggregated);
    g.activated.push_back(ad::activation(tape, aggregated, cfg.activation));
  }
  g.concat = ad::concat(tape, g.activated);
  g.output = ad::linear_head(tape, g.concat, g.weights, g.linear_bias);
  return g;
}

ForwardTrace forward(const Tensor3& grid, const ModelParams& params) {
  ad::Tape tape;
  const ForwardGraph g = record_forward(tape, grid, params, false);
  ForwardTrace t;
  t.conv_out = tape.value(g.conv_out);
  for (std::size_t m = 0; m < g.pooled.size(); ++m) {
    t.pooled.push_back(tape.value(g.pooled[m]));
    t.attention.push_back(tape.value(g.attention[m]));
    t.aggregated.push_back(tape.value(g.aggregated[m]));
    t.activated.push_back(tape.value(g.activated[m]));
  }
  const auto concat = tape.value(g.concat).values();
  t.concat.assign(concat.begin(), concat.end());
  const auto out = tape.value(g.output).values();
  t.output.assign(out.begin(), out.end());
  t.modes = params.config().modes;
  t.task = params.config().task;
  return t;
}

ForwardTrace forward(const GridFeatureMap& g, const ModelParams& params) { return forward(to_tensor(g), params); }

Prediction predict(const ForwardTrace& trace) {
  Prediction p;
  if (trace.task == TaskKind::kRegression) {
    if (trace.output.size() != 1) throw Error(ErrorCode::kDimensionMismatch, "regression trace needs one output");
    p.score = trace.output[0];
    return p;
  }
  if (trace.output.size() != 2) throw Error(ErrorCode::kDimensionMismatch, "classification trace needs two logits");
  const double z0 = trace.output[0];
  const double z1 = trace.output[1];
  p.label = z1 > z0 ? 1 : 0;
  p.probability = 1.0 / (1.0 + std::exp(z0 - z1));
  p.score = p.probability;
  return p;
}

ad::Var record_loss(ad::Tape& tape, ad::Var output, TaskKind task, double target) {
  if (task == TaskKind::kClassification) {
    if (target != 0.0 && target != 1.0) {
      throw Error(ErrorCode::kInvalidConfig, "class target must be 0 or 1");
    }
    return ad::cross_entropy(tape, output, static_cast<int>(target));
  }
  return ad::mse(tape, output, target);
}

LossGradient loss_and_gradient(const Tensor3& grid, const ModelParams& params, double target) {
  ad::Tape tape;
  const ForwardGraph g = record_forward(tape, grid, params, true);
  const ad::Var loss = record_loss(tape, g.output, params.config().task, target);
  tape.backward(loss);

  LossGradient out;
  out.loss = tape.value(loss).values()[0];
  out.gradient.reserve(params.size());
  for (ad::Var v : {g.kernels, g.conv_bias, g.weights, g.linear_bias}) {
    const auto d = tape.grad(v).values();
    out.gradient.insert(out.gradient.end(), d.begin(), d.end());
  }
  return out;
}

double loss_value(const Tensor3& grid, const ModelParams& params, double target) {
  ad::Tape tape;
  const ForwardGraph g = record_forward(tape, grid, params, false);
  return tape.value(record_loss(tape, g.output, params.config().task, target)).values()[0];
}

namespace {

constexpr char kCheckpointMagic[4] = {'G', 'A', 'M', '1'};
constexpr std::size_t kCheckpointHeaderBytes = 4 + 8 * 4;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(bytes[offset + b]) << (8 * b);
  return v;
}

std::uint64_t get_u64(std::span<const std::uint8_t> bytes, std::size_t offset) {
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(bytes[offset + b]) << (8 * b);
  return v;
}

[[noreturn]] void checkpoint_error(std::size_t offset, const std::string& what) {
  throw Error(ErrorCode::kFormat, "checkpoint at byte " + std::to_string(offset) + ": " + what);
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ModelParams& params) {
  const AttentionConfig& cfg = params.config();
  std::vector<std::uint8_t> out;
  out.reserve(kCheckpointHeaderBytes + 8 * params.size());
  out.insert(out.end(), std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  put_u32(out, static_cast<std::uint32_t>(cfg.depth));
  put_u32(out, static_cast<std::uint32_t>(cfg.heads));
  put_u32(out, static_cast<std::uint32_t>(cfg.kernel));
  put_u32(out, static_cast<std::uint32_t>(cfg.pool_window));
  put_u32(out, static_cast<std::uint32_t>(cfg.output_dim()));
  put_u32(out, cfg.task == TaskKind::kClassification ? 0u : 1u);
  std::uint32_t mask = 0;
  for (PoolMode m : cfg.modes) mask |= 1u << mode_rank(m);
  put_u32(out, mask);
  put_u32(out, cfg.activation == Activation::kRelu ? 0u : 1u);
  for (double v : params.values()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

ModelParams decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || !std::equal(std::begin(kCheckpointMagic), std::end(kCheckpointMagic), bytes.begin())) {
    checkpoint_error(0, "bad magic, expected GAM1");
  }
  if (bytes.size() < kCheckpointHeaderBytes) checkpoint_error(bytes.size(), "truncated header");
  AttentionConfig cfg;
  cfg.depth = get_u32(bytes, 4);
  cfg.heads = get_u32(bytes, 8);
  cfg.kernel = get_u32(bytes, 12);
  cfg.pool_window = get_u32(bytes, 16);
  const std::uint32_t output_dim = get_u32(bytes, 20);
  const std::uint32_t task = get_u32(bytes, 24);
  const std::uint32_t mask = get_u32(bytes, 28);
  const std::uint32_t activation = get_u32(bytes, 32);
  if (task > 1) checkpoint_error(24, "unknown task code");
  cfg.task = task == 0 ? TaskKind::kClassification : TaskKind::kRegression;
  if (output_dim != cfg.output_dim()) checkpoint_error(20, "output dimension does not match task");
  if (mask == 0 || mask > 7) checkpoint_error(28, "bad pooling-mode mask");
  cfg.modes.clear();
  for (PoolMode m : {PoolMode::kMax, PoolMode::kMin, PoolMode::kAvg}) {
    if (mask & (1u << mode_rank(m))) cfg.modes.push_back(m);
  }
  if (activation > 1) checkpoint_error(32, "unknown activation code");
  cfg.activation = activation == 0 ? Activation::kRelu : Activation::kTanh;
  if (cfg.depth > (1u << 20) || cfg.heads > (1u << 20) || cfg.kernel > 1025) {
    checkpoint_error(4, "declared dimensions overflow");
  }
  ModelParams params;
  try {
    params = ModelParams(cfg);
  } catch (const Error& e) {
    checkpoint_error(4, e.what());
  }
  const std::size_t expected = kCheckpointHeaderBytes + 8 * params.size();
  if (bytes.size() < expected) checkpoint_error(bytes.size(), "truncated parameters");
  if (bytes.size() > expected) checkpoint_error(expected, "trailing bytes after parameters");
  auto values = params.values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = std::bit_cast<double>(get_u64(bytes, kCheckpointHeaderBytes + 8 * i));
    if (!std::isfinite(values[i])) checkpoint_error(kCheckpointHeaderBytes + 8 * i, "non-finite parameter");
  }
  return params;
}

void write_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

ModelParams read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_checkpoint(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

}  // namespace gridattn
