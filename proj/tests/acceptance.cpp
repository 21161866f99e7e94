// SPDX-License-Identifier: Apache-2.0
// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Every tolerance and training setting is pinned below.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "golden.hpp"
#include "gridattn/cli.hpp"
#include "gridattn/gradcheck.hpp"
#include "gridattn/grid.hpp"
#include "gridattn/metrics.hpp"
#include "gridattn/model.hpp"
#include "gridattn/ops.hpp"
#include "gridattn/saliency.hpp"
#include "gridattn/synth.hpp"
#include "gridattn/train.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace gridattn;
namespace oracle = gridattn::testing::oracle;
using gridattn::testing::random_tensor;
using gridattn::testing::TempDir;

namespace {

// ---- pinned tolerances and budgets ----------------------------------------
constexpr double kGradEps = 1e-5;
constexpr double kGradTol = 1e-4;
constexpr double kZeroGradTol = 1e-12;
constexpr double kGradBudgetSeconds = 120.0;
constexpr double kSumTol = 1e-6;
constexpr double kAggregateTol = 1e-6;
constexpr double kMetricTol = 1e-12;
constexpr double kClassAucMin = 0.95;
constexpr double kControlAucLo = 0.4;
constexpr double kControlAucHi = 0.6;
constexpr double kSynthBudgetSeconds = 300.0;
constexpr double kHitRateMin = 0.8;
constexpr double kSpearmanMin = 0.9;

// ---- pinned synthetic-benchmark settings ----------------------------------
constexpr std::uint64_t kSynthSeed = 0;
constexpr std::size_t kTrainBags = 200;
constexpr std::size_t kTestBags = 100;

AttentionConfig synth_attention(TaskKind task) {
  AttentionConfig a;
  a.depth = 16;
  a.heads = 4;
  a.kernel = 1;
  a.pool_window = 1;
  a.modes = {PoolMode::kMin, PoolMode::kMax};
  a.task = task;
  return a;
}

TrainConfig synth_classification_training() {
  TrainConfig cfg = TrainConfig::for_task(TaskKind::kClassification);
  cfg.epochs = 200;
  cfg.batch_size = 8;
  cfg.lr = 0.01;
  cfg.lr_decay_factor = 1.0;
  cfg.weight_decay = 0.1;
  cfg.seed = kSynthSeed;
  return cfg;
}

TrainConfig synth_regression_training() {
  TrainConfig cfg = TrainConfig::for_task(TaskKind::kRegression);
  cfg.epochs = 200;
  cfg.batch_size = 1;
  cfg.weight_decay = 0.01;
  cfg.seed = kSynthSeed;
  return cfg;
}

// ---- reporting ---------------------------------------------------------------

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- 1: gradient correctness -------------------------------------------------

Outcome gradient_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<std::vector<PoolMode>> mode_sets = {
      {PoolMode::kMin, PoolMode::kMax}, {PoolMode::kMax}, {PoolMode::kMin}, {PoolMode::kAvg},
      {PoolMode::kMax, PoolMode::kAvg}, {PoolMode::kMin, PoolMode::kAvg}, {PoolMode::kMax, PoolMode::kMin, PoolMode::kAvg}};
  Rng rng(101);
  double worst = 0.0;
  double worst_bias = 0.0;
  for (std::size_t trial = 0; trial < 100; ++trial) {
    AttentionConfig cfg;
    cfg.depth = rng.uniform_int(0, 1) ? 8 : 4;
    cfg.heads = static_cast<std::size_t>(rng.uniform_int(2, 3));
    cfg.kernel = rng.uniform_int(0, 1) ? 3 : 1;
    cfg.pool_window = rng.uniform_int(0, 1) ? 3 : 1;
    cfg.modes = mode_sets[trial % mode_sets.size()];
    cfg.activation = trial % 3 == 2 ? Activation::kTanh : Activation::kRelu;
    cfg.task = trial % 4 == 3 ? TaskKind::kRegression : TaskKind::kClassification;
    ModelParams p = init_params(cfg, 1000 + trial);
    for (double& b : p.conv_bias()) b = 0.1 * rng.normal();
    for (double& b : p.linear_bias()) b = 0.1 * rng.normal();
    const auto rows = static_cast<std::size_t>(rng.uniform_int(3, 8));
    const auto cols = static_cast<std::size_t>(rng.uniform_int(3, 8));
    const Tensor3 g = random_tensor(rng, {rows, cols, cfg.depth});
    const double target = cfg.task == TaskKind::kRegression ? rng.uniform() : static_cast<double>(rng.uniform_int(0, 1));

    const auto check = gridattn::testing::check_model_gradient(p, g, target, kGradEps);
    worst = std::max(worst, check.report.max_relative_error);
    worst_bias = std::max(worst_bias, check.max_conv_bias_grad);
  }
  const double secs = seconds_since(t0);
  return {worst < kGradTol && worst_bias <= kZeroGradTol && secs < kGradBudgetSeconds,
          "100 configurations, max relative error " + fmt("%.3g", worst) + " (< 1e-4), conv-bias gradient " +
              fmt("%.3g", worst_bias) + " (<= 1e-12, zero by softmax shift invariance), " + fmt("%.1f", secs) +
              " s (< 120 s)"};
}

// ---- 2: attention normalisation ----------------------------------------------

Outcome attention_normalisation() {
  Rng rng(102);
  double worst = 0.0;
  for (std::size_t trial = 0; trial < 1000; ++trial) {
    AttentionConfig cfg;
    cfg.depth = 8;
    cfg.heads = 3;
    cfg.modes = {PoolMode::kMax, PoolMode::kMin, PoolMode::kAvg};
    const ModelParams p = init_params(cfg, trial);
    const double scale = trial % 4 == 0 ? 1e4 : 1.0;
    const auto rows = static_cast<std::size_t>(rng.uniform_int(1, 9));
    const auto cols = static_cast<std::size_t>(rng.uniform_int(1, 9));
    const ForwardTrace t = forward(random_tensor(rng, {rows, cols, 8}, scale), p);
    for (const Tensor3& a : t.attention) {
      for (std::size_t h = 0; h < a.depth(); ++h) {
        double sum = 0.0;
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < cols; ++j) {
            if (!std::isfinite(a(i, j, h))) return {false, "non-finite attention weight"};
            sum += a(i, j, h);
          }
        worst = std::max(worst, std::fabs(sum - 1.0));
      }
    }
  }
  return {worst <= kSumTol, "1000 traces, max |sum - 1| " + fmt("%.3g", worst) + " (<= 1e-6)"};
}

// ---- 3: aggregation oracle ---------------------------------------------------

Outcome aggregation_oracle() {
  Rng rng(103);
  double worst = 0.0;
  for (std::size_t trial = 0; trial < 100; ++trial) {
    const auto rows = static_cast<std::size_t>(rng.uniform_int(1, 10));
    const auto cols = static_cast<std::size_t>(rng.uniform_int(1, 10));
    const auto depth = static_cast<std::size_t>(rng.uniform_int(1, 16));
    const Tensor3 g = random_tensor(rng, {rows, cols, depth});
    const auto hi = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(rows) - 1));
    const auto hj = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(cols) - 1));
    Tensor3 att(rows, cols, 2);
    att(hi, hj, 0) = 1.0;
    const double cells = static_cast<double>(rows * cols);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) att(i, j, 1) = 1.0 / cells;
    const Tensor3 v = ops::attend_aggregate(att, g);
    for (std::size_t k = 0; k < depth; ++k) {
      double mean = 0.0;
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) mean += g(i, j, k);
      mean /= cells;
      worst = std::max(worst, std::fabs(v(0, k) - g(hi, hj, k)));
      worst = std::max(worst, std::fabs(v(1, k) - mean));
    }
  }
  return {worst <= kAggregateTol, "100 grids, max deviation " + fmt("%.3g", worst) + " (<= 1e-6)"};
}

// ---- 4: metric oracles -------------------------------------------------------

std::vector<double> tied_values(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = static_cast<double>(rng.uniform_int(0, 4)) * 0.25;
  return v;
}

Outcome metric_oracles() {
  Rng rng(104);
  double worst = 0.0;
  std::size_t mismatches = 0;
  for (std::size_t trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + trial % 7;
    const auto s = tied_values(rng, n);
    const auto t = tied_values(rng, n);
    std::vector<int> y(n);
    for (int& l : y) l = static_cast<int>(rng.uniform_int(0, 1));
    y[0] = 0;
    y[1] = 1;
    worst = std::max(worst, std::fabs(metrics::auc(s, y) - oracle::auc(s, y)));
    const bool s_const = std::all_of(s.begin(), s.end(), [&](double x) { return x == s[0]; });
    const bool t_const = std::all_of(t.begin(), t.end(), [&](double x) { return x == t[0]; });
    if (!s_const && !t_const) worst = std::max(worst, std::fabs(metrics::spearman(s, t) - oracle::spearman(s, t)));
    if (s != t) {
      const auto got = metrics::wilcoxon_signed_rank(s, t);
      const auto ref = oracle::wilcoxon(s, t);
      if (got.n != ref.n || got.w_plus != ref.w_plus) ++mismatches;
      worst = std::max(worst, std::fabs(got.p_value - ref.p_value));
    }
  }
  // Continuous and tied differences up to n = 12 against full enumeration.
  for (std::size_t n = 1; n <= 12; ++n) {
    for (int rep = 0; rep < 20; ++rep) {
      std::vector<double> a(n), b(n, 0.0);
      for (double& x : a) x = rep % 2 ? rng.uniform(-1.0, 2.0) : static_cast<double>(rng.uniform_int(-3, 4));
      if (std::all_of(a.begin(), a.end(), [](double x) { return x == 0.0; })) a[0] = 1.0;
      const auto got = metrics::wilcoxon_signed_rank(a, b);
      const auto ref = oracle::wilcoxon(a, b);
      if (got.n != ref.n || !got.exact) ++mismatches;
      worst = std::max(worst, std::fabs(got.p_value - ref.p_value));
    }
  }
  return {worst <= kMetricTol && mismatches == 0,
          "500 draws of size <= 8 and 240 Wilcoxon enumerations up to n = 12, max deviation " + fmt("%.3g", worst) +
              " (<= 1e-12)"};
}

// ---- 5, 6, 8: synthetic classification ----------------------------------------

struct ClassificationRun {
  double auc = 0.0;
  double baseline_auc = 0.0;
  double hit_rate = 0.0;
  double seconds = 0.0;
  ModelParams params;
};

ClassificationRun run_classification(double mu) {
  const auto t0 = std::chrono::steady_clock::now();
  synth::SynthConfig sc;
  sc.seed = kSynthSeed;
  sc.mu = mu;
  const auto ds = synth::gen_dataset(sc, kTrainBags, kTestBags);
  const auto train_set = synth::to_samples(ds.train);
  const auto test_set = synth::to_samples(ds.test);
  const TrainReport rep = train(train_set, synth_classification_training(), synth_attention(TaskKind::kClassification),
                                derive_seed(kSynthSeed, 0));
  ClassificationRun out;
  out.auc = evaluate(rep.params, test_set).value;
  out.seconds = seconds_since(t0);
  out.baseline_auc = synth::mean_feature_logistic_auc(ds.train, ds.test);
  std::vector<synth::SynthBag> positives;
  for (const auto& b : ds.test)
    if (b.label == 1.0) positives.push_back(b);
  out.hit_rate = synth::localization_hit_rate(rep.params, positives, kSynthSeed);
  out.params = rep.params;
  return out;
}

Outcome synthetic_regression() {
  const auto t0 = std::chrono::steady_clock::now();
  synth::SynthConfig sc;
  sc.seed = kSynthSeed;
  sc.task = TaskKind::kRegression;
  const auto ds = synth::gen_dataset(sc, kTrainBags, kTestBags);
  const auto train_set = synth::to_samples(ds.train);
  const TrainReport rep = train(train_set, synth_regression_training(), synth_attention(TaskKind::kRegression),
                                derive_seed(kSynthSeed, 0));
  const double rho = evaluate(rep.params, synth::to_samples(ds.test)).value;
  const double secs = seconds_since(t0);
  return {rho >= kSpearmanMin && secs < kSynthBudgetSeconds,
          "test Spearman " + fmt("%.4f", rho) + " (>= 0.9), " + fmt("%.1f", secs) + " s"};
}

Outcome variable_size(const ModelParams& params) {
  const std::size_t expected = params.config().feature_length();
  Rng rng(108);
  std::vector<std::pair<std::size_t, std::size_t>> sizes = {{1, 1}, {1, 48}, {32, 1}, {32, 48}};
  for (int i = 0; i < 20; ++i) {
    sizes.emplace_back(static_cast<std::size_t>(rng.uniform_int(1, 32)), static_cast<std::size_t>(rng.uniform_int(1, 48)));
  }
  for (const auto& [r, c] : sizes) {
    const ForwardTrace t = forward(random_tensor(rng, {r, c, params.config().depth}), params);
    if (t.concat.size() != expected) return {false, "aggregated length changed at " + std::to_string(r) + "x" + std::to_string(c)};
    for (double o : t.output)
      if (!std::isfinite(o)) return {false, "non-finite output at " + std::to_string(r) + "x" + std::to_string(c)};
  }
  return {true, std::to_string(sizes.size()) + " grid sizes from 1x1 to 32x48, aggregated length " +
                    std::to_string(expected)};
}

// ---- 9: protocol defaults ----------------------------------------------------

Outcome protocol_defaults() {
  const TrainConfig c = TrainConfig::for_task(TaskKind::kClassification);
  const TrainConfig r = TrainConfig::for_task(TaskKind::kRegression);
  const bool cls = c.epochs == 35 && c.batch_size == 64 && c.optimizer == OptimizerKind::kSgd && c.lr == 0.001 &&
                   c.lr_decay_factor == 0.1 && c.lr_decay_epoch == 20 && c.loss == LossKind::kCrossEntropy;
  const bool reg = r.epochs == 35 && r.batch_size == 64 && r.optimizer == OptimizerKind::kAdam && r.lr == 0.0001 &&
                   r.loss == LossKind::kMse && learning_rate(r, 34) == 0.0001;
  const bool schedule = learning_rate(c, 19) == 0.001 && learning_rate(c, 20) == 0.0001;
  return {cls && reg && schedule, "classification and regression defaults, lr(19) = 0.001, lr(20) = 0.0001"};
}

// ---- 10: determinism ---------------------------------------------------------

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "gridattn");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  return cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
}

Outcome determinism() {
  TempDir dir;
  if (run_cli({"synth", "--out-dir", dir.path().string(), "--n-train", "40", "--n-test", "10", "--seed", "5"}) != 0) {
    return {false, "synth failed"};
  }
  auto train_args = [&dir](const std::string& tag, const std::string& threads) {
    return std::vector<std::string>{"train", (dir / "train.tsv").string(), (dir / (tag + ".gam")).string(),
                                    (dir / (tag + ".tsv")).string(), "--epochs", "3", "--batch", "16", "--h", "4",
                                    "--folds", "2", "--inits", "2", "--seed", "9", "--deterministic",
                                    "--threads", threads};
  };
  if (run_cli(train_args("a", "1")) != 0 || run_cli(train_args("b", "1")) != 0 || run_cli(train_args("c", "4")) != 0) {
    return {false, "train failed"};
  }
  using gridattn::testing::read_bytes;
  const bool same = read_bytes(dir / "a.gam") == read_bytes(dir / "b.gam") &&
                    read_bytes(dir / "a.tsv") == read_bytes(dir / "b.tsv") &&
                    read_bytes(dir / "a.gam") == read_bytes(dir / "c.gam") &&
                    read_bytes(dir / "a.tsv") == read_bytes(dir / "c.tsv");
  return {same, "three CLI train runs (1, 1 and 4 threads) give identical checkpoint and report bytes"};
}

// ---- 11: formats -------------------------------------------------------------

Outcome formats() {
  Rng rng(111);
  std::size_t failures = 0;
  for (std::size_t trial = 0; trial < 1000; ++trial) {
    GridFeatureMap g;
    g.grid = Tensor3f(static_cast<std::size_t>(rng.uniform_int(1, 12)), static_cast<std::size_t>(rng.uniform_int(1, 12)),
                      static_cast<std::size_t>(rng.uniform_int(1, 40)));
    for (float& v : g.grid.values()) v = static_cast<float>(rng.normal() * std::pow(10.0, rng.uniform_int(-6, 6)));
    g.patch_size_px = static_cast<std::uint32_t>(rng.uniform_int(1, 512));
    g.microns_per_pixel = static_cast<float>(rng.uniform(0.0, 8.0));
    const auto bytes = encode_gfm(g);
    const GridFeatureMap back = decode_gfm(bytes);
    if (encode_gfm(back) != bytes || !std::ranges::equal(back.grid.values(), g.grid.values()) || back.patch_size_px != g.patch_size_px ||
        back.microns_per_pixel != g.microns_per_pixel) {
      ++failures;
    }

    AttentionConfig cfg;
    cfg.depth = static_cast<std::size_t>(rng.uniform_int(2, 12));
    cfg.heads = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(cfg.depth) - 1));
    cfg.kernel = rng.uniform_int(0, 1) ? 3 : 1;
    cfg.pool_window = 2 * static_cast<std::size_t>(rng.uniform_int(0, 2)) + 1;
    std::vector<PoolMode> modes = {PoolMode::kMax, PoolMode::kMin, PoolMode::kAvg};
    const auto keep = static_cast<std::size_t>(rng.uniform_int(1, 3));
    cfg.modes.assign(modes.begin(), modes.begin() + static_cast<std::ptrdiff_t>(keep));
    cfg.activation = rng.uniform_int(0, 1) ? Activation::kTanh : Activation::kRelu;
    cfg.task = rng.uniform_int(0, 1) ? TaskKind::kRegression : TaskKind::kClassification;
    ModelParams p = init_params(cfg, trial);
    for (double& v : p.values()) v += rng.normal();
    const auto ckpt = encode_checkpoint(p);
    if (!(decode_checkpoint(ckpt) == p) || encode_checkpoint(decode_checkpoint(ckpt)) != ckpt) ++failures;
  }
  std::size_t golden_failures = 0;
  for (const auto& c : gridattn::testing::golden_attention_cases()) {
    const auto got = encode_pgm(export_attention(gridattn::testing::golden_trace(c), PoolMode::kMax, 0, c.patch));
    if (got != gridattn::testing::read_bytes(std::filesystem::path(GRIDATTN_GOLDEN_DIR) / c.file)) ++golden_failures;
  }
  return {failures == 0 && golden_failures == 0,
          "1000 GFM and checkpoint round trips with " + std::to_string(failures) + " failures, " +
              std::to_string(3 - golden_failures) + "/3 golden PGMs identical"};
}

}  // namespace

int main() {
  int failed = 0;
  auto report = [&failed](int id, const char* name, const Outcome& o) {
    std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  };

  report(1, "gradient correctness", gradient_correctness());
  report(2, "attention normalisation", attention_normalisation());
  report(3, "aggregation oracle", aggregation_oracle());
  report(4, "metric oracles", metric_oracles());

  const ClassificationRun model = run_classification(2.0);
  const ClassificationRun control = run_classification(0.0);
  const bool control_ok = control.auc >= kControlAucLo && control.auc <= kControlAucHi;
  report(5, "synthetic classification",
         {model.auc >= kClassAucMin && control_ok && model.seconds + control.seconds < kSynthBudgetSeconds,
          "test AUC " + fmt("%.4f", model.auc) + " (>= 0.95), mean-feature logistic baseline " +
              fmt("%.4f", model.baseline_auc) + ", control AUC " + fmt("%.4f", control.auc) +
              " (in [0.4, 0.6]), control baseline " + fmt("%.4f", control.baseline_auc) + ", " +
              fmt("%.1f", model.seconds + control.seconds) + " s"});
  report(6, "localization",
         {model.hit_rate >= kHitRateMin,
          "hit rate on positive test bags " + fmt("%.3f", model.hit_rate) + " (>= 0.8, chance about 0.016 on 8x8)"});
  report(7, "synthetic regression", synthetic_regression());
  report(8, "variable-size contract", variable_size(model.params));
  report(9, "protocol defaults", protocol_defaults());
  report(10, "determinism", determinism());
  report(11, "formats", formats());

  std::printf("%d of 11 criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
