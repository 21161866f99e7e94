// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gridattn/manifest.hpp"
#include "gridattn/model.hpp"

namespace gridattn {

enum class LossKind { kCrossEntropy, kMse };
enum class OptimizerKind { kSgd, kAdam };

std::string_view to_string(LossKind loss);
std::string_view to_string(OptimizerKind opt);

struct TrainConfig {
  std::size_t epochs = 35;
  std::size_t batch_size = 64;
  LossKind loss = LossKind::kCrossEntropy;
  OptimizerKind optimizer = OptimizerKind::kSgd;
  double lr = 0.001;
  double lr_decay_factor = 0.1;
  std::size_t lr_decay_epoch = 20;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  /// L2 coefficient added to every gradient as weight_decay * theta; 0 keeps the plain loss.
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  std::size_t folds = 4;
  std::size_t weight_inits = 2;
  bool include_lowres = true;
  unsigned threads = 1;

  /// Classification: cross entropy, SGD at 0.001 decayed by 0.1 at epoch 20.
  /// Regression: squared error, Adam at 0.0001 with no decay.
  static TrainConfig for_task(TaskKind task);
};

void validate(const TrainConfig& cfg);

/// lr * decay_factor ^ floor(epoch / decay_epoch)
double learning_rate(const TrainConfig& cfg, std::size_t epoch);

/// -log softmax(logits)[label], log-sum-exp stabilised.
double cross_entropy(std::span<const double> logits, int label);
double mse(double score, double target);

void sgd_step(std::span<double> params, std::span<const double> grads, std::size_t epoch, const TrainConfig& cfg);

struct AdamState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
};

/// Bias-corrected Adam update for step t (1-based) at the epoch's learning rate.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, std::size_t t,
               std::size_t epoch, const TrainConfig& cfg);

struct Sample {
  Tensor3 grid;
  double target = 0.0;
  std::string id;
};

/// Loads the records of `m` accepted by `keep`, resolving grid paths against
/// `base_dir` and applying each record's augmentation.
std::vector<Sample> load_samples(const DatasetManifest& m, const std::filesystem::path& base_dir,
                                 const std::function<bool(const SampleRecord&)>& keep = {});

struct TrainReport {
  std::vector<double> epoch_losses;
  ModelParams params;
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;
  std::size_t optimizer_steps = 0;
};

/// Per epoch: seeded shuffle, batches of batch_size samples (last one
/// partial), per-sample forward/backward with gradients averaged over the
/// batch in sample order, then one optimizer step. `init_seed` seeds the
/// weights; cfg.seed drives shuffling.
TrainReport train(std::span<const Sample> samples, const TrainConfig& cfg, const AttentionConfig& attn,
                  std::uint64_t init_seed);

/// Starts from `initial` instead of fresh weights.
TrainReport train_from(std::span<const Sample> samples, const TrainConfig& cfg, ModelParams initial);

/// Trains on the manifest's training pool (low-resolution copies only with
/// cfg.include_lowres).
TrainReport train(const DatasetManifest& m, const std::filesystem::path& base_dir, const TrainConfig& cfg,
                  const AttentionConfig& attn, std::uint64_t init_seed);

/// Mean gradient of the given samples, reduced in sample order.
LossGradient batch_gradient(std::span<const Sample> samples, std::span<const std::size_t> indices,
                            const ModelParams& params, unsigned threads = 1);

/// Training-pool records get a fold id 0..k-1 as their split. Copies of one
/// source (augmentations, low-resolution re-extractions) share a fold. Groups
/// are shuffled with `seed` and cut into chunks of floor(N/k), the remainder
/// going one each to the first folds.
DatasetManifest assign_folds(const DatasetManifest& m, std::size_t k, std::uint64_t seed);

/// View of fold `fold`: its unaugmented primary-resolution records become
/// "val", its other copies are dropped, every other fold becomes "train".
DatasetManifest fold_view(const DatasetManifest& assigned, std::size_t fold);

std::vector<DatasetManifest> kfold_split(const DatasetManifest& m, std::size_t k, std::uint64_t seed);

struct Evaluation {
  std::string metric;  // "auc" or "spearman"
  double value = 0.0;
  std::vector<double> scores;
  std::vector<double> targets;
  std::vector<std::string> ids;
};

Evaluation evaluate(const ModelParams& params, std::span<const Sample> samples);

struct FoldResult {
  std::size_t fold = 0;
  std::size_t init = 0;
  double metric = 0.0;
  double final_loss = 0.0;
};

struct CrossValidation {
  std::string metric;
  std::vector<FoldResult> runs;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation (0 for a single run)
};

/// folds x weight_inits runs; init i uses weight seed derive_seed(cfg.seed, i).
CrossValidation cross_validate(const DatasetManifest& m, const std::filesystem::path& base_dir,
                               const TrainConfig& cfg, const AttentionConfig& attn);

// Tab-separated report. Rows: "seed", "task", "metric", one
// "fold <f> init <i> metric <v> loss <l>" row per run, "summary mean <m> std
// <s>", then one "epoch <e> loss <l>" row per epoch of the final model.
// Wall-clock time is deliberately absent so reports are reproducible.
std::string format_report(const TrainConfig& cfg, TaskKind task, const CrossValidation* cv,
                          const TrainReport* final_run);
void write_report(const std::filesystem::path& path, const std::string& text);

/// Per-run metric values ("fold" rows) of a report, keyed (fold, init).
std::vector<FoldResult> parse_report_runs(std::string_view text);

}  // namespace gridattn
