// SPDX-License-Identifier: Apache-2.0
#include "gridattn/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>

#include "gridattn/error.hpp"
#include "gridattn/metrics.hpp"
#include "gridattn/rng.hpp"
#include "gridattn/simd/kernels.hpp"

namespace gridattn {

std::string_view to_string(LossKind loss) { return loss == LossKind::kCrossEntropy ? "cross_entropy" : "mse"; }
std::string_view to_string(OptimizerKind opt) { return opt == OptimizerKind::kSgd ? "sgd" : "adam"; }

TrainConfig TrainConfig::for_task(TaskKind task) {
  TrainConfig cfg;
  if (task == TaskKind::kRegression) {
    cfg.loss = LossKind::kMse;
    cfg.optimizer = OptimizerKind::kAdam;
    cfg.lr = 0.0001;
    cfg.lr_decay_factor = 1.0;
  }
  return cfg;
}

void validate(const TrainConfig& cfg) {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::kInvalidConfig, what); };
  if (cfg.epochs < 1) fail("epochs must be at least 1");
  if (cfg.batch_size < 1) fail("batch size must be at least 1");
  if (!(cfg.lr >= 0.0) || !std::isfinite(cfg.lr)) fail("learning rate must be finite and non-negative");
  if (!(cfg.lr_decay_factor > 0.0)) fail("learning-rate decay factor must be positive");
  if (cfg.lr_decay_epoch < 1) fail("learning-rate decay epoch must be at least 1");
  if (!(cfg.adam_beta1 >= 0.0 && cfg.adam_beta1 < 1.0 && cfg.adam_beta2 >= 0.0 && cfg.adam_beta2 < 1.0)) {
    fail("Adam betas must lie in [0, 1)");
  }
  if (!(cfg.adam_eps > 0.0)) fail("Adam epsilon must be positive");
  if (!(cfg.weight_decay >= 0.0) || !std::isfinite(cfg.weight_decay)) fail("weight decay must be finite and non-negative");
}

double learning_rate(const TrainConfig& cfg, std::size_t epoch) {
  const auto decays = static_cast<double>(epoch / cfg.lr_decay_epoch);
  return cfg.lr * std::pow(cfg.lr_decay_factor, decays);
}

double cross_entropy(std::span<const double> logits, int label) {
  if (logits.size() != 2) throw Error(ErrorCode::kDimensionMismatch, "cross entropy expects two logits");
  if (label != 0 && label != 1) throw Error(ErrorCode::kInvalidConfig, "class label must be 0 or 1");
  const double peak = std::max(logits[0], logits[1]);
  const double lse = peak + std::log(std::exp(logits[0] - peak) + std::exp(logits[1] - peak));
  return lse - logits[static_cast<std::size_t>(label)];
}

double mse(double score, double target) {
  const double d = score - target;
  return d * d;
}

namespace {

void require_same_length(std::size_t a, std::size_t b) {
  if (a != b) {
    throw Error(ErrorCode::kDimensionMismatch,
                "parameter/gradient length mismatch (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
  }
}

}  // namespace

void sgd_step(std::span<double> params, std::span<const double> grads, std::size_t epoch, const TrainConfig& cfg) {
  require_same_length(params.size(), grads.size());
  const double lr = learning_rate(cfg, epoch);
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grads[i];
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, std::size_t t,
               std::size_t epoch, const TrainConfig& cfg) {
  if (t == 0) throw Error(ErrorCode::kState, "Adam step index starts at 1");
  require_same_length(params.size(), grads.size());
  if (state.first_moment.empty()) {
    state.first_moment.assign(params.size(), 0.0);
    state.second_moment.assign(params.size(), 0.0);
  }
  require_same_length(params.size(), state.first_moment.size());
  const double lr = learning_rate(cfg, epoch);
  const double b1 = cfg.adam_beta1;
  const double b2 = cfg.adam_beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g * g;
    const double m_hat = m / correction1;
    const double v_hat = v / correction2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
  }
}

std::vector<Sample> load_samples(const DatasetManifest& m, const std::filesystem::path& base_dir,
                                 const std::function<bool(const SampleRecord&)>& keep) {
  std::vector<Sample> out;
  std::map<std::string, GridFeatureMap> cache;
  for (const SampleRecord& r : m.records) {
    if (keep && !keep(r)) continue;
    std::filesystem::path path(r.grid_path);
    if (path.is_relative()) path = base_dir / path;
    auto it = cache.find(path.string());
    if (it == cache.end()) it = cache.emplace(path.string(), read_gfm(path)).first;
    const Transform t = parse_transform(r.augmentation_tag);
    std::string id = r.grid_path;
    if (!r.augmentation_tag.empty()) id += "#" + r.augmentation_tag;
    out.push_back(Sample{to_tensor(augment_grid(it->second, t)), r.label, std::move(id)});
  }
  return out;
}

LossGradient batch_gradient(std::span<const Sample> samples, std::span<const std::size_t> indices,
                            const ModelParams& params, unsigned threads) {
  LossGradient total;
  total.gradient.assign(params.size(), 0.0);
  if (indices.empty()) return total;
  const std::size_t width = std::max<std::size_t>(1, threads);
  std::vector<LossGradient> chunk(std::min(width, indices.size()));

  // Chunks of `width` samples are evaluated concurrently, then folded into the
  // total strictly in sample order so the result is independent of threads.
  for (std::size_t start = 0; start < indices.size(); start += width) {
    const std::size_t count = std::min(width, indices.size() - start);
    auto run = [&](std::size_t slot) {
      const Sample& s = samples[indices[start + slot]];
      chunk[slot] = loss_and_gradient(s.grid, params, s.target);
    };
    if (count == 1) {
      run(0);
    } else {
      std::vector<std::jthread> pool;
      for (std::size_t slot = 0; slot < count; ++slot) pool.emplace_back(run, slot);
    }
    for (std::size_t slot = 0; slot < count; ++slot) {
      total.loss += chunk[slot].loss;
      for (std::size_t i = 0; i < total.gradient.size(); ++i) total.gradient[i] += chunk[slot].gradient[i];
    }
  }
  const double scale = 1.0 / static_cast<double>(indices.size());
  total.loss *= scale;
  for (double& g : total.gradient) g *= scale;
  return total;
}

namespace {

void check_task(const TrainConfig& cfg, TaskKind task) {
  const bool ok = (cfg.loss == LossKind::kCrossEntropy) == (task == TaskKind::kClassification);
  if (!ok) {
    throw Error(ErrorCode::kInvalidConfig, std::string("loss ") + std::string(to_string(cfg.loss)) +
                                               " does not fit a " + std::string(to_string(task)) + " task");
  }
}

}  // namespace

TrainReport train_from(std::span<const Sample> samples, const TrainConfig& cfg, ModelParams initial) {
  validate(cfg);
  check_task(cfg, initial.config().task);
  if (samples.empty()) throw Error(ErrorCode::kInvalidConfig, "training split is empty");
  const auto started = std::chrono::steady_clock::now();

  TrainReport report;
  report.seed = cfg.seed;
  report.params = std::move(initial);
  AdamState adam;
  Rng rng(derive_seed(cfg.seed, 0x73687566));
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - start);
      const std::span<const std::size_t> batch(order.data() + start, count);
      LossGradient lg = batch_gradient(samples, batch, report.params, cfg.threads);
      if (cfg.weight_decay > 0.0) simd::axpy(cfg.weight_decay, report.params.values(), lg.gradient);
      if (!std::isfinite(lg.loss)) {
        throw Error(ErrorCode::kNonFinite, "loss became non-finite at epoch " + std::to_string(epoch) +
                                               ", batch starting with sample '" + samples[batch[0]].id + "'");
      }
      loss_sum += lg.loss * static_cast<double>(count);
      ++report.optimizer_steps;
      if (cfg.optimizer == OptimizerKind::kSgd) {
        sgd_step(report.params.values(), lg.gradient, epoch, cfg);
      } else {
        adam_step(report.params.values(), lg.gradient, adam, report.optimizer_steps, epoch, cfg);
      }
    }
    report.epoch_losses.push_back(loss_sum / static_cast<double>(samples.size()));
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

TrainReport train(std::span<const Sample> samples, const TrainConfig& cfg, const AttentionConfig& attn,
                  std::uint64_t init_seed) {
  return train_from(samples, cfg, init_params(attn, init_seed));
}

TrainReport train(const DatasetManifest& m, const std::filesystem::path& base_dir, const TrainConfig& cfg,
                  const AttentionConfig& attn, std::uint64_t init_seed) {
  if (attn.task != m.task) {
    throw Error(ErrorCode::kInvalidConfig, "model task does not match manifest task");
  }
  const bool lowres = cfg.include_lowres;
  const auto samples = load_samples(m, base_dir, [lowres](const SampleRecord& r) {
    return is_training_split(r.split) && (lowres || r.resolution_tag != kLowResTag);
  });
  return train(samples, cfg, attn, init_seed);
}

DatasetManifest assign_folds(const DatasetManifest& m, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw Error(ErrorCode::kInvalidConfig, "k-fold split needs k >= 2, got " + std::to_string(k));
  std::vector<std::string> groups;
  std::map<std::string, std::size_t> group_of;
  for (const SampleRecord& r : m.records) {
    if (!is_training_split(r.split)) continue;
    const std::string key = source_key(r);
    if (group_of.emplace(key, groups.size()).second) groups.push_back(key);
  }
  if (groups.size() < k) {
    throw Error(ErrorCode::kInvalidConfig, "k-fold split needs at least k=" + std::to_string(k) +
                                               " samples, found " + std::to_string(groups.size()));
  }
  std::vector<std::size_t> order(groups.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, 0x666f6c64));
  rng.shuffle(order.begin(), order.end());

  const std::size_t base = groups.size() / k;
  const std::size_t extra = groups.size() % k;
  std::vector<std::size_t> fold_of_group(groups.size());
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t size = base + (f < extra ? 1 : 0);
    for (std::size_t t = 0; t < size; ++t) fold_of_group[order[pos++]] = f;
  }

  DatasetManifest out = m;
  for (SampleRecord& r : out.records) {
    if (!is_training_split(r.split)) continue;
    r.split = std::to_string(fold_of_group[group_of.at(source_key(r))]);
  }
  return out;
}

DatasetManifest fold_view(const DatasetManifest& assigned, std::size_t fold) {
  DatasetManifest out;
  out.task = assigned.task;
  for (const SampleRecord& r : assigned.records) {
    const auto f = fold_id(r.split);
    if (!f) {
      out.records.push_back(r);
      continue;
    }
    SampleRecord copy = r;
    if (*f == fold) {
      if (!r.augmentation_tag.empty() || r.resolution_tag == kLowResTag) continue;
      copy.split = "val";
    } else {
      copy.split = "train";
    }
    out.records.push_back(std::move(copy));
  }
  return out;
}

std::vector<DatasetManifest> kfold_split(const DatasetManifest& m, std::size_t k, std::uint64_t seed) {
  const DatasetManifest assigned = assign_folds(m, k, seed);
  std::vector<DatasetManifest> views;
  for (std::size_t f = 0; f < k; ++f) views.push_back(fold_view(assigned, f));
  return views;
}

Evaluation evaluate(const ModelParams& params, std::span<const Sample> samples) {
  Evaluation e;
  const bool classification = params.config().task == TaskKind::kClassification;
  e.metric = classification ? "auc" : "spearman";
  for (const Sample& s : samples) {
    const Prediction p = predict(forward(s.grid, params));
    e.scores.push_back(classification ? p.probability : p.score);
    e.targets.push_back(s.target);
    e.ids.push_back(s.id);
  }
  if (classification) {
    std::vector<int> labels(e.targets.size());
    std::transform(e.targets.begin(), e.targets.end(), labels.begin(), [](double t) { return static_cast<int>(t); });
    e.value = metrics::auc(e.scores, labels);
  } else {
    e.value = metrics::spearman(e.scores, e.targets);
  }
  return e;
}

CrossValidation cross_validate(const DatasetManifest& m, const std::filesystem::path& base_dir,
                               const TrainConfig& cfg, const AttentionConfig& attn) {
  if (attn.task != m.task) throw Error(ErrorCode::kInvalidConfig, "model task does not match manifest task");
  if (cfg.weight_inits < 1) throw Error(ErrorCode::kInvalidConfig, "at least one weight initialisation is required");
  const DatasetManifest assigned = assign_folds(m, cfg.folds, cfg.seed);
  CrossValidation cv;
  cv.metric = m.task == TaskKind::kClassification ? "auc" : "spearman";
  const bool lowres = cfg.include_lowres;
  for (std::size_t f = 0; f < cfg.folds; ++f) {
    const DatasetManifest view = fold_view(assigned, f);
    const auto train_set = load_samples(view, base_dir, [lowres](const SampleRecord& r) {
      return r.split == "train" && (lowres || r.resolution_tag != kLowResTag);
    });
    const auto val_set = load_samples(view, base_dir, [](const SampleRecord& r) { return r.split == "val"; });
    for (std::size_t i = 0; i < cfg.weight_inits; ++i) {
      TrainConfig run = cfg;
      run.seed = derive_seed(cfg.seed, 0x10000 + f * 0x100 + i);
      const TrainReport r = train(train_set, run, attn, derive_seed(cfg.seed, i));
      const Evaluation e = evaluate(r.params, val_set);
      cv.runs.push_back(FoldResult{f, i, e.value, r.epoch_losses.back()});
    }
  }
  double sum = 0.0;
  for (const auto& r : cv.runs) sum += r.metric;
  cv.mean = sum / static_cast<double>(cv.runs.size());
  if (cv.runs.size() > 1) {
    double sq = 0.0;
    for (const auto& r : cv.runs) sq += (r.metric - cv.mean) * (r.metric - cv.mean);
    cv.stddev = std::sqrt(sq / static_cast<double>(cv.runs.size() - 1));
  }
  return cv;
}

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string format_report(const TrainConfig& cfg, TaskKind task, const CrossValidation* cv,
                          const TrainReport* final_run) {
  std::ostringstream os;
  os << "seed\t" << cfg.seed << '\n';
  os << "task\t" << to_string(task) << '\n';
  os << "config\tepochs\t" << cfg.epochs << "\tbatch\t" << cfg.batch_size << "\tloss\t" << to_string(cfg.loss)
     << "\toptimizer\t" << to_string(cfg.optimizer) << "\tlr\t" << num(cfg.lr) << "\tdecay\t"
     << num(cfg.lr_decay_factor) << "\tdecay_epoch\t" << cfg.lr_decay_epoch << "\tweight_decay\t"
     << num(cfg.weight_decay) << '\n';
  if (cv) {
    os << "metric\t" << cv->metric << '\n';
    for (const FoldResult& r : cv->runs) {
      os << "fold\t" << r.fold << "\tinit\t" << r.init << "\tmetric\t" << num(r.metric) << "\tloss\t"
         << num(r.final_loss) << '\n';
    }
    os << "summary\tmean\t" << num(cv->mean) << "\tstd\t" << num(cv->stddev) << '\n';
  }
  if (final_run) {
    for (std::size_t e = 0; e < final_run->epoch_losses.size(); ++e) {
      os << "epoch\t" << e << "\tloss\t" << num(final_run->epoch_losses[e]) << '\n';
    }
  }
  return os.str();
}

void write_report(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

std::vector<FoldResult> parse_report_runs(std::string_view text) {
  std::vector<FoldResult> runs;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.rfind("fold\t", 0) != 0) continue;
    std::istringstream fields(line);
    std::string tag_fold, tag_init, tag_metric, tag_loss;
    FoldResult r;
    if (!(fields >> tag_fold >> r.fold >> tag_init >> r.init >> tag_metric >> r.metric >> tag_loss >> r.final_loss) ||
        tag_init != "init" || tag_metric != "metric" || tag_loss != "loss") {
      throw Error(ErrorCode::kParse, "report line " + std::to_string(line_no) + " is not a fold row");
    }
    runs.push_back(r);
  }
  return runs;
}

}  // namespace gridattn
