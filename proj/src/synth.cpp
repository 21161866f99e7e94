// SPDX-License-Identifier: Apache-2.0
#include "gridattn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "gridattn/error.hpp"
#include "gridattn/metrics.hpp"

namespace gridattn::synth {

void validate(const SynthConfig& cfg) {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::kInvalidConfig, what); };
  if (cfg.depth < kSignalCoordinates) fail("synthetic grids need depth >= 4");
  if (cfg.min_size < 1 || cfg.max_size < cfg.min_size) fail("grid size range must satisfy 1 <= min <= max");
  if (cfg.signal_min < 1 || cfg.signal_max < cfg.signal_min) fail("signal cell range must satisfy 1 <= min <= max");
  if (cfg.signal_max > cfg.min_size * cfg.min_size) fail("signal cells exceed the smallest grid");
  if (!(cfg.mu >= 0.0) || !std::isfinite(cfg.mu)) fail("signal shift must be finite and non-negative");
  if (!(cfg.regression_max_fraction > 0.0 && cfg.regression_max_fraction <= 1.0)) {
    fail("regression signal fraction must lie in (0, 1]");
  }
}

SynthBag gen_bag(const SynthConfig& cfg, bool positive, Rng& rng) {
  validate(cfg);
  const auto rows = static_cast<std::size_t>(rng.uniform_int(cfg.min_size, cfg.max_size));
  const auto cols = static_cast<std::size_t>(rng.uniform_int(cfg.min_size, cfg.max_size));
  Tensor3f grid(rows, cols, cfg.depth);
  for (float& v : grid.values()) v = static_cast<float>(rng.normal());

  SynthBag bag;
  const std::size_t cells = rows * cols;
  std::size_t count = 0;
  if (positive) {
    if (cfg.task == TaskKind::kClassification) {
      count = static_cast<std::size_t>(rng.uniform_int(cfg.signal_min, cfg.signal_max));
    } else {
      const double u = 1.0 - rng.uniform();  // (0, 1]
      count = std::clamp<std::size_t>(
          static_cast<std::size_t>(std::llround(u * cfg.regression_max_fraction * static_cast<double>(cells))), 1,
          cells);
    }
  }
  // Partial Fisher-Yates picks `count` distinct cells.
  std::vector<std::size_t> order(cells);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t t = 0; t < count; ++t) {
    const auto pick = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(t), static_cast<std::int64_t>(cells - 1)));
    std::swap(order[t], order[pick]);
    const std::size_t i = order[t] / cols;
    const std::size_t j = order[t] % cols;
    bag.signal_mask.emplace_back(i, j);
    auto cell = grid.cell(i, j);
    for (std::size_t k = 0; k < kSignalCoordinates; ++k) {
      cell[k] = static_cast<float>(static_cast<double>(cell[k]) + cfg.mu);
    }
  }
  std::sort(bag.signal_mask.begin(), bag.signal_mask.end());
  if (cfg.task == TaskKind::kClassification) {
    bag.label = positive ? 1.0 : 0.0;
  } else {
    bag.label = static_cast<double>(count) / static_cast<double>(cells);
  }
  bag.grid = GridFeatureMap{std::move(grid), cfg.patch_size_px, 0.0f, {}};
  return bag;
}

SynthDataset gen_dataset(const SynthConfig& cfg, std::size_t n_train, std::size_t n_test) {
  validate(cfg);
  if (n_train < 2 || n_test < 2) throw Error(ErrorCode::kInvalidConfig, "synthetic splits need at least two bags");
  auto make = [&](std::uint64_t split, std::size_t n) {
    std::vector<SynthBag> bags;
    bags.reserve(n);
    for (std::size_t b = 0; b < n; ++b) {
      Rng rng(derive_seed(cfg.seed, (split << 32) | b));
      const bool positive = cfg.task == TaskKind::kRegression || b % 2 == 1;
      SynthBag bag = gen_bag(cfg, positive, rng);
      char name[32];
      std::snprintf(name, sizeof name, "bag_%05zu", b);
      bag.grid.source_id = name;
      bags.push_back(std::move(bag));
    }
    return bags;
  };
  return SynthDataset{make(0, n_train), make(1, n_test)};
}

void write_dataset(const SynthDataset& ds, TaskKind task, const std::filesystem::path& dir) {
  auto emit = [&](const std::vector<SynthBag>& bags, const std::string& split) {
    std::filesystem::create_directories(dir / split);
    DatasetManifest m;
    m.task = task;
    for (const SynthBag& bag : bags) {
      const std::string rel = split + "/" + bag.grid.source_id + ".gfm";
      write_gfm(bag.grid, dir / rel);
      m.records.push_back(SampleRecord{rel, bag.label, split, "2um", ""});
    }
    write_manifest(m, dir / (split + ".tsv"));
  };
  emit(ds.train, "train");
  emit(ds.test, "test");
}

std::vector<Sample> to_samples(const std::vector<SynthBag>& bags) {
  std::vector<Sample> out;
  out.reserve(bags.size());
  for (const SynthBag& bag : bags) out.push_back(Sample{to_tensor(bag.grid), bag.label, bag.grid.source_id});
  return out;
}

Cell argmax_random_tie(const Tensor3& map, Rng& rng) {
  const auto v = map.values();
  const std::size_t depth = map.depth();
  double best = v[0];
  std::vector<std::size_t> ties;
  for (std::size_t c = 0; c < map.shape().cells(); ++c) {
    const double x = v[c * depth];
    if (x > best) {
      best = x;
      ties.clear();
    }
    if (x == best) ties.push_back(c);
  }
  const std::size_t pick = ties[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(ties.size()) - 1))];
  return {pick / map.cols(), pick % map.cols()};
}

double hit_rate(const std::vector<Tensor3>& maps, const std::vector<SynthBag>& bags, std::uint64_t seed) {
  if (bags.empty()) throw Error(ErrorCode::kInvalidConfig, "hit rate needs at least one bag");
  if (maps.size() != bags.size()) throw Error(ErrorCode::kDimensionMismatch, "one map per bag is required");
  Rng rng(derive_seed(seed, 0x686974));
  std::size_t hits = 0;
  for (std::size_t b = 0; b < bags.size(); ++b) {
    const Cell c = argmax_random_tie(maps[b], rng);
    const auto& mask = bags[b].signal_mask;
    if (std::find(mask.begin(), mask.end(), c) != mask.end()) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(bags.size());
}

double localization_hit_rate(const ModelParams& params, const std::vector<SynthBag>& bags, std::uint64_t seed) {
  if (bags.empty()) throw Error(ErrorCode::kInvalidConfig, "hit rate needs at least one positive bag");
  const auto& modes = params.config().modes;
  const auto it = std::find(modes.begin(), modes.end(), PoolMode::kMax);
  if (it == modes.end()) throw Error(ErrorCode::kInvalidConfig, "localization needs a max-pooling attention mode");
  const auto m = static_cast<std::size_t>(it - modes.begin());
  std::vector<Tensor3> maps;
  for (const SynthBag& bag : bags) {
    const ForwardTrace t = forward(bag.grid, params);
    const Tensor3& att = t.attention[m];
    Tensor3 summed(att.rows(), att.cols(), 1);
    for (std::size_t i = 0; i < att.rows(); ++i)
      for (std::size_t j = 0; j < att.cols(); ++j)
        for (std::size_t h = 0; h < att.depth(); ++h) summed(i, j) += att(i, j, h);
    maps.push_back(std::move(summed));
  }
  return hit_rate(maps, bags, seed);
}

namespace {

std::vector<double> mean_features(const SynthBag& bag) {
  const auto& g = bag.grid.grid;
  std::vector<double> mean(g.depth(), 0.0);
  for (std::size_t c = 0; c < g.shape().cells(); ++c)
    for (std::size_t k = 0; k < g.depth(); ++k) mean[k] += g.values()[c * g.depth() + k];
  for (double& m : mean) m /= static_cast<double>(g.shape().cells());
  return mean;
}

}  // namespace

double mean_feature_logistic_auc(const std::vector<SynthBag>& train, const std::vector<SynthBag>& test) {
  if (train.empty() || test.empty()) throw Error(ErrorCode::kInvalidConfig, "baseline needs train and test bags");
  const std::size_t depth = train.front().grid.depth();
  std::vector<std::vector<double>> x;
  for (const auto& b : train) x.push_back(mean_features(b));
  std::vector<double> w(depth, 0.0);
  double bias = 0.0;
  const double lr = 0.5;
  for (int it = 0; it < 5000; ++it) {
    std::vector<double> gw(depth, 0.0);
    double gb = 0.0;
    for (std::size_t i = 0; i < train.size(); ++i) {
      double z = bias;
      for (std::size_t k = 0; k < depth; ++k) z += w[k] * x[i][k];
      const double err = 1.0 / (1.0 + std::exp(-z)) - train[i].label;
      for (std::size_t k = 0; k < depth; ++k) gw[k] += err * x[i][k];
      gb += err;
    }
    const double scale = lr / static_cast<double>(train.size());
    for (std::size_t k = 0; k < depth; ++k) w[k] -= scale * gw[k];
    bias -= scale * gb;
  }
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& b : test) {
    const auto f = mean_features(b);
    double z = bias;
    for (std::size_t k = 0; k < depth; ++k) z += w[k] * f[k];
    scores.push_back(z);
    labels.push_back(static_cast<int>(b.label));
  }
  return metrics::auc(scores, labels);
}

}  // namespace gridattn::synth
