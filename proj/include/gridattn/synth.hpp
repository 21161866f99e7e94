// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "gridattn/grid.hpp"
#include "gridattn/manifest.hpp"
#include "gridattn/model.hpp"
#include "gridattn/rng.hpp"
#include "gridattn/train.hpp"

namespace gridattn::synth {

inline constexpr std::size_t kSignalCoordinates = 4;

struct SynthConfig {
  std::size_t depth = 16;
  std::size_t min_size = 4;   // per axis
  std::size_t max_size = 12;  // per axis
  std::size_t signal_min = 1;
  std::size_t signal_max = 3;
  double mu = 2.0;  // added to the first four coordinates of signal cells
  TaskKind task = TaskKind::kClassification;
  /// Regression bags draw their signal fraction uniformly from
  /// (0, regression_max_fraction].
  double regression_max_fraction = 0.5;
  std::uint32_t patch_size_px = 8;
  std::uint64_t seed = 0;
};

/// Throws kInvalidConfig for empty size ranges, depth < 4, or negative mu.
/// mu = 0 is accepted as the no-signal control.
void validate(const SynthConfig& cfg);

using Cell = std::pair<std::size_t, std::size_t>;

struct SynthBag {
  GridFeatureMap grid;
  double label = 0.0;  // class id, or signal fraction for regression
  std::vector<Cell> signal_mask;
};

/// Unit Gaussian grid of random size. Positive classification bags get
/// signal_min..signal_max distinct signal cells; positive regression bags get
/// round(u * regression_max_fraction * cells) (at least one) for u ~ U(0, 1].
SynthBag gen_bag(const SynthConfig& cfg, bool positive, Rng& rng);

struct SynthDataset {
  std::vector<SynthBag> train;
  std::vector<SynthBag> test;
};

/// Classification sets alternate negative/positive bags (n/2 positives);
/// regression sets are all positive so scores spread over the fraction
/// range. Bag b of split s uses the stream derive_seed(seed, s << 32 | b).
SynthDataset gen_dataset(const SynthConfig& cfg, std::size_t n_train, std::size_t n_test);

/// Writes train/bag_NNNNN.gfm, test/bag_NNNNN.gfm and the manifests
/// train.tsv and test.tsv under `dir`.
void write_dataset(const SynthDataset& ds, TaskKind task, const std::filesystem::path& dir);

std::vector<Sample> to_samples(const std::vector<SynthBag>& bags);

/// argmax of a single-channel map with exact ties broken uniformly at random.
Cell argmax_random_tie(const Tensor3& map, Rng& rng);

/// Fraction of bags whose argmax cell (of `maps[b]`) lies in the signal mask.
double hit_rate(const std::vector<Tensor3>& maps, const std::vector<SynthBag>& bags, std::uint64_t seed);

/// hit_rate over the channel-summed max-mode attention maps of the model.
double localization_hit_rate(const ModelParams& params, const std::vector<SynthBag>& bags, std::uint64_t seed = 0);

/// Logistic regression on the spatial mean of each grid, trained by full-batch
/// gradient descent; returns the test AUC. A reference point for the attention
/// model.
double mean_feature_logistic_auc(const std::vector<SynthBag>& train, const std::vector<SynthBag>& test);

}  // namespace gridattn::synth
