// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gridattn {

enum class TaskKind { kClassification, kRegression };

std::string_view to_string(TaskKind task);
TaskKind parse_task(std::string_view text);

/// The split field is "train", "val", "test", or a decimal fold id. Records
/// with a fold id belong to the training pool.
struct SampleRecord {
  std::string grid_path;
  double label = 0.0;  // class id (0/1) or regression score
  std::string split = "train";
  std::string resolution_tag = "2um";
  std::string augmentation_tag;

  bool operator==(const SampleRecord&) const = default;
};

inline constexpr std::string_view kLowResTag = "4um";

bool is_training_split(std::string_view split);
std::optional<std::size_t> fold_id(std::string_view split);

/// Records sharing a source key are copies of one slide (augmented or
/// re-extracted at low resolution) and must never be split across folds.
/// The key is grid_path without its extension and without a trailing
/// "_<resolution_tag>" suffix.
std::string source_key(const SampleRecord& r);

struct DatasetManifest {
  TaskKind task = TaskKind::kClassification;
  std::vector<SampleRecord> records;

  bool operator==(const DatasetManifest&) const = default;
};

/// Throws on duplicate (grid_path, augmentation_tag) pairs, class labels
/// outside {0, 1}, non-contiguous fold ids, or unknown split names.
void validate(const DatasetManifest& m);

// Text form: an optional "#task<TAB>classification|regression" line, then one
// record per line: grid_path, label, split, resolution_tag, augmentation_tag,
// tab-separated. Other '#' lines and blank lines are ignored. Without the task
// line the task is classification when every label is 0 or 1.
std::string format_manifest(const DatasetManifest& m);
DatasetManifest parse_manifest(std::string_view text);
void write_manifest(const DatasetManifest& m, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

/// Each training-pool record without an augmentation tag is followed by nine
/// copies tagged with the augmentation names. Other records are untouched.
/// Low-resolution records are expanded only when `augment_lowres` is set.
DatasetManifest expand_manifest(const DatasetManifest& m, bool augment_lowres = true);

}  // namespace gridattn
