// SPDX-License-Identifier: Apache-2.0
#include "gridattn/manifest.hpp"

#include <charconv>
#include <cstdlib>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "gridattn/error.hpp"
#include "gridattn/grid.hpp"

namespace gridattn {

std::string_view to_string(TaskKind task) {
  return task == TaskKind::kClassification ? "classification" : "regression";
}

TaskKind parse_task(std::string_view text) {
  if (text == "classification") return TaskKind::kClassification;
  if (text == "regression") return TaskKind::kRegression;
  throw Error(ErrorCode::kInvalidConfig, "unknown task '" + std::string(text) + "'");
}

std::optional<std::size_t> fold_id(std::string_view split) {
  if (split.empty()) return std::nullopt;
  std::size_t value = 0;
  const auto [ptr, ec] = std::from_chars(split.data(), split.data() + split.size(), value);
  if (ec != std::errc{} || ptr != split.data() + split.size()) return std::nullopt;
  return value;
}

bool is_training_split(std::string_view split) { return split == "train" || fold_id(split).has_value(); }

std::string source_key(const SampleRecord& r) {
  std::filesystem::path p(r.grid_path);
  std::string stem = (p.parent_path() / p.stem()).generic_string();
  const std::string suffix = "_" + r.resolution_tag;
  if (!r.resolution_tag.empty() && stem.size() > suffix.size() &&
      stem.compare(stem.size() - suffix.size(), suffix.size(), suffix) == 0) {
    stem.resize(stem.size() - suffix.size());
  }
  return stem;
}

void validate(const DatasetManifest& m) {
  std::set<std::pair<std::string, std::string>> seen;
  std::set<std::size_t> folds;
  for (const SampleRecord& r : m.records) {
    if (!seen.emplace(r.grid_path, r.augmentation_tag).second) {
      throw Error(ErrorCode::kFormat, "duplicate record " + r.grid_path + " [" + r.augmentation_tag + "]");
    }
    if (!std::isfinite(r.label)) throw Error(ErrorCode::kFormat, "non-finite label for " + r.grid_path);
    if (m.task == TaskKind::kClassification && r.label != 0.0 && r.label != 1.0) {
      throw Error(ErrorCode::kFormat, "classification label must be 0 or 1 for " + r.grid_path);
    }
    if (auto f = fold_id(r.split)) {
      folds.insert(*f);
    } else if (r.split != "train" && r.split != "val" && r.split != "test") {
      throw Error(ErrorCode::kFormat, "unknown split '" + r.split + "' for " + r.grid_path);
    }
    parse_transform(r.augmentation_tag);
  }
  if (!folds.empty() && (*folds.begin() != 0 || *folds.rbegin() != folds.size() - 1)) {
    throw Error(ErrorCode::kFormat, "fold ids must form a contiguous range starting at 0");
  }
}

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return fields;
}

std::string format_label(double label) {
  std::ostringstream os;
  os.precision(17);
  os << label;
  return os.str();
}

}  // namespace

std::string format_manifest(const DatasetManifest& m) {
  std::ostringstream os;
  os << "#task\t" << to_string(m.task) << '\n';
  for (const SampleRecord& r : m.records) {
    os << r.grid_path << '\t' << format_label(r.label) << '\t' << r.split << '\t' << r.resolution_tag << '\t'
       << r.augmentation_tag << '\n';
  }
  return os.str();
}

DatasetManifest parse_manifest(std::string_view text) {
  DatasetManifest m;
  std::optional<TaskKind> task;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (line.front() == '#') {
      const auto fields = split_tabs(line);
      if (fields.size() == 2 && fields[0] == "#task") task = parse_task(fields[1]);
      continue;
    }
    const auto fields = split_tabs(line);
    if (fields.size() < 2 || fields.size() > 5) {
      throw Error(ErrorCode::kParse, "manifest line " + std::to_string(line_no) + ": expected 2-5 tab-separated fields");
    }
    SampleRecord r;
    r.grid_path = std::string(fields[0]);
    const std::string label(fields[1]);
    char* stop = nullptr;
    r.label = std::strtod(label.c_str(), &stop);
    if (label.empty() || *stop != '\0') {
      throw Error(ErrorCode::kParse, "manifest line " + std::to_string(line_no) + ": bad label '" + label + "'");
    }
    if (fields.size() > 2) r.split = std::string(fields[2]);
    if (fields.size() > 3) r.resolution_tag = std::string(fields[3]);
    if (fields.size() > 4) r.augmentation_tag = std::string(fields[4]);
    m.records.push_back(std::move(r));
  }
  if (task) {
    m.task = *task;
  } else {
    bool binary = true;
    for (const auto& r : m.records) binary = binary && (r.label == 0.0 || r.label == 1.0);
    m.task = binary ? TaskKind::kClassification : TaskKind::kRegression;
  }
  validate(m);
  return m;
}

void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out << format_manifest(m);
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_manifest(ss.str());
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

DatasetManifest expand_manifest(const DatasetManifest& m, bool augment_lowres) {
  DatasetManifest out;
  out.task = m.task;
  for (const SampleRecord& r : m.records) {
    out.records.push_back(r);
    const bool expand = is_training_split(r.split) && r.augmentation_tag.empty() &&
                        (augment_lowres || r.resolution_tag != kLowResTag);
    if (!expand) continue;
    for (Transform t : kAugmentations) {
      SampleRecord copy = r;
      copy.augmentation_tag = std::string(to_string(t));
      out.records.push_back(std::move(copy));
    }
  }
  return out;
}

}  // namespace gridattn
