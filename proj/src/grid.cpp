// SPDX-License-Identifier: Apache-2.0
#include "gridattn/grid.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>

#include "gridattn/error.hpp"

namespace gridattn {

GridFeatureMap pack_grid(std::span<const PatchFeature> features, std::size_t rows, std::size_t cols,
                         const GridMeta& meta) {
  if (rows == 0 || cols == 0) throw Error(ErrorCode::kDimensionMismatch, "grid dimensions must be positive");
  if (features.empty()) throw Error(ErrorCode::kIncompleteGrid, "no patch features supplied");
  const std::size_t depth = features.front().values.size();
  if (depth == 0) throw Error(ErrorCode::kDimensionMismatch, "feature vectors must be non-empty");

  Tensor3f grid(rows, cols, depth);
  std::vector<bool> seen(rows * cols, false);
  for (const PatchFeature& f : features) {
    const std::string where = "(" + std::to_string(f.row) + "," + std::to_string(f.col) + ")";
    if (f.row >= rows || f.col >= cols) {
      throw Error(ErrorCode::kOutOfRange, "cell " + where + " outside " + std::to_string(rows) + "x" +
                                              std::to_string(cols) + " grid");
    }
    if (f.values.size() != depth) {
      throw Error(ErrorCode::kDimensionMismatch, "cell " + where + " has " + std::to_string(f.values.size()) +
                                                     " features, expected " + std::to_string(depth));
    }
    const std::size_t idx = f.row * cols + f.col;
    if (seen[idx]) throw Error(ErrorCode::kDuplicateCell, "cell " + where + " supplied twice");
    seen[idx] = true;
    std::copy(f.values.begin(), f.values.end(), grid.cell(f.row, f.col).begin());
  }
  for (std::size_t idx = 0; idx < seen.size(); ++idx) {
    if (!seen[idx]) {
      throw Error(ErrorCode::kIncompleteGrid, "cell (" + std::to_string(idx / cols) + "," +
                                                  std::to_string(idx % cols) + ") missing");
    }
  }
  for (float v : grid.values()) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kNonFinite, "feature values must be finite");
  }
  return GridFeatureMap{std::move(grid), meta.patch_size_px, meta.microns_per_pixel, meta.source_id};
}

namespace {

constexpr char kGfmMagic[4] = {'G', 'F', 'M', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(bytes[offset + b]) << (8 * b);
  return v;
}

[[noreturn]] void format_error(std::size_t offset, const std::string& what) {
  throw Error(ErrorCode::kFormat, "at byte " + std::to_string(offset) + ": " + what);
}

}  // namespace

std::vector<std::uint8_t> encode_gfm(const GridFeatureMap& g) {
  std::vector<std::uint8_t> out;
  out.reserve(kGfmHeaderBytes + 4 * g.grid.size());
  out.insert(out.end(), std::begin(kGfmMagic), std::end(kGfmMagic));
  put_u32(out, static_cast<std::uint32_t>(g.rows()));
  put_u32(out, static_cast<std::uint32_t>(g.cols()));
  put_u32(out, static_cast<std::uint32_t>(g.depth()));
  put_u32(out, g.patch_size_px);
  put_u32(out, 0);
  put_u32(out, std::bit_cast<std::uint32_t>(g.microns_per_pixel));
  for (float v : g.grid.values()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

GridFeatureMap decode_gfm(std::span<const std::uint8_t> bytes, std::string source_id) {
  if (bytes.size() < 4) format_error(bytes.size(), "file shorter than the magic");
  if (!std::equal(std::begin(kGfmMagic), std::end(kGfmMagic), bytes.begin())) {
    format_error(0, "bad magic, expected GFM1");
  }
  if (bytes.size() < kGfmHeaderBytes) format_error(bytes.size(), "truncated header");
  const std::uint32_t rows = get_u32(bytes, 4);
  const std::uint32_t cols = get_u32(bytes, 8);
  const std::uint32_t depth = get_u32(bytes, 12);
  const std::uint32_t patch = get_u32(bytes, 16);
  const std::uint32_t reserved = get_u32(bytes, 20);
  const float mpp = std::bit_cast<float>(get_u32(bytes, 24));
  if (rows == 0 || cols == 0 || depth == 0) format_error(4, "zero grid dimension");
  if (reserved != 0) format_error(20, "reserved field must be zero");

  // 32-bit factors cannot overflow 128 bits; check the 64-bit product stepwise.
  const std::uint64_t cells = static_cast<std::uint64_t>(rows) * cols;
  if (cells > UINT64_MAX / depth || cells * depth > (UINT64_MAX - kGfmHeaderBytes) / 4 ||
      cells * depth > static_cast<std::uint64_t>(SIZE_MAX / 8)) {
    format_error(4, "declared dimensions overflow");
  }
  const std::uint64_t count = cells * depth;
  const std::uint64_t expected = kGfmHeaderBytes + 4 * count;
  if (bytes.size() < expected) {
    format_error(bytes.size(), "truncated payload: declared " + std::to_string(count) + " values, found " +
                                   std::to_string((bytes.size() - kGfmHeaderBytes) / 4));
  }
  if (bytes.size() > expected) format_error(expected, "trailing bytes after payload");

  std::vector<float> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    values[i] = std::bit_cast<float>(get_u32(bytes, kGfmHeaderBytes + 4 * i));
    if (!std::isfinite(values[i])) format_error(kGfmHeaderBytes + 4 * i, "non-finite feature value");
  }
  return GridFeatureMap{Tensor3f(Shape{rows, cols, depth}, std::move(values)), patch, mpp, std::move(source_id)};
}

void write_gfm(const GridFeatureMap& g, const std::filesystem::path& path) {
  const auto bytes = encode_gfm(g);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

GridFeatureMap read_gfm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_gfm(bytes, path.stem().string());
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

std::string_view to_string(Transform t) {
  switch (t) {
    case Transform::kIdentity: return "";
    case Transform::kHFlip: return "hflip";
    case Transform::kVFlip: return "vflip";
    case Transform::kRot90: return "rot90";
    case Transform::kRot180: return "rot180";
    case Transform::kRot270: return "rot270";
    case Transform::kShiftH1: return "shiftH+1";
    case Transform::kShiftH2: return "shiftH+2";
    case Transform::kShiftV1: return "shiftV+1";
    case Transform::kShiftV2: return "shiftV+2";
  }
  return "";
}

Transform parse_transform(std::string_view text) {
  if (text.empty() || text == "none") return Transform::kIdentity;
  for (Transform t : kAugmentations) {
    if (to_string(t) == text) return t;
  }
  throw Error(ErrorCode::kParse, "unknown augmentation '" + std::string(text) + "'");
}

bool is_rigid(Transform t) {
  switch (t) {
    case Transform::kShiftH1:
    case Transform::kShiftH2:
    case Transform::kShiftV1:
    case Transform::kShiftV2:
      return false;
    default:
      return true;
  }
}

Transform inverse(Transform t) {
  switch (t) {
    case Transform::kRot90: return Transform::kRot270;
    case Transform::kRot270: return Transform::kRot90;
    case Transform::kIdentity:
    case Transform::kHFlip:
    case Transform::kVFlip:
    case Transform::kRot180:
      return t;
    default:
      throw Error(ErrorCode::kInvalidConfig, "translations have no exact inverse");
  }
}

template <class T>
BasicTensor3<T> shift_cells(const BasicTensor3<T>& x, std::ptrdiff_t drow, std::ptrdiff_t dcol) {
  const auto rows = static_cast<std::ptrdiff_t>(x.rows());
  const auto cols = static_cast<std::ptrdiff_t>(x.cols());
  if (std::abs(drow) >= rows && drow != 0) {
    throw Error(ErrorCode::kDegenerateShift, "vertical shift " + std::to_string(drow) + " >= grid height " +
                                                 std::to_string(rows));
  }
  if (std::abs(dcol) >= cols && dcol != 0) {
    throw Error(ErrorCode::kDegenerateShift, "horizontal shift " + std::to_string(dcol) + " >= grid width " +
                                                 std::to_string(cols));
  }
  BasicTensor3<T> out(x.shape(), T{});
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    for (std::ptrdiff_t j = 0; j < cols; ++j) {
      const std::ptrdiff_t ti = i + drow;
      const std::ptrdiff_t tj = j + dcol;
      if (ti < 0 || ti >= rows || tj < 0 || tj >= cols) continue;
      const auto src = x.cell(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
      std::copy(src.begin(), src.end(), out.cell(static_cast<std::size_t>(ti), static_cast<std::size_t>(tj)).begin());
    }
  }
  return out;
}

template <class T>
BasicTensor3<T> apply_transform(const BasicTensor3<T>& x, Transform t) {
  const std::size_t rows = x.rows();
  const std::size_t cols = x.cols();
  auto permute = [&](std::size_t out_rows, std::size_t out_cols, auto target) {
    BasicTensor3<T> out(out_rows, out_cols, x.depth());
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) {
        const auto [ti, tj] = target(i, j);
        const auto src = x.cell(i, j);
        std::copy(src.begin(), src.end(), out.cell(ti, tj).begin());
      }
    }
    return out;
  };
  using Cell = std::pair<std::size_t, std::size_t>;
  switch (t) {
    case Transform::kIdentity: return x;
    case Transform::kHFlip:
      return permute(rows, cols, [&](std::size_t i, std::size_t j) { return Cell{i, cols - 1 - j}; });
    case Transform::kVFlip:
      return permute(rows, cols, [&](std::size_t i, std::size_t j) { return Cell{rows - 1 - i, j}; });
    case Transform::kRot90:
      return permute(cols, rows, [&](std::size_t i, std::size_t j) { return Cell{j, rows - 1 - i}; });
    case Transform::kRot180:
      return permute(rows, cols, [&](std::size_t i, std::size_t j) { return Cell{rows - 1 - i, cols - 1 - j}; });
    case Transform::kRot270:
      return permute(cols, rows, [&](std::size_t i, std::size_t j) { return Cell{cols - 1 - j, i}; });
    case Transform::kShiftH1: return shift_cells(x, 0, 1);
    case Transform::kShiftH2: return shift_cells(x, 0, 2);
    case Transform::kShiftV1: return shift_cells(x, 1, 0);
    case Transform::kShiftV2: return shift_cells(x, 2, 0);
  }
  return x;
}

template BasicTensor3<float> shift_cells(const BasicTensor3<float>&, std::ptrdiff_t, std::ptrdiff_t);
template BasicTensor3<double> shift_cells(const BasicTensor3<double>&, std::ptrdiff_t, std::ptrdiff_t);
template BasicTensor3<float> apply_transform(const BasicTensor3<float>&, Transform);
template BasicTensor3<double> apply_transform(const BasicTensor3<double>&, Transform);

GridFeatureMap augment_grid(const GridFeatureMap& g, Transform t) {
  GridFeatureMap out = g;
  out.grid = apply_transform(g.grid, t);
  return out;
}

}  // namespace gridattn
