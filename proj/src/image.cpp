// SPDX-License-Identifier: Apache-2.0
#include "gridattn/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>
#include <string>
#include <thread>

#include "gridattn/error.hpp"
#include "gridattn/rng.hpp"

namespace gridattn {

namespace {

[[noreturn]] void ppm_error(const std::string& what) { throw Error(ErrorCode::kFormat, "PPM: " + what); }

// Reads one header token, skipping whitespace and '#' comments.
std::string ppm_token(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    const char c = static_cast<char>(bytes[pos]);
    if (c == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      ++pos;
    } else {
      break;
    }
  }
  std::string token;
  while (pos < bytes.size() && !std::isspace(bytes[pos]) && bytes[pos] != '#') token.push_back(static_cast<char>(bytes[pos++]));
  if (token.empty()) ppm_error("truncated header");
  return token;
}

std::size_t ppm_number(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  const std::string tok = ppm_token(bytes, pos);
  char* end = nullptr;
  const unsigned long long v = std::strtoull(tok.c_str(), &end, 10);
  if (*end != '\0' || tok.front() == '-') ppm_error("bad header number '" + tok + "'");
  return static_cast<std::size_t>(v);
}

}  // namespace

RgbImage decode_ppm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  if (ppm_token(bytes, pos) != "P6") ppm_error("only binary P6 images are supported");
  const std::size_t width = ppm_number(bytes, pos);
  const std::size_t height = ppm_number(bytes, pos);
  const std::size_t maxval = ppm_number(bytes, pos);
  if (width == 0 || height == 0) ppm_error("zero image dimension");
  if (maxval != 255) ppm_error("maxval must be 255");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) ppm_error("missing separator before raster");
  ++pos;
  if (width > std::numeric_limits<std::size_t>::max() / 3 / height) ppm_error("dimensions overflow");
  RgbImage img;
  img.height = height;
  img.width = width;
  const std::size_t need = 3 * width * height;
  if (bytes.size() - pos < need) ppm_error("truncated raster");
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                    bytes.begin() + static_cast<std::ptrdiff_t>(pos + need));
  return img;
}

std::vector<std::uint8_t> encode_ppm(const RgbImage& img) {
  const std::string header = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

RgbImage read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_ppm(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void write_ppm(const RgbImage& img, const std::filesystem::path& path) {
  const auto bytes = encode_ppm(img);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

Rect tissue_bbox(const RgbImage& img, int white_threshold) {
  std::size_t r0 = img.height, r1 = 0, c0 = img.width, c1 = 0;
  bool found = false;
  // mean < t  <=>  r + g + b < 3t, kept in integers.
  const int limit = 3 * white_threshold;
  for (std::size_t r = 0; r < img.height; ++r) {
    for (std::size_t c = 0; c < img.width; ++c) {
      const std::uint8_t* p = img.at(r, c);
      if (p[0] + p[1] + p[2] < limit) {
        found = true;
        r0 = std::min(r0, r);
        r1 = std::max(r1, r);
        c0 = std::min(c0, c);
        c1 = std::max(c1, c);
      }
    }
  }
  if (!found) {
    throw Error(ErrorCode::kNoTissue, "no pixel has channel mean below " + std::to_string(white_threshold));
  }
  return Rect{r0, c0, r1 - r0 + 1, c1 - c0 + 1};
}

RgbImage crop(const RgbImage& img, const Rect& r) {
  if (r.row + r.height > img.height || r.col + r.width > img.width || r.height == 0 || r.width == 0) {
    throw Error(ErrorCode::kOutOfRange, "crop rectangle outside image");
  }
  RgbImage out(r.height, r.width);
  for (std::size_t i = 0; i < r.height; ++i) {
    std::copy_n(img.at(r.row + i, r.col), 3 * r.width, out.at(i, 0));
  }
  return out;
}

RgbImage transform_image(const RgbImage& img, Transform t) {
  const std::size_t h = img.height;
  const std::size_t w = img.width;
  const bool swap = t == Transform::kRot90 || t == Transform::kRot270;
  if (!is_rigid(t)) throw Error(ErrorCode::kInvalidConfig, "image translations are not supported");
  RgbImage out(swap ? w : h, swap ? h : w);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      std::size_t tr = r, tc = c;
      switch (t) {
        case Transform::kHFlip: tc = w - 1 - c; break;
        case Transform::kVFlip: tr = h - 1 - r; break;
        case Transform::kRot90: tr = c; tc = h - 1 - r; break;
        case Transform::kRot180: tr = h - 1 - r; tc = w - 1 - c; break;
        case Transform::kRot270: tr = w - 1 - c; tc = r; break;
        default: break;
      }
      std::copy_n(img.at(r, c), 3, out.at(tr, tc));
    }
  }
  return out;
}

RgbImage downscale2x(const RgbImage& img) {
  const std::size_t h = img.height / 2;
  const std::size_t w = img.width / 2;
  if (h == 0 || w == 0) throw Error(ErrorCode::kTooSmall, "image too small to downscale");
  RgbImage out(h, w);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const unsigned sum = img.at(2 * r, 2 * c)[ch] + img.at(2 * r, 2 * c + 1)[ch] + img.at(2 * r + 1, 2 * c)[ch] +
                             img.at(2 * r + 1, 2 * c + 1)[ch];
        out.at(r, c)[ch] = static_cast<std::uint8_t>((sum + 2) / 4);
      }
    }
  }
  return out;
}

Tiling tile(const RgbImage& img, std::size_t patch_size) {
  if (patch_size == 0) throw Error(ErrorCode::kInvalidConfig, "patch size must be positive");
  if (img.height < patch_size || img.width < patch_size) {
    throw Error(ErrorCode::kTooSmall, std::to_string(img.height) + "x" + std::to_string(img.width) +
                                          " image is smaller than one " + std::to_string(patch_size) + "px patch");
  }
  Tiling t;
  t.rows = img.height / patch_size;
  t.cols = img.width / patch_size;
  t.patches.reserve(t.rows * t.cols);
  for (std::size_t i = 0; i < t.rows; ++i) {
    for (std::size_t j = 0; j < t.cols; ++j) {
      Patch p{i, j, patch_size, std::vector<std::uint8_t>(3 * patch_size * patch_size)};
      for (std::size_t r = 0; r < patch_size; ++r) {
        std::copy_n(img.at(i * patch_size + r, j * patch_size), 3 * patch_size, &p.pixels[3 * r * patch_size]);
      }
      t.patches.push_back(std::move(p));
    }
  }
  return t;
}

ToyExtractor::ToyExtractor(std::size_t depth, std::uint64_t seed) : depth_(depth) {
  if (depth < 4) throw Error(ErrorCode::kInvalidConfig, "toy features need depth >= 4");
  const std::size_t projected = depth > kMomentCount ? depth - kMomentCount : 0;
  const std::size_t bins = 3 * kHistogramBins;
  projection_.resize(projected * bins);
  Rng rng(derive_seed(seed, 0x746f79));
  const double scale = 1.0 / std::sqrt(static_cast<double>(bins));
  for (double& w : projection_) w = rng.normal() * scale;
}

std::vector<float> ToyExtractor::operator()(const Patch& patch) const {
  if (patch.size > 2048) throw Error(ErrorCode::kInvalidConfig, "toy features support patches up to 2048px");
  const std::size_t n = patch.size * patch.size;
  std::uint64_t sum[3] = {0, 0, 0};
  std::uint64_t sum_sq[3] = {0, 0, 0};
  std::uint64_t hist[3][kHistogramBins] = {};
  for (std::size_t px = 0; px < n; ++px) {
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const std::uint64_t v = patch.pixels[3 * px + ch];
      sum[ch] += v;
      sum_sq[ch] += v * v;
      ++hist[ch][v >> 5];
    }
  }
  std::vector<double> moments(kMomentCount);
  const double count = static_cast<double>(n);
  for (std::size_t ch = 0; ch < 3; ++ch) {
    moments[ch] = static_cast<double>(sum[ch]) / (255.0 * count);
    // n * sum(x^2) - (sum x)^2 is exact in 64-bit integers for p <= 2048.
    const std::uint64_t spread = n * sum_sq[ch] - sum[ch] * sum[ch];
    moments[3 + ch] = static_cast<double>(spread) / (count * count * 255.0 * 255.0);
  }
  std::vector<float> out(depth_);
  for (std::size_t i = 0; i < std::min(depth_, kMomentCount); ++i) out[i] = static_cast<float>(moments[i]);
  const std::size_t bins = 3 * kHistogramBins;
  for (std::size_t j = kMomentCount; j < depth_; ++j) {
    const double* row = &projection_[(j - kMomentCount) * bins];
    double acc = 0.0;
    for (std::size_t b = 0; b < bins; ++b) {
      acc += row[b] * (static_cast<double>(hist[b / kHistogramBins][b % kHistogramBins]) / count);
    }
    out[j] = static_cast<float>(acc);
  }
  return out;
}

std::vector<float> toy_features(const Patch& patch, std::size_t depth, std::uint64_t seed) {
  return ToyExtractor(depth, seed)(patch);
}

GridFeatureMap extract_grid(const RgbImage& img, const ExtractOptions& options) {
  const RgbImage tissue = crop(img, tissue_bbox(img, options.white_threshold));
  Tiling tiles = tile(tissue, options.patch_size);
  const ToyExtractor extractor(options.depth, options.seed);

  std::vector<PatchFeature> features(tiles.patches.size());
  const unsigned workers = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(features.size())));
  auto work = [&](unsigned w) {
    for (std::size_t idx = w; idx < tiles.patches.size(); idx += workers) {
      const Patch& p = tiles.patches[idx];
      features[idx] = PatchFeature{p.row, p.col, extractor(p)};
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work, w);
  }
  return pack_grid(features, tiles.rows, tiles.cols,
                   GridMeta{static_cast<std::uint32_t>(options.patch_size), options.microns_per_pixel, options.source_id});
}

GridFeatureMap parse_feature_table(std::string_view text, std::size_t rows, std::size_t cols, const GridMeta& meta) {
  std::vector<PatchFeature> features;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string line(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (features.empty() && line.rfind("i,", 0) == 0) continue;

    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() < 3) {
      throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) + ": expected i, j and at least one feature");
    }
    auto number = [&](const std::string& f, std::size_t column) {
      const char* begin = f.c_str();
      while (*begin == ' ') ++begin;
      char* stop = nullptr;
      const double v = std::strtod(begin, &stop);
      while (stop && *stop == ' ') ++stop;
      if (*begin == '\0' || *stop != '\0') {
        throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) + ", column " + std::to_string(column + 1) +
                                           ": '" + f + "' is not a number");
      }
      return v;
    };
    const double i = number(fields[0], 0);
    const double j = number(fields[1], 1);
    if (i < 0 || j < 0 || i != std::floor(i) || j != std::floor(j)) {
      throw Error(ErrorCode::kParse, "line " + std::to_string(line_no) + ": cell coordinates must be non-negative integers");
    }
    PatchFeature f{static_cast<std::size_t>(i), static_cast<std::size_t>(j), {}};
    for (std::size_t c = 2; c < fields.size(); ++c) f.values.push_back(static_cast<float>(number(fields[c], c)));
    features.push_back(std::move(f));
  }
  return pack_grid(features, rows, cols, meta);
}

GridFeatureMap import_features(const std::filesystem::path& csv_path, std::size_t rows, std::size_t cols,
                               const GridMeta& meta) {
  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + csv_path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  GridMeta m = meta;
  if (m.source_id.empty()) m.source_id = csv_path.stem().string();
  return parse_feature_table(ss.str(), rows, cols, m);
}

}  // namespace gridattn
