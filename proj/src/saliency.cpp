// SPDX-License-Identifier: Apache-2.0
#include "gridattn/saliency.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iterator>

#include "gridattn/error.hpp"
#include "gridattn/image.hpp"
#include "gridattn/simd/kernels.hpp"

namespace gridattn {

HeatMap normalize(HeatMap map) {
  if (map.values.empty()) return map;
  const auto [lo, hi] = std::minmax_element(map.values.begin(), map.values.end());
  const double low = *lo;
  const double range = *hi - *lo;
  for (double& v : map.values) v = range > 0.0 ? (v - low) / range : 0.0;
  return map;
}

HeatMap upscale(const HeatMap& map, std::size_t factor) {
  if (factor == 0) throw Error(ErrorCode::kInvalidConfig, "upscale factor must be positive");
  HeatMap out{map.rows * factor, map.cols * factor, {}};
  out.values.resize(out.rows * out.cols);
  for (std::size_t r = 0; r < out.rows; ++r) {
    for (std::size_t c = 0; c < out.cols; ++c) out.values[r * out.cols + c] = map.at(r / factor, c / factor);
  }
  return out;
}

HeatMap export_attention(const ForwardTrace& trace, PoolMode mode, std::size_t channel, std::size_t patch_size) {
  const auto it = std::find(trace.modes.begin(), trace.modes.end(), mode);
  if (it == trace.modes.end()) {
    throw Error(ErrorCode::kOutOfRange, "model has no " + std::string(ops::to_string(mode)) + " attention");
  }
  const Tensor3& att = trace.attention[static_cast<std::size_t>(it - trace.modes.begin())];
  if (channel >= att.depth()) {
    throw Error(ErrorCode::kOutOfRange, "attention channel " + std::to_string(channel) + " out of range (H=" +
                                            std::to_string(att.depth()) + ")");
  }
  HeatMap map{att.rows(), att.cols(), {}};
  for (std::size_t i = 0; i < att.rows(); ++i)
    for (std::size_t j = 0; j < att.cols(); ++j) map.values.push_back(att(i, j, channel));
  return upscale(normalize(std::move(map)), patch_size);
}

HeatMap grad_cam_from(const Tensor3& activations, const Tensor3& gradients) {
  if (activations.shape() != gradients.shape()) {
    throw Error(ErrorCode::kDimensionMismatch, "Grad-CAM activations and gradients differ in shape");
  }
  const std::size_t cells = activations.shape().cells();
  const std::size_t heads = activations.depth();
  const auto a = activations.values();
  const auto g = gradients.values();
  HeatMap map{activations.rows(), activations.cols(), std::vector<double>(cells, 0.0)};
  for (std::size_t c = 0; c < cells; ++c) {
    map.values[c] = std::max(simd::dot(&g[c * heads], &a[c * heads], heads), 0.0);
  }
  return normalize(std::move(map));
}

HeatMap grad_cam(const ModelParams& params, const Tensor3& grid, std::optional<int> target_class,
                 std::size_t patch_size) {
  ad::Tape tape;
  const ForwardGraph g = record_forward(tape, grid, params, true);
  std::size_t index = 0;
  if (params.config().task == TaskKind::kClassification) {
    int cls = 0;
    if (target_class) {
      cls = *target_class;
    } else {
      const auto z = tape.value(g.output).values();
      cls = z[1] > z[0] ? 1 : 0;
    }
    if (cls != 0 && cls != 1) throw Error(ErrorCode::kOutOfRange, "Grad-CAM target class must be 0 or 1");
    index = static_cast<std::size_t>(cls);
  }
  const ad::Var target = ad::element(tape, g.output, index);
  tape.backward(target);
  return upscale(grad_cam_from(tape.value(g.conv_out), tape.grad(g.conv_out)), patch_size);
}

std::vector<std::uint8_t> encode_pgm(const HeatMap& map) {
  const std::string header = "P5\n" + std::to_string(map.cols) + " " + std::to_string(map.rows) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (double v : map.values) {
    out.push_back(static_cast<std::uint8_t>(std::floor(255.0 * std::clamp(v, 0.0, 1.0) + 0.5)));
  }
  return out;
}

HeatMap decode_pgm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw Error(ErrorCode::kFormat, "PGM: expected P5");
  std::size_t pos = 2;
  auto number = [&]() {
    while (pos < bytes.size() && (std::isspace(bytes[pos]) || bytes[pos] == '#')) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        ++pos;
      }
    }
    std::size_t v = 0;
    bool any = false;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      any = true;
    }
    if (!any) throw Error(ErrorCode::kFormat, "PGM: bad header");
    return v;
  };
  HeatMap map;
  map.cols = number();
  map.rows = number();
  if (number() != 255) throw Error(ErrorCode::kFormat, "PGM: maxval must be 255");
  ++pos;
  if (bytes.size() < pos || bytes.size() - pos < map.rows * map.cols) throw Error(ErrorCode::kFormat, "PGM: truncated");
  for (std::size_t i = 0; i < map.rows * map.cols; ++i) map.values.push_back(bytes[pos + i] / 255.0);
  return map;
}

void write_pgm(const HeatMap& map, const std::filesystem::path& path) {
  const auto bytes = encode_pgm(map);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

HeatMap read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_pgm(bytes);
}

std::array<std::array<std::uint8_t, 3>, 256> color_table() {
  std::array<std::array<std::uint8_t, 3>, 256> lut{};
  for (int i = 0; i < 256; ++i) {
    lut[i] = {static_cast<std::uint8_t>(i), static_cast<std::uint8_t>(255 - std::abs(2 * i - 255)),
              static_cast<std::uint8_t>(255 - i)};
  }
  return lut;
}

void write_color_ppm(const HeatMap& map, const std::filesystem::path& path) {
  const auto lut = color_table();
  RgbImage img(map.rows, map.cols);
  for (std::size_t r = 0; r < map.rows; ++r) {
    for (std::size_t c = 0; c < map.cols; ++c) {
      const auto idx = static_cast<std::size_t>(std::floor(255.0 * std::clamp(map.at(r, c), 0.0, 1.0) + 0.5));
      img.set(r, c, lut[idx][0], lut[idx][1], lut[idx][2]);
    }
  }
  write_ppm(img, path);
}

}  // namespace gridattn
