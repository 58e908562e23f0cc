#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "expobench/core.hpp"

namespace expobench {

struct Keypoint {
  int x = 0;
  int y = 0;
  double response = 0.0;

  friend bool operator==(const Keypoint&, const Keypoint&) = default;
};

/// 256-bit intensity-comparison descriptor.
using Descriptor = std::array<std::uint64_t, 4>;

inline int hamming(const Descriptor& a, const Descriptor& b) noexcept {
  int d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += std::popcount(a[i] ^ b[i]);
  return d;
}

struct FeatureSet {
  std::vector<Keypoint> keypoints;
  std::vector<Descriptor> descriptors;

  std::size_t size() const noexcept { return keypoints.size(); }
  bool empty() const noexcept { return keypoints.empty(); }
};

struct DetectorOptions {
  int max_features = 3000;
  int threshold = 20;  // on the 8-bit tone-mapped scale
};

/// 8-bit view of a 12-bit image (DN / 16).
class ToneMapped {
 public:
  explicit ToneMapped(const Image12& img) : width_(img.width()), height_(img.height()), data_(img.size()) {
    const auto px = img.pixels();
    for (std::size_t i = 0; i < px.size(); ++i) data_[i] = static_cast<std::uint8_t>(px[i] >> 4);
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int at(int x, int y) const noexcept {
    return data_[static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)];
  }
  int at_clamped(int x, int y) const noexcept { return at(std::clamp(x, 0, width_ - 1), std::clamp(y, 0, height_ - 1)); }

 private:
  int width_;
  int height_;
  std::vector<std::uint8_t> data_;
};

namespace detail {

// Bresenham circle of radius 3, clockwise from 12 o'clock.
inline constexpr std::array<std::array<int, 2>, 16> kFastCircle{{{0, -3},
                                                                  {1, -3},
                                                                  {2, -2},
                                                                  {3, -1},
                                                                  {3, 0},
                                                                  {3, 1},
                                                                  {2, 2},
                                                                  {1, 3},
                                                                  {0, 3},
                                                                  {-1, 3},
                                                                  {-2, 2},
                                                                  {-3, 1},
                                                                  {-3, 0},
                                                                  {-3, -1},
                                                                  {-2, -2},
                                                                  {-1, -3}}};

inline constexpr int kFastArc = 9;

/// FAST-9 segment test. Returns the corner score (sum of absolute contrast
/// beyond the threshold over the qualifying side), or 0 when not a corner.
inline double fast_score(const ToneMapped& img, int x, int y, int threshold) noexcept {
  const int c = img.at(x, y);
  std::array<int, 16> ring{};
  for (std::size_t i = 0; i < 16; ++i) ring[i] = img.at(x + kFastCircle[i][0], y + kFastCircle[i][1]);

  auto longest_run = [&](auto pred) {
    int best = 0;
    int run = 0;
    for (int i = 0; i < 32; ++i) {  // wrap around once
      if (pred(ring[static_cast<std::size_t>(i % 16)])) {
        best = std::max(best, ++run);
      } else {
        run = 0;
      }
    }
    return std::min(best, 16);
  };
  const auto brighter = [&](int p) { return p > c + threshold; };
  const auto darker = [&](int p) { return p < c - threshold; };

  double score = 0.0;
  if (longest_run(brighter) >= kFastArc) {
    double s = 0.0;
    for (int p : ring)
      if (brighter(p)) s += p - c - threshold;
    score = std::max(score, s);
  }
  if (longest_run(darker) >= kFastArc) {
    double s = 0.0;
    for (int p : ring)
      if (darker(p)) s += c - p - threshold;
    score = std::max(score, s);
  }
  return score;
}

inline constexpr int kPatchRadius = 12;

struct SamplePair {
  int x1, y1, x2, y2;
};

inline const std::array<SamplePair, 256>& descriptor_pattern() {
  static const std::array<SamplePair, 256> pattern = [] {
    std::array<SamplePair, 256> p{};
    std::mt19937 rng(0x5EEDu);
    std::normal_distribution<double> g(0.0, kPatchRadius / 2.5);
    auto draw = [&] { return std::clamp(static_cast<int>(std::lround(g(rng))), -kPatchRadius, kPatchRadius); };
    for (auto& s : p) {
      do {
        s = {draw(), draw(), draw(), draw()};
      } while (s.x1 == s.x2 && s.y1 == s.y2);
    }
    return p;
  }();
  return pattern;
}

// 5x5 box sums with replicated borders.
class BoxSums {
 public:
  explicit BoxSums(const ToneMapped& img) : w_(img.width()), h_(img.height()) {
    integral_.assign(static_cast<std::size_t>(w_ + 1) * static_cast<std::size_t>(h_ + 1), 0);
    for (int y = 0; y < h_; ++y) {
      long long row = 0;
      for (int x = 0; x < w_; ++x) {
        row += img.at(x, y);
        integral_[idx(x + 1, y + 1)] = integral_[idx(x + 1, y)] + row;
      }
    }
  }

  long long at(int x, int y) const noexcept {
    x = std::clamp(x, 2, std::max(2, w_ - 3));
    y = std::clamp(y, 2, std::max(2, h_ - 3));
    const int x0 = std::max(x - 2, 0), y0 = std::max(y - 2, 0);
    const int x1 = std::min(x + 3, w_), y1 = std::min(y + 3, h_);
    return integral_[idx(x1, y1)] - integral_[idx(x0, y1)] - integral_[idx(x1, y0)] + integral_[idx(x0, y0)];
  }

 private:
  std::size_t idx(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(w_ + 1) + static_cast<std::size_t>(x);
  }
  int w_, h_;
  std::vector<long long> integral_;
};

}  // namespace detail

/// FAST-9 corners on the tone-mapped image with 3x3 non-maximum suppression,
/// capped to the strongest `max_features`, each with a 256-bit descriptor.
inline FeatureSet detect(const Image12& img, const DetectorOptions& opts = {}) {
  FeatureSet out;
  const ToneMapped tm(img);
  const int w = tm.width();
  const int h = tm.height();
  if (w < 7 || h < 7 || opts.max_features <= 0) return out;

  std::vector<double> score(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0.0);
  auto s_at = [&](int x, int y) -> double& {
    return score[static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)];
  };
  for (int y = 3; y < h - 3; ++y)
    for (int x = 3; x < w - 3; ++x) s_at(x, y) = detail::fast_score(tm, x, y, opts.threshold);

  std::vector<Keypoint> candidates;
  for (int y = 3; y < h - 3; ++y) {
    for (int x = 3; x < w - 3; ++x) {
      const double s = s_at(x, y);
      if (s <= 0.0) continue;
      bool is_max = true;
      for (int dy = -1; dy <= 1 && is_max; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
          if ((dx || dy) && s_at(x + dx, y + dy) > s) {
            is_max = false;
            break;
          }
      if (is_max) candidates.push_back({x, y, s});
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Keypoint& a, const Keypoint& b) { return a.response > b.response; });
  if (candidates.size() > static_cast<std::size_t>(opts.max_features))
    candidates.resize(static_cast<std::size_t>(opts.max_features));

  const detail::BoxSums box(tm);
  const auto& pattern = detail::descriptor_pattern();
  out.descriptors.reserve(candidates.size());
  for (const auto& kp : candidates) {
    Descriptor d{};
    for (std::size_t b = 0; b < pattern.size(); ++b) {
      const auto& p = pattern[b];
      if (box.at(kp.x + p.x1, kp.y + p.y1) < box.at(kp.x + p.x2, kp.y + p.y2)) d[b / 64] |= std::uint64_t{1} << (b % 64);
    }
    out.descriptors.push_back(d);
  }
  out.keypoints = std::move(candidates);
  return out;
}

struct MatchOptions {
  int max_distance = 64;
  double ratio = 0.8;
};

/// Mutual nearest-neighbour Hamming matches passing the ratio test in both directions.
inline std::size_t match(const FeatureSet& a, const FeatureSet& b, const MatchOptions& opts = {}) {
  if (a.empty() || b.empty()) return 0;
  struct Nearest {
    int best = std::numeric_limits<int>::max();
    int second = std::numeric_limits<int>::max();
    std::size_t index = 0;
  };
  std::vector<Nearest> from_a(a.size());
  std::vector<Nearest> from_b(b.size());
  auto offer = [](Nearest& n, int d, std::size_t idx) {
    if (d < n.best) {
      n.second = n.best;
      n.best = d;
      n.index = idx;
    } else if (d < n.second) {
      n.second = d;
    }
  };
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      const int d = hamming(a.descriptors[i], b.descriptors[j]);
      offer(from_a[i], d, j);
      offer(from_b[j], d, i);
    }
  }
  auto passes_ratio = [&](const Nearest& n) {
    return n.second == std::numeric_limits<int>::max() || n.best < opts.ratio * n.second;
  };
  std::size_t count = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& na = from_a[i];
    const auto& nb = from_b[na.index];
    if (nb.index == i && na.best <= opts.max_distance && passes_ratio(na) && passes_ratio(nb)) ++count;
  }
  return count;
}

/// Fraction of the n x n grid cells holding at least one keypoint.
inline double grid_coverage(const FeatureSet& fs, int width, int height, int n) {
  if (n < 1) fail(ErrorKind::InvalidArgument, "grid side must be >= 1");
  if (width <= 0 || height <= 0) fail(ErrorKind::InvalidArgument, "image dimensions must be positive");
  std::vector<char> filled(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), 0);
  for (const auto& kp : fs.keypoints) {
    const int cx = std::clamp(static_cast<int>(static_cast<long long>(kp.x) * n / width), 0, n - 1);
    const int cy = std::clamp(static_cast<int>(static_cast<long long>(kp.y) * n / height), 0, n - 1);
    filled[static_cast<std::size_t>(cy) * static_cast<std::size_t>(n) + static_cast<std::size_t>(cx)] = 1;
  }
  const auto count = std::count(filled.begin(), filled.end(), 1);
  return static_cast<double>(count) / (static_cast<double>(n) * n);
}

/// Weighted sum of detected keypoints and matches with the previous image.
inline double feature_reward(std::size_t detected, std::size_t matches, double w_detect, double w_match) {
  if (w_detect < 0.0 || w_match < 0.0) fail(ErrorKind::InvalidArgument, "reward weights must be non-negative");
  return w_detect * static_cast<double>(detected) + w_match * static_cast<double>(matches);
}

inline double feature_reward(const FeatureSet& current, std::size_t matches, double w_detect, double w_match) {
  return feature_reward(current.size(), matches, w_detect, w_match);
}

// ---- image quality scores used by the exposure controllers ------------------

struct GradientMetricOptions {
  double activation = 0.06;  // gradient magnitudes below this count as noise
  double lambda = 1000.0;    // log-mapping steepness
};

namespace detail {

inline double gradient_magnitude(std::span<const double> u, int w, int h, int x, int y) noexcept {
  const int xr = std::min(x + 1, w - 1);
  const int yd = std::min(y + 1, h - 1);
  const double c = u[static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)];
  const double gx = u[static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(xr)] - c;
  const double gy = u[static_cast<std::size_t>(yd) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)] - c;
  return std::min(1.0, std::sqrt(gx * gx + gy * gy));
}

}  // namespace detail

/// Log-mapped gradient information of a normalized-intensity raster, averaged
/// over the selected pixels (all pixels when `mask` is empty). Result in [0, 1].
inline double grad_score(std::span<const double> normalized, int width, int height, std::span<const char> mask = {},
                         const GradientMetricOptions& opts = {}) {
  const double norm = std::log(opts.lambda * (1.0 - opts.activation) + 1.0);
  double acc = 0.0;
  std::size_t used = 0;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const auto i = static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x);
      if (!mask.empty() && !mask[i]) continue;
      ++used;
      const double m = detail::gradient_magnitude(normalized, width, height, x, y);
      if (m >= opts.activation) acc += std::log(opts.lambda * (m - opts.activation) + 1.0) / norm;
    }
  }
  return used ? acc / static_cast<double>(used) : 0.0;
}

inline std::vector<double> normalized_pixels(const Image12& img) {
  std::vector<double> u(img.size());
  const auto px = img.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) u[i] = px[i] / static_cast<double>(kMaxDn);
  return u;
}

inline double grad_score(const Image12& img, std::span<const char> mask = {}, const GradientMetricOptions& opts = {}) {
  const auto u = normalized_pixels(img);
  return grad_score(u, img.width(), img.height(), mask, opts);
}

/// Shannon entropy of the 8-bit tone-mapped histogram, divided by 8 bits. Result in [0, 1].
inline double entropy_score(const Image12& img) {
  std::array<std::size_t, 256> hist{};
  for (auto v : img.pixels()) ++hist[v >> 4];
  const double n = static_cast<double>(img.size());
  double h = 0.0;
  for (auto c : hist) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    h -= p * std::log2(p);
  }
  return h / 8.0;
}

}  // namespace expobench
