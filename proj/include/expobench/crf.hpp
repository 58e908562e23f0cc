#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "expobench/core.hpp"

namespace expobench {

/// Discrete camera response function, stored through its inverse.
///
/// `inverse()[d]` is the normalized irradiance-exposure that produces DN `d`.
/// The table is strictly increasing with endpoints exactly 0 and 1, so the
/// forward response is obtained by searching the table.
class Crf {
 public:
  using Table = std::array<double, kDnLevels>;

  /// Linear response, f^-1(d) = d / 4095.
  Crf() {
    for (int d = 0; d < kDnLevels; ++d) inverse_[static_cast<std::size_t>(d)] = static_cast<double>(d) / kMaxDn;
  }

  explicit Crf(const Table& inverse) : inverse_(inverse) { validate(); }

  static Crf identity() { return Crf{}; }

  /// Power-law response f(u) = u^(1/gamma), i.e. f^-1(d) = (d / 4095)^gamma.
  static Crf gamma(double gamma) {
    if (!(gamma > 0.0)) fail(ErrorKind::InvalidArgument, "gamma must be positive");
    Table t{};
    for (int d = 0; d < kDnLevels; ++d)
      t[static_cast<std::size_t>(d)] = std::pow(static_cast<double>(d) / kMaxDn, gamma);
    return Crf(t);
  }

  const Table& inverse() const noexcept { return inverse_; }

  /// f^-1(dn). Out-of-range DN are clamped.
  double invert(int dn) const noexcept { return inverse_[static_cast<std::size_t>(std::clamp(dn, 0, kMaxDn))]; }

  /// Largest d with f^-1(d) <= clamp(e, 0, 1).
  int apply_forward(double e) const noexcept {
    if (!(e > 0.0)) return 0;
    if (e >= 1.0) return kMaxDn;
    const auto it = std::upper_bound(inverse_.begin(), inverse_.end(), e);
    return static_cast<int>(std::distance(inverse_.begin(), it)) - 1;
  }

  /// Forward response with linear interpolation between table entries,
  /// returning a fractional DN in [0, 4095].
  double forward_continuous(double e) const noexcept {
    const int d = apply_forward(e);
    if (d >= kMaxDn) return kMaxDn;
    if (!(e > 0.0)) return 0.0;
    const double lo = inverse_[static_cast<std::size_t>(d)];
    const double hi = inverse_[static_cast<std::size_t>(d) + 1];
    return static_cast<double>(d) + (e - lo) / (hi - lo);
  }

  /// Rendered DN for a normalized irradiance-exposure, rounded half-up.
  std::uint16_t render(double e) const noexcept { return to_dn(forward_continuous(e)); }

  /// Slope of the forward response at DN d, in DN per unit irradiance-exposure.
  double forward_slope(int dn) const noexcept {
    const int d = std::clamp(dn, 0, kMaxDn - 1);
    return 1.0 / (inverse_[static_cast<std::size_t>(d) + 1] - inverse_[static_cast<std::size_t>(d)]);
  }

  friend bool operator==(const Crf&, const Crf&) = default;

 private:
  void validate() const {
    if (inverse_.front() != 0.0 || inverse_.back() != 1.0)
      fail(ErrorKind::InvalidArgument, "inverse response must have endpoints 0 and 1");
    for (std::size_t d = 1; d < inverse_.size(); ++d) {
      if (!(inverse_[d] > inverse_[d - 1]))
        fail(ErrorKind::InvalidArgument, "inverse response must be strictly increasing");
    }
  }

  Table inverse_{};
};

/// Temporal noise (RMSE in DN) as a function of exposure time.
class NoiseProfile {
 public:
  struct Sample {
    ExposureTime exposure;
    double rmse_dn = 0.0;
  };

  NoiseProfile() = default;

  explicit NoiseProfile(std::vector<Sample> samples) : samples_(std::move(samples)) {
    for (std::size_t i = 0; i < samples_.size(); ++i) {
      if (!(samples_[i].rmse_dn >= 0.0) || !std::isfinite(samples_[i].rmse_dn))
        fail(ErrorKind::InvalidArgument, "noise rmse must be finite and non-negative");
      if (i > 0 && !(samples_[i - 1].exposure < samples_[i].exposure))
        fail(ErrorKind::InvalidArgument, "noise profile exposures must be strictly increasing");
    }
  }

  /// A profile reporting the same noise at every exposure.
  static NoiseProfile constant(double rmse_dn) { return NoiseProfile({{ExposureTime(1.0), rmse_dn}}); }

  const std::vector<Sample>& samples() const noexcept { return samples_; }

  /// Linear interpolation in log-exposure, clamped at both ends. Empty profiles report zero noise.
  double rmse_at(ExposureTime exposure) const noexcept {
    if (samples_.empty()) return 0.0;
    if (exposure <= samples_.front().exposure) return samples_.front().rmse_dn;
    if (exposure >= samples_.back().exposure) return samples_.back().rmse_dn;
    const auto hi = std::upper_bound(samples_.begin(), samples_.end(), exposure,
                                     [](ExposureTime e, const Sample& s) { return e < s.exposure; });
    const auto lo = std::prev(hi);
    const double t = (std::log(exposure.ms()) - std::log(lo->exposure.ms())) /
                     (std::log(hi->exposure.ms()) - std::log(lo->exposure.ms()));
    return lo->rmse_dn + t * (hi->rmse_dn - lo->rmse_dn);
  }

 private:
  std::vector<Sample> samples_;
};

struct CrfCalibrationOptions {
  int max_iterations = 50;
  double relative_tolerance = 1e-6;
  // Post-fit residual RMSE (normalized irradiance-exposure units) above which the stack is rejected.
  double max_residual_rmse = 0.02;
  double min_exposure_ratio = 4.0;  // two octaves
};

struct CrfCalibrationResult {
  Crf crf;
  double residual_rmse = 0.0;
  int iterations = 0;
};

namespace detail {

inline double response_weight(int dn) noexcept {
  if (dn <= 0 || dn >= kMaxDn) return 0.0;
  if (dn < 16 || dn > kMaxDn - 16) return 0.25;
  return 1.0;
}

// Weighted pool-adjacent-violators: least-squares non-decreasing fit.
inline void isotonic_fit(std::vector<double>& values, const std::vector<double>& weights) {
  struct Block {
    double mean;
    double weight;
    std::size_t count;
  };
  std::vector<Block> blocks;
  blocks.reserve(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    blocks.push_back({values[i], weights[i], 1});
    while (blocks.size() > 1 && blocks[blocks.size() - 2].mean > blocks.back().mean) {
      Block b = blocks.back();
      blocks.pop_back();
      Block& a = blocks.back();
      const double w = a.weight + b.weight;
      a.mean = w > 0.0 ? (a.mean * a.weight + b.mean * b.weight) / w : 0.5 * (a.mean + b.mean);
      a.weight = w;
      a.count += b.count;
    }
  }
  std::size_t i = 0;
  for (const Block& b : blocks)
    for (std::size_t k = 0; k < b.count; ++k) values[i++] = b.mean;
}

// Starting point for the alternating fit. f^-1 is modelled as piecewise linear
// over `knots` equal DN intervals with f^-1(0) = 0 and f^-1(4095) = 1. Every pixel
// seen inside the interior band at two consecutive exposures j < k contributes
// the ratio constraint f^-1(d_k) - (dt_k / dt_j) f^-1(d_j) = 0, which is linear
// in the knot values. A light second-difference penalty covers knots without data.
inline std::vector<double> pairwise_response_fit(const std::vector<std::pair<Image12, ExposureTime>>& stack,
                                                 int knots = 64, double smoothness = 1e-3) {
  const int n = knots - 1;  // free knot values 1..knots-1
  const double h = static_cast<double>(kMaxDn) / knots;
  Eigen::MatrixXd ata = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd atb = Eigen::VectorXd::Zero(n);
  // Row coefficients over all knots 0..knots; knot 0 is 0 and knot `knots` is 1.
  auto add_row = [&](const std::vector<std::pair<int, double>>& row, double weight) {
    double rhs = 0.0;
    for (const auto& [k, c] : row)
      if (k == knots) rhs -= c;
    for (const auto& [ka, ca] : row) {
      if (ka == 0 || ka == knots) continue;
      atb(ka - 1) += weight * ca * rhs;
      for (const auto& [kb, cb] : row)
        if (kb != 0 && kb != knots) ata(ka - 1, kb - 1) += weight * ca * cb;
    }
  };
  auto basis = [&](int dn, double scale, std::vector<std::pair<int, double>>& row) {
    const double x = dn / h;
    const int k = std::min(static_cast<int>(x), knots - 1);
    const double t = x - k;
    row.emplace_back(k, scale * (1.0 - t));
    row.emplace_back(k + 1, scale * t);
  };

  std::vector<std::size_t> order(stack.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return stack[a].second < stack[b].second; });
  const std::size_t pixel_count = stack.front().first.size();
  std::size_t rows = 0;
  std::vector<std::pair<int, double>> row;
  for (std::size_t p = 0; p < pixel_count; ++p) {
    for (std::size_t o = 1; o < order.size(); ++o) {
      const auto& [img_j, dt_j] = stack[order[o - 1]];
      const auto& [img_k, dt_k] = stack[order[o]];
      const int dj = img_j.pixels()[p];
      const int dk = img_k.pixels()[p];
      if (response_weight(dj) < 1.0 || response_weight(dk) < 1.0 || !(dt_k > dt_j)) continue;
      row.clear();
      basis(dk, 1.0, row);
      basis(dj, -dt_k.ms() / dt_j.ms(), row);
      add_row(row, 1.0);
      ++rows;
    }
  }
  const double reg = smoothness * std::max<double>(1.0, static_cast<double>(rows) / knots);
  for (int k = 1; k < knots; ++k) add_row({{k - 1, 1.0}, {k, -2.0}, {k + 1, 1.0}}, reg);

  std::vector<double> knot_values(static_cast<std::size_t>(knots) + 1, 0.0);
  knot_values.back() = 1.0;
  const Eigen::VectorXd sol = ata.ldlt().solve(atb);
  for (int k = 1; k < knots; ++k) knot_values[static_cast<std::size_t>(k)] = std::clamp(sol(k - 1), 0.0, 1.0);
  std::vector<double> w(knot_values.size(), 1.0);
  isotonic_fit(knot_values, w);

  std::vector<double> inverse(kDnLevels);
  for (int d = 0; d < kDnLevels; ++d) {
    const double x = d / h;
    const int k = std::min(static_cast<int>(x), knots - 1);
    const double t = x - k;
    inverse[static_cast<std::size_t>(d)] =
        (1.0 - t) * knot_values[static_cast<std::size_t>(k)] + t * knot_values[static_cast<std::size_t>(k) + 1];
  }
  return inverse;
}

}  // namespace detail

/// Recovers the inverse response from a static multi-exposure stack.
///
/// Starts from the piecewise-linear pairwise fit, then alternates between the
/// per-pixel irradiance that best explains all observations under the current
/// response and the least-squares response value of each DN given those
/// irradiances. After every response update the
/// table is made monotone (isotonic projection), gaps are filled by linear
/// interpolation and the gauge is fixed by pinning the endpoints to 0 and 1.
inline CrfCalibrationResult estimate_crf(const std::vector<std::pair<Image12, ExposureTime>>& stack,
                                         const CrfCalibrationOptions& opts = {}) {
  if (stack.empty()) fail(ErrorKind::InsufficientExposureSpan, "empty calibration stack");
  for (const auto& [img, exp] : stack) {
    if (!img.same_shape(stack.front().first))
      fail(ErrorKind::DimensionMismatch, "calibration images differ in dimensions");
  }
  const auto [min_it, max_it] = std::minmax_element(stack.begin(), stack.end(),
                                                    [](const auto& a, const auto& b) { return a.second < b.second; });
  if (stack.size() < 3 || max_it->second.ms() / min_it->second.ms() < opts.min_exposure_ratio)
    fail(ErrorKind::InsufficientExposureSpan, "calibration needs >= 3 images spanning >= 2 octaves");

  const std::size_t pixel_count = stack.front().first.size();
  std::vector<double> inverse = detail::pairwise_response_fit(stack);

  std::vector<double> irradiance(pixel_count, 0.0);
  std::vector<char> pixel_valid(pixel_count, 0);
  std::vector<double> dn_sum(kDnLevels);
  std::vector<double> dn_weight(kDnLevels);

  // Observation weights, image-major. Noise after the response's clip turns
  // saturated pixels into values just below 4095, so a top-band observation is
  // also dropped when the next-shorter exposure of that pixel already predicts
  // full scale.
  std::vector<std::size_t> order(stack.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return stack[a].second < stack[b].second; });
  std::vector<double> obs_weight(stack.size() * pixel_count);
  auto refresh_weights = [&] {
    for (std::size_t p = 0; p < pixel_count; ++p) {
      double prev_rate = -1.0;  // f^-1 / dt of the previous usable observation
      for (std::size_t i : order) {
        const int dn = stack[i].first.pixels()[p];
        const double dt = stack[i].second.ms();
        double w = detail::response_weight(dn);
        if (dn > kMaxDn - 16 && prev_rate >= 0.0 && prev_rate * dt >= 1.0) w = 0.0;
        obs_weight[i * pixel_count + p] = w;
        if (w > 0.0) prev_rate = inverse[static_cast<std::size_t>(dn)] / dt;
      }
    }
  };

  auto update_irradiance = [&] {
    for (std::size_t p = 0; p < pixel_count; ++p) {
      double num = 0.0;
      double den = 0.0;
      for (std::size_t i = 0; i < stack.size(); ++i) {
        const auto& [img, exp] = stack[i];
        const int dn = img.pixels()[p];
        const double w = obs_weight[i * pixel_count + p];
        num += w * exp.ms() * inverse[static_cast<std::size_t>(dn)];
        den += w * exp.ms() * exp.ms();
      }
      pixel_valid[p] = den > 0.0;
      irradiance[p] = den > 0.0 ? num / den : 0.0;
    }
  };

  auto energy = [&] {
    double acc = 0.0;
    double wsum = 0.0;
    for (std::size_t p = 0; p < pixel_count; ++p) {
      if (!pixel_valid[p]) continue;
      for (std::size_t i = 0; i < stack.size(); ++i) {
        const auto& [img, exp] = stack[i];
        const int dn = img.pixels()[p];
        const double w = obs_weight[i * pixel_count + p];
        const double r = inverse[static_cast<std::size_t>(dn)] - exp.ms() * irradiance[p];
        acc += w * r * r;
        wsum += w;
      }
    }
    return wsum > 0.0 ? acc / wsum : 0.0;
  };

  auto update_response = [&] {
    std::fill(dn_sum.begin(), dn_sum.end(), 0.0);
    std::fill(dn_weight.begin(), dn_weight.end(), 0.0);
    for (std::size_t p = 0; p < pixel_count; ++p) {
      if (!pixel_valid[p]) continue;
      for (std::size_t i = 0; i < stack.size(); ++i) {
        const auto& [img, exp] = stack[i];
        const int dn = img.pixels()[p];
        const double w = obs_weight[i * pixel_count + p];
        dn_sum[static_cast<std::size_t>(dn)] += w * exp.ms() * irradiance[p];
        dn_weight[static_cast<std::size_t>(dn)] += w;
      }
    }
    // Observed interior DN only; endpoints are pinned by the gauge.
    std::vector<int> observed;
    std::vector<double> values;
    std::vector<double> weights;
    for (int d = 1; d < kMaxDn; ++d) {
      if (dn_weight[static_cast<std::size_t>(d)] > 0.0) {
        observed.push_back(d);
        values.push_back(dn_sum[static_cast<std::size_t>(d)] / dn_weight[static_cast<std::size_t>(d)]);
        weights.push_back(dn_weight[static_cast<std::size_t>(d)]);
      }
    }
    if (observed.size() < 2) fail(ErrorKind::NonStaticStack, "calibration stack has too few usable observations");
    detail::isotonic_fit(values, weights);

    // Value at 4095 by linear extrapolation over the top of the observed range.
    const std::size_t n = observed.size();
    const std::size_t tail = std::min<std::size_t>(n, 64);
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t k = n - tail; k < n; ++k) {
      const double x = observed[k];
      sx += x;
      sy += values[k];
      sxx += x * x;
      sxy += x * values[k];
    }
    const double tn = static_cast<double>(tail);
    const double denom = tn * sxx - sx * sx;
    const double slope = denom > 0.0 ? (tn * sxy - sx * sy) / denom : 0.0;
    double top = values.back() + std::max(slope, 0.0) * (kMaxDn - observed.back());
    if (!(top > 0.0)) fail(ErrorKind::NonStaticStack, "degenerate response fit");

    std::vector<double> fitted(kDnLevels);
    fitted[0] = 0.0;
    fitted[kMaxDn] = top;
    // Linear fill between anchors (0, observed..., 4095).
    std::vector<std::pair<int, double>> anchors;
    anchors.reserve(n + 2);
    anchors.emplace_back(0, 0.0);
    for (std::size_t k = 0; k < n; ++k) anchors.emplace_back(observed[k], std::clamp(values[k], 0.0, top));
    anchors.emplace_back(kMaxDn, top);
    for (std::size_t a = 1; a < anchors.size(); ++a) {
      const auto [d0, v0] = anchors[a - 1];
      const auto [d1, v1] = anchors[a];
      for (int d = d0; d <= d1; ++d)
        fitted[static_cast<std::size_t>(d)] = v0 + (v1 - v0) * static_cast<double>(d - d0) / static_cast<double>(d1 - d0);
    }
    // Normalize, then enforce strict monotonicity with a minimal step.
    constexpr double kMinStep = 1e-12;
    for (int d = 0; d < kDnLevels; ++d) inverse[static_cast<std::size_t>(d)] = fitted[static_cast<std::size_t>(d)] / top;
    for (int d = 1; d < kMaxDn; ++d) {
      auto& v = inverse[static_cast<std::size_t>(d)];
      v = std::max(v, inverse[static_cast<std::size_t>(d) - 1] + kMinStep);
    }
    for (int d = kMaxDn - 1; d > 0; --d) {
      auto& v = inverse[static_cast<std::size_t>(d)];
      v = std::min(v, inverse[static_cast<std::size_t>(d) + 1] - kMinStep);
    }
    inverse[0] = 0.0;
    inverse[kMaxDn] = 1.0;
  };

  refresh_weights();
  update_irradiance();
  double previous = energy();
  int iterations = 0;
  for (; iterations < opts.max_iterations; ++iterations) {
    update_response();
    refresh_weights();
    update_irradiance();
    const double current = energy();
    const double change = previous > 0.0 ? std::abs(previous - current) / previous : 0.0;
    previous = current;
    if (change < opts.relative_tolerance) {
      ++iterations;
      break;
    }
  }

  const double residual = std::sqrt(previous);
  if (residual > opts.max_residual_rmse)
    fail(ErrorKind::NonStaticStack, "calibration residual " + std::to_string(residual) + " exceeds threshold");

  Crf::Table table{};
  std::copy(inverse.begin(), inverse.end(), table.begin());
  return {Crf(table), residual, iterations};
}

/// Per-exposure temporal noise from repeated captures of a static scene.
inline NoiseProfile estimate_noise(const std::vector<std::pair<ExposureTime, std::vector<Image12>>>& repeats) {
  std::vector<NoiseProfile::Sample> samples;
  samples.reserve(repeats.size());
  for (const auto& [exposure, images] : repeats) {
    if (images.size() < 2) fail(ErrorKind::InvalidArgument, "noise estimation needs >= 2 images per exposure");
    const Image12& first = images.front();
    for (const auto& img : images) {
      if (!img.same_shape(first)) fail(ErrorKind::DimensionMismatch, "repeat images differ in dimensions");
    }
    std::vector<double> mean(first.size(), 0.0);
    for (const auto& img : images) {
      const auto px = img.pixels();
      for (std::size_t p = 0; p < px.size(); ++p) mean[p] += px[p];
    }
    for (double& m : mean) m /= static_cast<double>(images.size());
    double acc = 0.0;
    for (const auto& img : images) {
      const auto px = img.pixels();
      for (std::size_t p = 0; p < px.size(); ++p) {
        const double d = px[p] - mean[p];
        acc += d * d;
      }
    }
    samples.push_back({exposure, std::sqrt(acc / (static_cast<double>(images.size()) * static_cast<double>(first.size())))});
  }
  std::sort(samples.begin(), samples.end(), [](const auto& a, const auto& b) { return a.exposure < b.exposure; });
  return NoiseProfile(std::move(samples));
}

// ---- text formats ---------------------------------------------------------

inline void write_crf(std::ostream& os, const Crf& crf) {
  os << "crf v1 4096\n";
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (double v : crf.inverse()) os << v << '\n';
}

inline Crf read_crf(std::istream& is) {
  std::string magic, version;
  int count = 0;
  if (!(is >> magic >> version >> count) || magic != "crf" || version != "v1" || count != kDnLevels)
    fail(ErrorKind::ParseError, "expected CRF header 'crf v1 4096'");
  Crf::Table table{};
  for (auto& v : table) {
    if (!(is >> v)) fail(ErrorKind::ParseError, "CRF file truncated");
  }
  return Crf(table);
}

inline void save_crf(const std::string& path, const Crf& crf) {
  std::ofstream os(path);
  if (!os) fail(ErrorKind::IoFailure, "cannot write " + path);
  write_crf(os, crf);
  if (!os) fail(ErrorKind::IoFailure, "failed writing " + path);
}

inline Crf load_crf(const std::string& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::IoFailure, "cannot open " + path);
  return read_crf(is);
}

inline void write_noise_profile(std::ostream& os, const NoiseProfile& profile) {
  os << "exposure_ms,rmse_dn\n" << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& s : profile.samples()) os << s.exposure.ms() << ',' << s.rmse_dn << '\n';
}

inline NoiseProfile read_noise_profile(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("exposure_ms,rmse_dn", 0) != 0)
    fail(ErrorKind::ParseError, "expected noise profile header 'exposure_ms,rmse_dn'");
  std::vector<NoiseProfile::Sample> samples;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    double exposure = 0.0, rmse = 0.0;
    char comma = 0;
    if (!(ls >> exposure >> comma >> rmse) || comma != ',') fail(ErrorKind::ParseError, "bad noise profile row: " + line);
    samples.push_back({ExposureTime(exposure), rmse});
  }
  return NoiseProfile(std::move(samples));
}

}  // namespace expobench
