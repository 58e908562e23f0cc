#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "expobench/core.hpp"
#include "expobench/crf.hpp"
#include "expobench/emulator.hpp"
#include "expobench/features.hpp"

namespace expobench {

/// Parameters shared by every built-in controller. Fields that only concern
/// one method are grouped by prefix.
struct ControllerConfig {
  std::optional<double> exp_min_ms;  // defaults to the ladder minimum
  std::optional<double> exp_max_ms;  // defaults to the ladder maximum
  std::optional<double> initial_exposure_ms;

  // brightness-target family
  double brightness_target = 0.5;
  double ae_gain = 0.5;

  // gamma-scoring search
  std::vector<double> shim_gammas{1.0 / 1.9, 1.0 / 1.5, 1.0 / 1.2, 1.0, 1.2, 1.5, 1.9};
  double shim_gain = 0.4;
  int shim_poly_order = 5;

  // Gaussian-process search over log-exposure
  double kim_entropy_weight = 1.0;
  std::size_t kim_window = 10;
  double kim_length_scale_octaves = 0.5;
  double kim_noise = 0.05;  // observation noise standard deviation
  double kim_signal_variance = 1.0;
  double kim_beta = 1.0;
  int kim_grid = 64;

  // virtual-image direction search
  int wang_iterations = 3;
  double wang_step = 0.25;

  GradientMetricOptions gradient;

  // external plugin
  std::vector<std::string> plugin_command;
  double plugin_timeout_s = 5.0;
};

struct ExposureBounds {
  double min_ms = 1.0;
  double max_ms = 32.0;

  double clamp(double ms) const noexcept {
    if (!(ms > min_ms)) return min_ms;  // NaN and non-positive requests floor
    return std::min(ms, max_ms);
  }
  double log_midpoint() const noexcept { return std::sqrt(min_ms * max_ms); }
};

/// Exposure-control policy. Owned by one run; not thread-safe.
class ExposureController {
 public:
  virtual ~ExposureController() = default;

  virtual std::string_view kind() const noexcept = 0;

  /// Chooses the exposure for the first frame. The bracket frame is available
  /// so policies can probe emulated images before committing.
  virtual ExposureTime initialize(const BracketFrame& first, const EmulatorConfig& emulator) = 0;

  /// Consumes the image captured at the current request and returns the next request.
  ExposureTime step(const Image12& image) {
    history_.push_back({mean_brightness(image), current_});
    if (history_.size() > kHistoryLength) history_.pop_front();
    current_ = ExposureTime(bounds_.clamp(next_exposure(image)));
    return current_;
  }

  ExposureTime current() const noexcept { return current_; }
  const ExposureBounds& bounds() const noexcept { return bounds_; }

  struct HistoryEntry {
    double brightness;
    ExposureTime exposure;
  };
  const std::deque<HistoryEntry>& history() const noexcept { return history_; }

  const std::vector<std::string>& warnings() const noexcept { return warnings_; }

 protected:
  ExposureController(ExposureBounds bounds, ExposureTime initial) : bounds_(bounds), current_(initial) {
    if (!(bounds.min_ms > 0.0 && bounds.min_ms < bounds.max_ms))
      fail(ErrorKind::InvalidArgument, "exposure bounds must satisfy 0 < min < max");
  }

  /// Unclamped next request in milliseconds.
  virtual double next_exposure(const Image12& image) = 0;

  void set_current(double ms) { current_ = ExposureTime(bounds_.clamp(ms)); }
  void warn(std::string message) { warnings_.push_back(std::move(message)); }

 private:
  static constexpr std::size_t kHistoryLength = 32;

  ExposureBounds bounds_;
  ExposureTime current_;
  std::deque<HistoryEntry> history_;
  std::vector<std::string> warnings_;
};

/// Bisection in log-exposure for the emulated image closest to a brightness target.
inline ExposureTime brightness_search(const BracketFrame& frame, const EmulatorConfig& emulator,
                                      const ExposureBounds& bounds, double target = 0.5, int iterations = 30) {
  auto brightness = [&](double ms) { return mean_brightness(emulate(frame, ExposureTime(ms), emulator)); };
  const double b_min = brightness(bounds.min_ms);
  if (b_min >= target) return ExposureTime(bounds.min_ms);
  const double b_max = brightness(bounds.max_ms);
  if (b_max <= target) return ExposureTime(bounds.max_ms);

  double lo = std::log(bounds.min_ms), hi = std::log(bounds.max_ms);
  double b_lo = b_min, b_hi = b_max;
  for (int i = 0; i < iterations; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double b = brightness(std::exp(mid));
    if (b > target) {
      hi = mid;
      b_hi = b;
    } else {
      lo = mid;
      b_lo = b;
    }
  }
  return ExposureTime(std::abs(b_lo - target) <= std::abs(b_hi - target) ? std::exp(lo) : std::exp(hi));
}

namespace detail {

inline ExposureBounds bounds_for(const ControllerConfig& cfg, const std::vector<ExposureTime>& ladder) {
  ExposureBounds b;
  b.min_ms = cfg.exp_min_ms.value_or(ladder.empty() ? 1.0 : ladder.front().ms());
  b.max_ms = cfg.exp_max_ms.value_or(ladder.empty() ? 32.0 : ladder.back().ms());
  return b;
}

}  // namespace detail

/// Brightness-search initialization shared by most policies, honouring an explicit override.
class SearchInitialized : public ExposureController {
 public:
  ExposureTime initialize(const BracketFrame& first, const EmulatorConfig& emulator) override {
    if (initial_) {
      set_current(*initial_);
    } else {
      set_current(brightness_search(first, emulator, bounds()).ms());
    }
    return current();
  }

 protected:
  SearchInitialized(ExposureBounds bounds, std::optional<double> initial)
      : ExposureController(bounds, ExposureTime(bounds.clamp(initial.value_or(bounds.log_midpoint())))),
        initial_(initial) {}

 private:
  std::optional<double> initial_;
};

/// Exposure chosen once on the first frame, then held.
class FixedExposure final : public SearchInitialized {
 public:
  FixedExposure(ExposureBounds bounds, std::optional<double> initial = {}) : SearchInitialized(bounds, initial) {}
  std::string_view kind() const noexcept override { return "Fix"; }

 protected:
  double next_exposure(const Image12&) override { return current().ms(); }
};

/// Multiplicative proportional control on mean brightness.
class BrightnessTarget final : public SearchInitialized {
 public:
  BrightnessTarget(ExposureBounds bounds, double target, double gain = 0.5, std::optional<double> initial = {})
      : SearchInitialized(bounds, initial), target_(target), gain_(gain) {
    if (!(target > 0.0 && target < 1.0)) fail(ErrorKind::InvalidArgument, "brightness target must lie in (0, 1)");
  }
  std::string_view kind() const noexcept override { return "AE"; }
  double target() const noexcept { return target_; }

  static double update(double current_ms, double measured, double target, double gain) {
    return current_ms * (1.0 + gain * (target - measured) / target);
  }

 protected:
  double next_exposure(const Image12& image) override {
    return update(current().ms(), mean_brightness(image), target_, gain_);
  }

 private:
  double target_;
  double gain_;
};

/// Scores gamma-remapped copies of the latest image, fits a polynomial to the
/// scores and steers exposure toward the best gamma.
class GammaSearch final : public SearchInitialized {
 public:
  GammaSearch(ExposureBounds bounds, const ControllerConfig& cfg) : SearchInitialized(bounds, cfg.initial_exposure_ms), cfg_(cfg) {
    if (cfg_.shim_gammas.size() < static_cast<std::size_t>(cfg_.shim_poly_order) + 1)
      fail(ErrorKind::InvalidArgument, "need more gamma candidates than polynomial coefficients");
  }
  std::string_view kind() const noexcept override { return "Shim"; }

  /// Gradient score of the image remapped by u -> u^(1/gamma); gamma > 1 brightens.
  static double score_gamma(std::span<const double> normalized, int w, int h, double gamma,
                            const GradientMetricOptions& opts) {
    std::vector<double> mapped(normalized.size());
    for (std::size_t i = 0; i < mapped.size(); ++i) mapped[i] = std::pow(normalized[i], 1.0 / gamma);
    return grad_score(mapped, w, h, {}, opts);
  }

  /// Maximizer of the least-squares polynomial through (gamma, score) over the candidate span.
  static double best_gamma(const std::vector<double>& gammas, const std::vector<double>& scores, int order) {
    const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
    if (*hi - *lo <= 1e-12) return 1.0;
    const auto n = static_cast<Eigen::Index>(gammas.size());
    Eigen::MatrixXd A(n, order + 1);
    Eigen::VectorXd b(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double x = gammas[static_cast<std::size_t>(i)] - 1.0;
      double p = 1.0;
      for (int k = 0; k <= order; ++k, p *= x) A(i, k) = p;
      b(i) = scores[static_cast<std::size_t>(i)];
    }
    const Eigen::VectorXd c = A.colPivHouseholderQr().solve(b);
    const auto [gmin, gmax] = std::minmax_element(gammas.begin(), gammas.end());
    constexpr int kSamples = 2001;
    double best = 1.0;
    double best_value = -std::numeric_limits<double>::infinity();
    for (int s = 0; s < kSamples; ++s) {
      const double g = *gmin + (*gmax - *gmin) * s / (kSamples - 1);
      const double x = g - 1.0;
      double v = 0.0;
      for (int k = order; k >= 0; --k) v = v * x + c(k);
      if (v > best_value) {
        best_value = v;
        best = g;
      }
    }
    return best;
  }

 protected:
  double next_exposure(const Image12& image) override {
    const auto u = normalized_pixels(image);
    std::vector<double> scores;
    scores.reserve(cfg_.shim_gammas.size());
    for (double g : cfg_.shim_gammas) scores.push_back(score_gamma(u, image.width(), image.height(), g, cfg_.gradient));
    last_gamma_ = best_gamma(cfg_.shim_gammas, scores, cfg_.shim_poly_order);
    return current().ms() * (1.0 + cfg_.shim_gain * (last_gamma_ - 1.0));
  }

 public:
  double last_gamma() const noexcept { return last_gamma_; }

 private:
  ControllerConfig cfg_;
  double last_gamma_ = 1.0;
};

/// Gaussian-process regression over log2-exposure with a squared-exponential kernel.
class ExposureGp {
 public:
  ExposureGp(double length_scale, double signal_variance, double noise_std)
      : length_scale_(length_scale), signal_variance_(signal_variance), noise_var_(noise_std * noise_std) {}

  void fit(const std::vector<double>& x, const std::vector<double>& y) {
    x_ = x;
    const auto n = static_cast<Eigen::Index>(x.size());
    mean_ = 0.0;
    for (double v : y) mean_ += v;
    if (n > 0) mean_ /= static_cast<double>(n);
    Eigen::MatrixXd K(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        K(i, j) = kernel(x[static_cast<std::size_t>(i)], x[static_cast<std::size_t>(j)]) + (i == j ? noise_var_ : 0.0);
    llt_.compute(K);
    Eigen::VectorXd r(n);
    for (Eigen::Index i = 0; i < n; ++i) r(i) = y[static_cast<std::size_t>(i)] - mean_;
    alpha_ = llt_.solve(r);
  }

  struct Posterior {
    double mean;
    double stddev;
  };

  Posterior predict(double x) const {
    const auto n = static_cast<Eigen::Index>(x_.size());
    if (n == 0) return {mean_, std::sqrt(signal_variance_)};
    Eigen::VectorXd k(n);
    for (Eigen::Index i = 0; i < n; ++i) k(i) = kernel(x, x_[static_cast<std::size_t>(i)]);
    const double mu = mean_ + k.dot(alpha_);
    const Eigen::VectorXd v = llt_.matrixL().solve(k);
    const double var = std::max(0.0, signal_variance_ - v.squaredNorm());
    return {mu, std::sqrt(var)};
  }

  double kernel(double a, double b) const noexcept {
    const double d = (a - b) / length_scale_;
    return signal_variance_ * std::exp(-0.5 * d * d);
  }

 private:
  double length_scale_;
  double signal_variance_;
  double noise_var_;
  double mean_ = 0.0;
  std::vector<double> x_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd alpha_;
};

/// Upper-confidence-bound search on a gradient + entropy quality metric over a
/// sliding window of recent (exposure, quality) observations.
class GpQualitySearch final : public ExposureController {
 public:
  GpQualitySearch(ExposureBounds bounds, const ControllerConfig& cfg)
      : ExposureController(bounds, ExposureTime(bounds.log_midpoint())), cfg_(cfg) {
    if (cfg_.kim_grid < 2 || cfg_.kim_window < 1) fail(ErrorKind::InvalidArgument, "bad GP search parameters");
  }
  std::string_view kind() const noexcept override { return "Kim"; }

  ExposureTime initialize(const BracketFrame&, const EmulatorConfig&) override {
    window_.clear();
    set_current(cfg_.initial_exposure_ms.value_or(request_from_window()));
    return current();
  }

  double quality(const Image12& image) const {
    return grad_score(image, {}, cfg_.gradient) + cfg_.kim_entropy_weight * entropy_score(image);
  }

  void observe(double exposure_ms, double q) {
    window_.push_back({std::log2(exposure_ms), q});
    if (window_.size() > cfg_.kim_window) window_.pop_front();
  }

  /// Next request for the current window; the log-midpoint when the window is empty.
  double request_from_window() const {
    if (window_.empty()) return bounds().log_midpoint();
    std::vector<double> xs, ys;
    for (const auto& o : window_) {
      xs.push_back(o.log_exposure);
      ys.push_back(o.quality);
    }
    ExposureGp gp(cfg_.kim_length_scale_octaves, cfg_.kim_signal_variance, cfg_.kim_noise);
    gp.fit(xs, ys);
    const double lo = std::log2(bounds().min_ms);
    const double hi = std::log2(bounds().max_ms);
    double best_x = lo;
    double best = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < cfg_.kim_grid; ++i) {
      const double x = lo + (hi - lo) * i / (cfg_.kim_grid - 1);
      const auto p = gp.predict(x);
      const double ucb = p.mean + cfg_.kim_beta * p.stddev;
      if (ucb > best) {
        best = ucb;
        best_x = x;
      }
    }
    return std::exp2(best_x);
  }

 protected:
  double next_exposure(const Image12& image) override {
    observe(current().ms(), quality(image));
    return request_from_window();
  }

 private:
  struct Observation {
    double log_exposure;
    double quality;
  };
  ControllerConfig cfg_;
  std::deque<Observation> window_;
};

/// Direction search on virtual images rendered through the response function,
/// scored on the photometrically most sensitive pixels.
class VirtualImageSearch final : public SearchInitialized {
 public:
  VirtualImageSearch(ExposureBounds bounds, const ControllerConfig& cfg, Crf crf)
      : SearchInitialized(bounds, cfg.initial_exposure_ms), cfg_(cfg), crf_(std::move(crf)) {
    if (cfg_.wang_iterations < 1 || !(cfg_.wang_step > 0.0 && cfg_.wang_step < 1.0))
      fail(ErrorKind::InvalidArgument, "bad virtual-image search parameters");
    sensitive_ = sensitive_levels(crf_);
  }
  std::string_view kind() const noexcept override { return "Wang"; }

  /// DN levels in the steepest quartile of the forward response.
  static std::vector<char> sensitive_levels(const Crf& crf) {
    std::vector<double> slope(kMaxDn);
    for (int d = 0; d < kMaxDn; ++d) slope[static_cast<std::size_t>(d)] = crf.forward_slope(d);
    std::vector<double> sorted = slope;
    const auto q = sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() * 3 / 4);
    std::nth_element(sorted.begin(), q, sorted.end());
    const double threshold = *q * (1.0 - 1e-12);
    std::vector<char> out(kDnLevels, 0);
    for (int d = 0; d < kMaxDn; ++d) out[static_cast<std::size_t>(d)] = slope[static_cast<std::size_t>(d)] >= threshold;
    out[kMaxDn] = out[kMaxDn - 1];
    return out;
  }

  /// Moves the iterate toward whichever virtual exposure, brighter or darker
  /// by the step factor, scores higher. Ties hold the iterate.
  static double iterate(double current_ms, int iterations, double step,
                        const std::function<double(double)>& score_at) {
    double e = current_ms;
    for (int k = 0; k < iterations; ++k) {
      const double brighter = score_at(e * (1.0 + step));
      const double darker = score_at(e * (1.0 - step));
      if (std::abs(brighter - darker) <= 1e-12) continue;
      e = brighter > darker ? e * (1.0 + step) : e / (1.0 + step);
    }
    return e;
  }

 protected:
  double next_exposure(const Image12& image) override {
    std::vector<char> mask(image.size());
    const auto px = image.pixels();
    bool any = false;
    for (std::size_t i = 0; i < px.size(); ++i) any |= (mask[i] = sensitive_[px[i]]) != 0;
    if (!any) mask.clear();
    const ExposureTime base = current();
    return iterate(base.ms(), cfg_.wang_iterations, cfg_.wang_step, [&](double virtual_ms) {
      const Image12 v = rescale_exposure(image, base, ExposureTime(virtual_ms), crf_);
      return grad_score(v, mask, cfg_.gradient);
    });
  }

 private:
  ControllerConfig cfg_;
  Crf crf_;
  std::vector<char> sensitive_;
};

}  // namespace expobench
