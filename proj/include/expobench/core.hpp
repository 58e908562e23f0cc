#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "expobench/error.hpp"

namespace expobench {

/// Largest digital number of a 12-bit sensor.
inline constexpr int kMaxDn = 4095;
inline constexpr int kDnLevels = 4096;

/// Rounds to the nearest integer DN (half-up) and clamps into [0, 4095].
inline std::uint16_t to_dn(double value) noexcept {
  if (!(value > 0.0)) return 0;  // also maps NaN to 0
  const double rounded = std::floor(value + 0.5);
  return static_cast<std::uint16_t>(std::min(rounded, static_cast<double>(kMaxDn)));
}

/// Single-channel 12-bit raster, row-major.
class Image12 {
 public:
  Image12() = default;

  Image12(int width, int height, std::uint16_t fill = 0) : width_(width), height_(height) {
    if (width <= 0 || height <= 0) fail(ErrorKind::InvalidArgument, "image dimensions must be positive");
    if (fill > kMaxDn) fail(ErrorKind::RangeViolation, "fill value exceeds 4095");
    data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
  }

  Image12(int width, int height, std::vector<std::uint16_t> data)
      : width_(width), height_(height), data_(std::move(data)) {
    if (width <= 0 || height <= 0) fail(ErrorKind::InvalidArgument, "image dimensions must be positive");
    if (data_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
      fail(ErrorKind::DimensionMismatch, "pixel count does not match width x height");
    if (std::any_of(data_.begin(), data_.end(), [](std::uint16_t v) { return v > kMaxDn; }))
      fail(ErrorKind::RangeViolation, "pixel value exceeds 4095");
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::uint16_t at(int x, int y) const noexcept {
    return data_[static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)];
  }
  // Callers are responsible for keeping written values within [0, 4095].
  void set(int x, int y, std::uint16_t v) noexcept {
    data_[static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)] = v;
  }

  std::span<const std::uint16_t> pixels() const noexcept { return data_; }
  std::span<std::uint16_t> pixels() noexcept { return data_; }

  bool same_shape(const Image12& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_;
  }

  friend bool operator==(const Image12&, const Image12&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint16_t> data_;
};

/// Exposure time in milliseconds; always strictly positive.
class ExposureTime {
 public:
  constexpr ExposureTime() = default;
  explicit ExposureTime(double ms) : ms_(ms) {
    if (!(ms > 0.0) || !std::isfinite(ms)) fail(ErrorKind::InvalidArgument, "exposure time must be positive");
  }

  constexpr double ms() const noexcept { return ms_; }

  friend constexpr auto operator<=>(const ExposureTime&, const ExposureTime&) = default;

 private:
  double ms_ = 1.0;
};

/// Rigid transform: translation in meters, rotation as a unit quaternion (x, y, z, w).
struct Pose {
  std::array<double, 3> translation{0.0, 0.0, 0.0};
  std::array<double, 4> rotation{0.0, 0.0, 0.0, 1.0};

  friend bool operator==(const Pose&, const Pose&) = default;
};

/// One bracketing cycle: N images captured over a strictly increasing exposure ladder.
struct BracketFrame {
  std::vector<Image12> images;
  std::vector<ExposureTime> exposures;
  double timestamp = 0.0;
  std::optional<Pose> pose;

  std::size_t bracket_count() const noexcept { return images.size(); }

  void validate() const {
    if (images.size() != exposures.size())
      fail(ErrorKind::LadderMismatch, "bracket frame has differing image and exposure counts");
    if (images.size() < 2) fail(ErrorKind::LadderMismatch, "bracket frame needs at least two brackets");
    for (std::size_t i = 1; i < exposures.size(); ++i) {
      if (!(exposures[i - 1] < exposures[i]))
        fail(ErrorKind::LadderMismatch, "bracket exposures must be strictly increasing");
      if (!images[i].same_shape(images[0]))
        fail(ErrorKind::DimensionMismatch, "bracket images differ in dimensions");
    }
  }
};

struct Sequence {
  std::string id;
  std::vector<BracketFrame> frames;

  void validate() const {
    for (std::size_t i = 0; i < frames.size(); ++i) {
      frames[i].validate();
      if (i == 0) continue;
      if (!(frames[i].timestamp > frames[i - 1].timestamp))
        fail(ErrorKind::NonMonotoneTimestamps, "sequence timestamps must be strictly increasing");
      if (frames[i].exposures != frames[0].exposures)
        fail(ErrorKind::LadderMismatch, "all frames must share the same exposure ladder");
      if (!frames[i].images[0].same_shape(frames[0].images[0]))
        fail(ErrorKind::DimensionMismatch, "all frames must share the same image dimensions");
    }
  }

  std::vector<ExposureTime> ladder() const {
    return frames.empty() ? std::vector<ExposureTime>{} : frames.front().exposures;
  }

  double duration() const noexcept {
    return frames.empty() ? 0.0 : frames.back().timestamp - frames.front().timestamp;
  }
};

/// Mean pixel value as a fraction of full scale.
inline double mean_brightness(const Image12& img) {
  const auto px = img.pixels();
  if (px.empty()) return 0.0;
  const std::uint64_t sum = std::accumulate(px.begin(), px.end(), std::uint64_t{0});
  return static_cast<double>(sum) / (static_cast<double>(px.size()) * kMaxDn);
}

/// Fraction of pixels sitting at either extreme DN (0 or 4095).
inline double saturation_level(const Image12& img) {
  const auto px = img.pixels();
  if (px.empty()) return 0.0;
  const auto n = std::count_if(px.begin(), px.end(), [](std::uint16_t v) { return v == 0 || v == kMaxDn; });
  return static_cast<double>(n) / static_cast<double>(px.size());
}

/// Root-mean-square DN difference of two equally sized images.
inline double rmse_dn(const Image12& a, const Image12& b) {
  if (!a.same_shape(b)) fail(ErrorKind::DimensionMismatch, "rmse requires equal image dimensions");
  const auto pa = a.pixels();
  const auto pb = b.pixels();
  double acc = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const double d = static_cast<double>(pa[i]) - static_cast<double>(pb[i]);
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(pa.size()));
}

}  // namespace expobench
