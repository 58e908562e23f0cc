#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "expobench/core.hpp"
#include "expobench/crf.hpp"

namespace expobench {

/// Camera motion for moving oracle scenes: the view pans across the radiance
/// field while the camera travels along +x.
struct SceneMotion {
  double pixels_per_second = 8.0;
  double meters_per_second = 1.0;
};

/// Ground-truth scene. Radiance is in normalized irradiance-exposure per
/// millisecond: exposure (ms) times radiance gives the value fed to the response.
struct SyntheticScene {
  std::string name;
  int width = 160;
  int height = 120;
  std::function<double(double x, double y)> radiance;
  std::function<double(double t)> illumination;  // global scale over time; empty means 1
  Crf crf;
  double noise_sigma = 0.0;  // additive Gaussian, DN
  std::optional<SceneMotion> motion;

  double illumination_at(double t) const { return illumination ? illumination(t) : 1.0; }

  double view_offset(double t) const { return motion ? motion->pixels_per_second * t : 0.0; }

  /// Radiance map of the current view at time t, row-major.
  std::vector<double> radiance_map(double t = 0.0) const {
    std::vector<double> map(static_cast<std::size_t>(width) * static_cast<std::size_t>(height));
    const double scale = illumination_at(t);
    const double offset = view_offset(t);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        map[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)] =
            std::max(0.0, scale * radiance(x + offset, y));
    return map;
  }

  std::optional<Pose> pose_at(double t) const {
    if (!motion) return std::nullopt;
    Pose p;
    p.translation = {motion->meters_per_second * t, 0.0, 0.0};
    return p;
  }
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) noexcept {
  return splitmix64(seed ^ splitmix64(a ^ splitmix64(b)));
}

/// Uniform value in [0, 1) attached to an integer lattice cell.
inline double cell_noise(long long cx, long long cy, std::uint64_t salt) noexcept {
  const auto h = mix_seed(salt, static_cast<std::uint64_t>(cx), static_cast<std::uint64_t>(cy));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

// Blocky texture with sharp cell edges, in [0.2, 1.0].
inline double block_texture(double x, double y, double cell, std::uint64_t salt) noexcept {
  const auto cx = static_cast<long long>(std::floor(x / cell));
  const auto cy = static_cast<long long>(std::floor(y / cell));
  return 0.2 + 0.8 * cell_noise(cx, cy, salt);
}

}  // namespace detail

/// Renders the scene at one exposure. Deterministic for a given seed.
inline Image12 render(const SyntheticScene& scene, ExposureTime exposure, std::uint64_t seed, double t = 0.0) {
  const auto map = scene.radiance_map(t);
  Image12 img(scene.width, scene.height);
  auto px = img.pixels();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t i = 0; i < map.size(); ++i) {
    double dn = scene.crf.forward_continuous(exposure.ms() * map[i]);
    if (scene.noise_sigma > 0.0) dn += scene.noise_sigma * gauss(rng);
    px[i] = to_dn(dn);
  }
  return img;
}

/// Default capture period between bracketing cycles (about 3.66 cycles per second).
inline constexpr double kDefaultFramePeriod = 1.0 / 3.66;

/// Renders `frames` bracketing cycles over the ladder. Brackets of one cycle share a pose.
inline Sequence render_bracket_sequence(const SyntheticScene& scene, const std::vector<ExposureTime>& ladder,
                                        std::size_t frames, std::uint64_t seed,
                                        double frame_period = kDefaultFramePeriod) {
  Sequence seq;
  seq.id = scene.name;
  seq.frames.reserve(frames);
  for (std::size_t k = 0; k < frames; ++k) {
    BracketFrame frame;
    frame.timestamp = static_cast<double>(k) * frame_period;
    frame.pose = scene.pose_at(frame.timestamp);
    frame.exposures = ladder;
    for (std::size_t b = 0; b < ladder.size(); ++b)
      frame.images.push_back(render(scene, ladder[b], detail::mix_seed(seed, k, b), frame.timestamp));
    frame.validate();
    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

inline std::vector<ExposureTime> make_ladder(std::initializer_list<double> ms) {
  std::vector<ExposureTime> out;
  for (double v : ms) out.emplace_back(v);
  return out;
}

/// The two bracketing ladders used in the field: {1..32} ms and the extended {0.025..25.6} ms.
inline std::vector<ExposureTime> standard_ladder() { return make_ladder({1, 2, 4, 8, 16, 32}); }
inline std::vector<ExposureTime> extended_ladder() { return make_ladder({0.025, 0.1, 0.4, 1.6, 6.4, 25.6}); }

struct SceneOptions {
  int width = 160;
  int height = 120;
  Crf crf;
  double noise_sigma = 0.0;
  std::optional<SceneMotion> motion;
  std::uint64_t texture_seed = 7;
  double day_length = 20.0;  // seconds for a full day-cycle
};

/// Half bright / half dark textured scene with a 60 dB radiance span.
inline SyntheticScene hdr_split_scene(const SceneOptions& o) {
  SyntheticScene s{"hdr_split", o.width, o.height, {}, {}, o.crf, o.noise_sigma, o.motion};
  const double split = o.width / 2.0;
  const auto salt = o.texture_seed;
  // Brightest cells saturate beyond ~5 ms; dark side is 1000x dimmer.
  s.radiance = [split, salt](double x, double y) {
    const double tex = detail::block_texture(x, y, 6.0, salt);
    // Alternating bands of width `split`, so panning keeps both halves in view.
    const bool bright = (static_cast<long long>(std::floor(x / split)) & 1) == 0;
    return (bright ? 0.2 : 0.2e-3) * tex;
  };
  return s;
}

/// Checkerboard-modulated horizontal ramp. A finer block texture, offset from
/// the checker, supplies L-shaped corners that checker junctions alone lack.
inline SyntheticScene gradient_texture_scene(const SceneOptions& o) {
  SyntheticScene s{"gradient_texture", o.width, o.height, {}, {}, o.crf, o.noise_sigma, o.motion};
  const double w = o.width;
  const auto salt = o.texture_seed;
  s.radiance = [w, salt](double x, double y) {
    const long long cx = static_cast<long long>(std::floor(x / 8.0));
    const long long cy = static_cast<long long>(std::floor(y / 8.0));
    const double checker = ((cx + cy) % 2 == 0) ? 1.0 : 0.45;
    const double ramp = 0.25 + 0.75 * (0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * x / (2.0 * w)));
    const double tex = detail::block_texture(x + 2.0, y + 3.0, 5.0, salt ^ 0x9E37u);
    return 0.1 * checker * ramp * tex;
  };
  return s;
}

inline SyntheticScene constant_scene(const SceneOptions& o, double radiance = 1.0 / 64.0) {
  SyntheticScene s{"constant", o.width, o.height, {}, {}, o.crf, o.noise_sigma, o.motion};
  s.radiance = [radiance](double, double) { return radiance; };
  return s;
}

/// Textured scene whose illumination follows a time-of-day curve.
inline SyntheticScene day_cycle_scene(const SceneOptions& o) {
  SyntheticScene s{"day_cycle", o.width, o.height, {}, {}, o.crf, o.noise_sigma, o.motion};
  const auto salt = o.texture_seed;
  s.radiance = [salt](double x, double y) { return 0.15 * detail::block_texture(x, y, 5.0, salt); };
  const double day = o.day_length;
  s.illumination = [day](double t) { return 0.05 + 0.95 * std::pow(std::sin(std::numbers::pi * t / day), 2.0); };
  return s;
}

inline std::vector<std::string> scene_names() { return {"hdr_split", "gradient_texture", "constant", "day_cycle"}; }

inline SyntheticScene make_scene(const std::string& name, const SceneOptions& o) {
  if (name == "hdr_split") return hdr_split_scene(o);
  if (name == "gradient_texture") return gradient_texture_scene(o);
  if (name == "constant") return constant_scene(o);
  if (name == "day_cycle") return day_cycle_scene(o);
  fail(ErrorKind::InvalidArgument, "unknown scene '" + name + "'");
}

/// All library scenes built with the same options.
inline std::vector<SyntheticScene> scene_library(const SceneOptions& o = {}) {
  std::vector<SyntheticScene> out;
  for (const auto& name : scene_names()) out.push_back(make_scene(name, o));
  return out;
}

}  // namespace expobench
