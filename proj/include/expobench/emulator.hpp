#pragma once

#include <algorithm>
#include <cstddef>
#include <utility>

#include "expobench/core.hpp"
#include "expobench/crf.hpp"

namespace expobench {

struct EmulatorConfig {
  double alpha = 0.01;  // saturation threshold for the higher bounding bracket
  Crf crf;

  void validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0)) fail(ErrorKind::InvalidArgument, "alpha must lie in (0, 1]");
  }
};

/// Index of the bracket used as emulation source for `target`.
///
/// Inside the ladder the higher bounding bracket wins unless its saturation
/// level reaches alpha. Exact ladder matches are returned as-is; targets
/// outside the ladder use the nearest end.
inline std::size_t select_source_index(const BracketFrame& frame, ExposureTime target, const EmulatorConfig& cfg) {
  const auto& ladder = frame.exposures;
  if (target <= ladder.front()) return 0;
  if (target >= ladder.back()) return ladder.size() - 1;
  const auto upper = std::lower_bound(ladder.begin(), ladder.end(), target);
  const auto high = static_cast<std::size_t>(std::distance(ladder.begin(), upper));
  if (*upper == target) return high;
  return saturation_level(frame.images[high]) < cfg.alpha ? high : high - 1;
}

inline std::pair<const Image12&, ExposureTime> select_source(const BracketFrame& frame, ExposureTime target,
                                                             const EmulatorConfig& cfg) {
  const std::size_t i = select_source_index(frame, target, cfg);
  return {frame.images[i], frame.exposures[i]};
}

/// Rescales one image to another exposure time through the response function.
inline Image12 rescale_exposure(const Image12& source, ExposureTime source_exposure, ExposureTime target,
                                const Crf& crf) {
  const double ratio = target.ms() / source_exposure.ms();
  // Every output depends only on the input DN, so a 4096-entry lookup covers the image.
  std::array<std::uint16_t, kDnLevels> lut{};
  for (int d = 0; d < kDnLevels; ++d) lut[static_cast<std::size_t>(d)] = crf.render(ratio * crf.invert(d));
  Image12 out(source.width(), source.height());
  auto dst = out.pixels();
  const auto src = source.pixels();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = lut[src[i]];
  return out;
}

/// Emulates the image the camera would have produced at `target`.
inline Image12 emulate(const BracketFrame& frame, ExposureTime target, const EmulatorConfig& cfg) {
  const auto [source, source_exposure] = select_source(frame, target, cfg);
  return rescale_exposure(source, source_exposure, target, cfg.crf);
}

/// Emulation RMSE against a ground-truth capture, minus the camera's own noise floor.
inline double emulation_rmse(const Image12& emulated, const Image12& ground_truth, const NoiseProfile& noise,
                             ExposureTime exposure) {
  return std::max(0.0, rmse_dn(emulated, ground_truth) - noise.rmse_at(exposure));
}

}  // namespace expobench
