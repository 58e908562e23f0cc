#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Geometry>

#include "expobench/core.hpp"

namespace expobench {

struct StampedPose {
  double timestamp = 0.0;
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();

  Eigen::Isometry3d transform() const {
    Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
    t.linear() = rotation.toRotationMatrix();
    t.translation() = translation;
    return t;
  }
};

/// Time-ordered sequence of poses (TUM convention: camera-to-world).
class Trajectory {
 public:
  Trajectory() = default;
  explicit Trajectory(std::vector<StampedPose> poses) : poses_(std::move(poses)) {
    for (std::size_t i = 0; i < poses_.size(); ++i) {
      if (i > 0 && !(poses_[i].timestamp > poses_[i - 1].timestamp))
        fail(ErrorKind::NonMonotoneTimestamps, "trajectory timestamps must be strictly increasing");
      if (std::abs(poses_[i].rotation.norm() - 1.0) > 1e-6)
        fail(ErrorKind::BadQuaternion, "trajectory quaternions must be unit-norm");
    }
  }

  const std::vector<StampedPose>& poses() const noexcept { return poses_; }
  std::size_t size() const noexcept { return poses_.size(); }
  bool empty() const noexcept { return poses_.empty(); }
  const StampedPose& operator[](std::size_t i) const noexcept { return poses_[i]; }

 private:
  std::vector<StampedPose> poses_;
};

struct MetricConfig {
  std::vector<double> windows_m;  // evaluation window sizes
  double association_tolerance_s = 0.15;
  double failure_window_m = 5.0;
  double failure_threshold_percent = 100.0;

  /// Every integer window from 5 m to 50 m.
  static MetricConfig standard() {
    MetricConfig c;
    for (int w = 5; w <= 50; ++w) c.windows_m.push_back(w);
    return c;
  }

  void validate() const {
    if (windows_m.empty()) fail(ErrorKind::InvalidArgument, "at least one window is required");
    for (std::size_t i = 0; i < windows_m.size(); ++i) {
      if (!(windows_m[i] > 0.0)) fail(ErrorKind::InvalidArgument, "windows must be positive");
      if (i > 0 && !(windows_m[i] > windows_m[i - 1]))
        fail(ErrorKind::InvalidArgument, "windows must be strictly increasing");
    }
  }
};

struct SegmentError {
  std::size_t begin = 0;  // index into the associated pose pairs
  std::size_t end = 0;
  double length_m = 0.0;
  double translation_m = 0.0;
  double rotation_deg = 0.0;
};

struct RelativeErrorResult {
  double window_m = 0.0;
  double rte_percent = 0.0;
  double rre_deg_per_m = 0.0;
  std::vector<SegmentError> segments;
};

namespace detail {

// Index of the timestamp in `to` nearest each timestamp of `from`; ties go to the earlier one.
inline std::vector<std::size_t> nearest_indices(const Trajectory& from, const Trajectory& to) {
  std::vector<std::size_t> out(from.size());
  std::size_t j = 0;
  for (std::size_t i = 0; i < from.size(); ++i) {
    const double t = from[i].timestamp;
    while (j + 1 < to.size() && std::abs(to[j + 1].timestamp - t) < std::abs(to[j].timestamp - t)) ++j;
    out[i] = j;
  }
  return out;
}

}  // namespace detail

/// Pairs of (reference index, estimate index) that are each other's nearest
/// timestamp and lie within tolerance. Mutual nearness keeps the pairing
/// one-to-one when the two trajectories are sampled at different rates.
inline std::vector<std::pair<std::size_t, std::size_t>> associate(const Trajectory& est, const Trajectory& ref,
                                                                  double tolerance_s) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  if (est.empty() || ref.empty()) return pairs;
  const auto ref_to_est = detail::nearest_indices(ref, est);
  const auto est_to_ref = detail::nearest_indices(est, ref);
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const std::size_t j = ref_to_est[i];
    if (est_to_ref[j] == i && std::abs(est[j].timestamp - ref[i].timestamp) <= tolerance_s) pairs.emplace_back(i, j);
  }
  return pairs;
}

namespace detail {

// Half-angle form: identical relative rotations cancel to exactly zero, which acos of the trace does not.
inline double rotation_angle_deg(const Eigen::Quaterniond& q) {
  return 2.0 * std::atan2(q.vec().norm(), std::abs(q.w())) * 180.0 / std::numbers::pi;
}

struct Discrepancy {
  double translation_m;
  double rotation_deg;
};

inline Discrepancy relative_discrepancy(const StampedPose& ref_a, const StampedPose& ref_b, const StampedPose& est_a,
                                        const StampedPose& est_b) {
  const Eigen::Isometry3d ref_rel = ref_a.transform().inverse() * ref_b.transform();
  const Eigen::Isometry3d est_rel = est_a.transform().inverse() * est_b.transform();
  const Eigen::Isometry3d err = ref_rel.inverse() * est_rel;
  const Eigen::Quaterniond ref_q = ref_a.rotation.conjugate() * ref_b.rotation;
  const Eigen::Quaterniond est_q = est_a.rotation.conjugate() * est_b.rotation;
  return {err.translation().norm(), rotation_angle_deg(ref_q.conjugate() * est_q)};
}

inline std::vector<double> arc_lengths(const Trajectory& ref, const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  std::vector<double> arc(pairs.size(), 0.0);
  for (std::size_t k = 1; k < pairs.size(); ++k)
    arc[k] = arc[k - 1] + (ref[pairs[k].first].translation - ref[pairs[k - 1].first].translation).norm();
  return arc;
}

}  // namespace detail

/// Windowed relative errors on non-overlapping consecutive segments of
/// reference arc-length `window_m`.
inline RelativeErrorResult relative_error(const Trajectory& est, const Trajectory& ref, double window_m,
                                          double tolerance_s = 0.15) {
  if (!(window_m > 0.0)) fail(ErrorKind::InvalidArgument, "window must be positive");
  const auto pairs = associate(est, ref, tolerance_s);
  if (pairs.size() < 2) fail(ErrorKind::NoOverlap, "estimate and reference share fewer than two timestamps");
  const auto arc = detail::arc_lengths(ref, pairs);
  // Absorbs the rounding of accumulated arc-length so a segment of exactly w is not skipped.
  const double slack = 1e-9 * std::max(1.0, window_m);
  if (arc.back() < window_m - slack) fail(ErrorKind::TrajectoryTooShort, "reference shorter than the window");

  RelativeErrorResult result;
  result.window_m = window_m;
  std::size_t start = 0;
  for (std::size_t k = 1; k < pairs.size(); ++k) {
    if (arc[k] - arc[start] < window_m - slack) continue;
    const auto d = detail::relative_discrepancy(ref[pairs[start].first], ref[pairs[k].first], est[pairs[start].second],
                                                est[pairs[k].second]);
    result.segments.push_back({start, k, arc[k] - arc[start], d.translation_m, d.rotation_deg});
    start = k;
  }
  double t_acc = 0.0, r_acc = 0.0;
  for (const auto& s : result.segments) {
    const double t = s.translation_m / window_m * 100.0;
    const double r = s.rotation_deg / window_m;
    t_acc += t * t;
    r_acc += r * r;
  }
  const auto n = static_cast<double>(result.segments.size());
  result.rte_percent = std::sqrt(t_acc / n);
  result.rre_deg_per_m = std::sqrt(r_acc / n);
  return result;
}

inline double rte(const Trajectory& est, const Trajectory& ref, double window_m, double tolerance_s = 0.15) {
  return relative_error(est, ref, window_m, tolerance_s).rte_percent;
}

inline double rre(const Trajectory& est, const Trajectory& ref, double window_m, double tolerance_s = 0.15) {
  return relative_error(est, ref, window_m, tolerance_s).rre_deg_per_m;
}

struct AggregateError {
  double rte_percent = 0.0;
  double rre_deg_per_m = 0.0;
};

/// Mean over every (trajectory, window) result.
inline AggregateError aggregate(const std::vector<std::vector<RelativeErrorResult>>& per_trajectory) {
  AggregateError out;
  std::size_t n = 0;
  for (const auto& windows : per_trajectory) {
    for (const auto& r : windows) {
      out.rte_percent += r.rte_percent;
      out.rre_deg_per_m += r.rre_deg_per_m;
      ++n;
    }
  }
  if (n == 0) fail(ErrorKind::EmptyInput, "nothing to aggregate");
  out.rte_percent /= static_cast<double>(n);
  out.rre_deg_per_m /= static_cast<double>(n);
  return out;
}

/// Relative errors of one trajectory over every configured window.
inline std::vector<RelativeErrorResult> evaluate_windows(const Trajectory& est, const Trajectory& ref,
                                                         const MetricConfig& cfg) {
  cfg.validate();
  std::vector<RelativeErrorResult> out;
  out.reserve(cfg.windows_m.size());
  for (double w : cfg.windows_m) out.push_back(relative_error(est, ref, w, cfg.association_tolerance_s));
  return out;
}

/// Seconds (from the reference start) until the estimate is lost: either its
/// trailing-window RTE exceeds the threshold or it stops producing poses
/// while the reference continues. Returns `full_duration_s` otherwise.
inline double time_before_failure(const Trajectory& est, const Trajectory& ref, double full_duration_s,
                                  const MetricConfig& cfg = MetricConfig::standard()) {
  if (est.empty() || ref.empty()) return 0.0;
  const double t0 = ref[0].timestamp;
  const auto pairs = associate(est, ref, cfg.association_tolerance_s);
  if (pairs.empty()) return 0.0;
  const auto arc = detail::arc_lengths(ref, pairs);
  const double w = cfg.failure_window_m;
  std::size_t anchor = 0;  // latest pair at least w behind the current one
  for (std::size_t k = 1; k < pairs.size(); ++k) {
    while (anchor + 1 < k && arc[k] - arc[anchor + 1] >= w) ++anchor;
    if (arc[k] - arc[anchor] < w) continue;
    const auto d = detail::relative_discrepancy(ref[pairs[anchor].first], ref[pairs[k].first], est[pairs[anchor].second],
                                                est[pairs[k].second]);
    if (d.translation_m / w * 100.0 > cfg.failure_threshold_percent) return est[pairs[k].second].timestamp - t0;
  }
  const double last_est = est[est.size() - 1].timestamp;
  const double last_ref = ref[ref.size() - 1].timestamp;
  if (last_est < last_ref - cfg.association_tolerance_s) return last_est - t0;
  return full_duration_s;
}

inline bool is_success(double failure_time_s, double full_duration_s) { return failure_time_s >= full_duration_s; }

}  // namespace expobench
