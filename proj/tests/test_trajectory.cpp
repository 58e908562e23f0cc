#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <numbers>

#include "expobench/trajectory.hpp"
#include "trajectory_oracle.hpp"

using namespace expobench;
using namespace expobench::testing;


TEST(RelativeError, IdentityIsExactlyZero) {
  const auto ref = wiggle(80.0);
  for (int w = 5; w <= 50; ++w) {
    const auto r = relative_error(ref, ref, w);
    EXPECT_EQ(r.rte_percent, 0.0) << w;
    EXPECT_EQ(r.rre_deg_per_m, 0.0) << w;
  }
}

TEST(RelativeError, UniformScaleOnePercent) {
  const auto ref = straight_line(60.0);
  const auto est = straight_line(60.0, 1.01);
  for (int w = 5; w <= 50; ++w) {
    EXPECT_NEAR(rte(est, ref, w), 1.0, 0.01) << w;
    EXPECT_NEAR(rre(est, ref, w), 0.0, 1e-9) << w;
  }
}

TEST(RelativeError, RteLinearInScaleError) {
  const auto ref = straight_line(60.0);
  for (double s : {0.002, 0.005, 0.03, 0.1}) EXPECT_NEAR(rte(straight_line(60.0, 1.0 + s), ref, 10.0), 100.0 * s, 1e-6);
}

TEST(RelativeError, YawDriftTenthDegreePerMeter) {
  const auto ref = straight_line(60.0);
  const auto est = straight_line(60.0, 1.0, 10.0, [](StampedPose& p, double s) {
    p.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(0.1 * s * kDeg, Eigen::Vector3d::UnitZ()));
  });
  for (int w = 5; w <= 50; ++w) EXPECT_NEAR(rre(est, ref, w), 0.1, 0.005) << w;
}

TEST(RelativeError, AgreesWithBruteForceSegments) {
  const auto ref = wiggle(90.0);
  // Estimate with scale, drift and a slowly varying rotation error.
  std::vector<StampedPose> poses;
  for (const auto& p : ref.poses()) {
    StampedPose q = p;
    q.translation = 1.02 * p.translation + Eigen::Vector3d(0.0, 0.01 * p.timestamp, 0.0);
    q.rotation = (p.rotation * Eigen::AngleAxisd(0.002 * p.timestamp, Eigen::Vector3d::UnitY())).normalized();
    poses.push_back(q);
  }
  const Trajectory est(std::move(poses));
  for (int w = 5; w <= 50; ++w) {
    const auto r = relative_error(est, ref, w);
    const auto o = oracle_relative_error(est, ref, w);
    ASSERT_EQ(r.segments.size(), o.segments) << w;
    EXPECT_NEAR(r.rte_percent, o.rte, 1e-9) << w;
    EXPECT_NEAR(r.rre_deg_per_m, o.rre, 1e-9) << w;
  }
}

TEST(RelativeError, SegmentsAreConsecutiveAndNonOverlapping) {
  const auto ref = wiggle(60.0);
  const auto r = relative_error(ref, ref, 7.0);
  ASSERT_FALSE(r.segments.empty());
  EXPECT_EQ(r.segments.front().begin, 0u);
  for (std::size_t i = 1; i < r.segments.size(); ++i) EXPECT_EQ(r.segments[i].begin, r.segments[i - 1].end);
  for (const auto& s : r.segments) EXPECT_GE(s.length_m, 7.0 - 1e-9);
}

TEST(RelativeError, InvariantToRigidTransforms) {
  const auto ref = wiggle(70.0);
  const auto est = straight_line(70.0, 1.0, 10.0, [](StampedPose& p, double s) {
    p.translation.y() = 3.0 * std::sin(0.2 * s) * 1.05;
    p.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(0.01 * s, Eigen::Vector3d::UnitZ()));
  });
  const double base_t = rte(est, ref, 10.0);
  const double base_r = rre(est, ref, 10.0);
  ASSERT_GT(base_t, 0.0);

  Eigen::Isometry3d g = Eigen::Isometry3d::Identity();
  g.linear() = Eigen::AngleAxisd(0.7, Eigen::Vector3d(1, 2, 3).normalized()).toRotationMatrix();
  g.translation() = Eigen::Vector3d(4, -2, 9);
  EXPECT_NEAR(rte(transformed(est, g), transformed(ref, g), 10.0), base_t, 1e-9);
  EXPECT_NEAR(rre(transformed(est, g), transformed(ref, g), 10.0), base_r, 1e-9);

  Eigen::Isometry3d offset = Eigen::Isometry3d::Identity();
  offset.translation() = Eigen::Vector3d(5, 0, 0);
  EXPECT_NEAR(rte(transformed(ref, offset), ref, 10.0), 0.0, 1e-9);
  Eigen::Isometry3d yaw = Eigen::Isometry3d::Identity();
  yaw.linear() = Eigen::AngleAxisd(std::numbers::pi / 2, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  EXPECT_NEAR(rte(transformed(ref, yaw), ref, 10.0), 0.0, 1e-9);
  EXPECT_NEAR(rre(transformed(ref, yaw), ref, 10.0), 0.0, 1e-6);
}

TEST(RelativeError, Errors) {
  const auto ref = straight_line(20.0);
  try {
    relative_error(ref, ref, 30.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::TrajectoryTooShort);
  }
  std::vector<StampedPose> shifted = ref.poses();
  for (auto& p : shifted) p.timestamp += 1000.0;
  try {
    relative_error(Trajectory(shifted), ref, 5.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NoOverlap);
  }
  EXPECT_THROW(relative_error(ref, ref, 0.0), Error);
}

TEST(Associate, NearestWithinTolerance) {
  const auto ref = straight_line(10.0);
  std::vector<StampedPose> late = ref.poses();
  for (auto& p : late) p.timestamp += 0.04;
  EXPECT_EQ(associate(Trajectory(late), ref, 0.15).size(), ref.size());
  // Half a period late at 1 Hz: every nearest neighbour sits 0.5 s away.
  const auto sparse = straight_line(10.0, 1.0, 1.0);
  std::vector<StampedPose> off = sparse.poses();
  for (auto& p : off) p.timestamp += 0.5;
  EXPECT_TRUE(associate(Trajectory(off), sparse, 0.15).empty());
}

TEST(Associate, SparseEstimatePairsWithCoincidentReferencePoses) {
  const auto ref = straight_line(10.0);            // 10 Hz
  const auto est = straight_line(10.0, 1.0, 5.0);  // 5 Hz, every other reference stamp
  const auto pairs = associate(est, ref, 0.15);
  ASSERT_EQ(pairs.size(), est.size());
  for (const auto& [i, j] : pairs) EXPECT_DOUBLE_EQ(ref[i].timestamp, est[j].timestamp);
  // A uniform scale error then reads the same at either rate.
  EXPECT_NEAR(rte(straight_line(10.0, 1.03, 5.0), ref, 1.0), 3.0, 1e-9);
}

TEST(TrajectoryType, RejectsBadInput) {
  StampedPose a, b;
  b.timestamp = 0.0;
  try {
    Trajectory({a, b});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonMonotoneTimestamps);
  }
  b.timestamp = 1.0;
  b.rotation = Eigen::Quaterniond(1.0, 0.1, 0.0, 0.0);
  try {
    Trajectory({a, b});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::BadQuaternion);
  }
}

TEST(Aggregate, MeanOverPairs) {
  auto r = [](double t, double q) {
    RelativeErrorResult x;
    x.rte_percent = t;
    x.rre_deg_per_m = q;
    return x;
  };
  EXPECT_DOUBLE_EQ(aggregate({{r(7.0, 0.3)}}).rte_percent, 7.0);
  EXPECT_DOUBLE_EQ(aggregate({{r(10, 0)}, {r(20, 0)}}).rte_percent, 15.0);
  EXPECT_DOUBLE_EQ(aggregate({{r(1, 0), r(2, 0), r(3, 0)}}).rte_percent, 2.0);
  EXPECT_DOUBLE_EQ(aggregate({{r(3, 0)}, {r(1, 0), r(2, 0)}}).rte_percent,
                   aggregate({{r(2, 0), r(1, 0)}, {r(3, 0)}}).rte_percent);
  EXPECT_THROW(aggregate({}), Error);
  EXPECT_THROW(aggregate({{}}), Error);
}

TEST(EvaluateWindows, StandardWindowsCount) {
  const auto ref = straight_line(60.0);
  EXPECT_EQ(MetricConfig::standard().windows_m.size(), 46u);
  EXPECT_EQ(evaluate_windows(ref, ref, MetricConfig::standard()).size(), 46u);
  MetricConfig bad;
  bad.windows_m = {5, 5};
  EXPECT_THROW(evaluate_windows(ref, ref, bad), Error);
}

TEST(TimeBeforeFailure, Examples) {
  const auto ref = straight_line(120.0);
  EXPECT_DOUBLE_EQ(time_before_failure(ref, ref, 120.0), 120.0);
  EXPECT_DOUBLE_EQ(time_before_failure(Trajectory{}, ref, 120.0), 0.0);

  std::vector<StampedPose> head;
  for (const auto& p : ref.poses())
    if (p.timestamp <= 60.0 + 1e-9) head.push_back(p);
  EXPECT_NEAR(time_before_failure(Trajectory(head), ref, 120.0), 60.0, 1e-9);
}

TEST(TimeBeforeFailure, DivergenceMatchesBruteForceScan) {
  const auto ref = straight_line(120.0);
  // Tracks until 40 s, then runs backwards at 2 m/s.
  const auto est = straight_line(120.0, 1.0, 10.0, [](StampedPose& p, double) {
    if (p.timestamp > 40.0) p.translation.x() = 40.0 - 2.0 * (p.timestamp - 40.0);
  });
  // Brute force: first pose whose trailing >=5 m segment (latest start) exceeds 100%.
  double expect = 120.0;
  for (std::size_t k = 1; k < ref.size() && expect == 120.0; ++k) {
    std::size_t a = k;
    while (a > 0 && ref[k].translation.x() - ref[a].translation.x() < 5.0 - 1e-12) --a;
    if (ref[k].translation.x() - ref[a].translation.x() < 5.0 - 1e-12) continue;
    const double err = std::abs((est[k].translation.x() - est[a].translation.x()) -
                                (ref[k].translation.x() - ref[a].translation.x()));
    if (err / 5.0 * 100.0 > 100.0) expect = ref[k].timestamp;
  }
  ASSERT_LT(expect, 120.0);
  EXPECT_NEAR(time_before_failure(est, ref, 120.0), expect, 1e-9);
  EXPECT_FALSE(is_success(time_before_failure(est, ref, 120.0), 120.0));
}

TEST(IsSuccess, Examples) {
  EXPECT_TRUE(is_success(120, 120));
  EXPECT_FALSE(is_success(60, 120));
  EXPECT_FALSE(is_success(0, 120));
}
