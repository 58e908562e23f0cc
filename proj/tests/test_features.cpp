#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "expobench/emulator.hpp"
#include "expobench/features.hpp"
#include "expobench/synth.hpp"

using namespace expobench;

namespace {

// Radius-3 ring built from the distance band [2.5, 3.5), ordered by angle.
std::vector<std::pair<int, int>> oracle_ring() {
  std::vector<std::pair<int, int>> ring;
  for (int dy = -3; dy <= 3; ++dy)
    for (int dx = -3; dx <= 3; ++dx) {
      const double r = std::hypot(dx, dy);
      if (r >= 2.5 && r < 3.5) ring.emplace_back(dx, dy);
    }
  std::sort(ring.begin(), ring.end(),
            [](auto a, auto b) { return std::atan2(a.second, a.first) < std::atan2(b.second, b.first); });
  return ring;
}

// Brute-force segment test: any 9 contiguous ring pixels all brighter or all darker.
double oracle_fast(const Image12& img, int x, int y, int t) {
  static const auto ring = oracle_ring();
  const int c = img.at(x, y) / 16;
  std::vector<int> v;
  for (auto [dx, dy] : ring) v.push_back(img.at(x + dx, y + dy) / 16);
  const int n = static_cast<int>(v.size());
  double best = 0.0;
  for (int sign : {1, -1}) {
    bool corner = false;
    for (int start = 0; start < n && !corner; ++start) {
      bool all = true;
      for (int k = 0; k < 9 && all; ++k) all = sign * (v[(start + k) % n] - c) > t;
      corner = all;
    }
    if (!corner) continue;
    double s = 0.0;
    for (int p : v)
      if (sign * (p - c) > t) s += sign * (p - c) - t;
    best = std::max(best, s);
  }
  return best;
}

Image12 random_blocks(int w, int h, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_int_distribution<int> dn(0, 4095);
  Image12 img(w, h);
  const int cell = 4;
  std::vector<int> cells(static_cast<std::size_t>((w / cell + 1) * (h / cell + 1)));
  for (auto& c : cells) c = dn(rng);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      img.set(x, y, static_cast<std::uint16_t>(cells[static_cast<std::size_t>((y / cell) * (w / cell + 1) + x / cell)]));
  return img;
}

FeatureSet random_descriptors(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  FeatureSet fs;
  for (std::size_t i = 0; i < n; ++i) {
    fs.keypoints.push_back({static_cast<int>(i), 0, 1.0});
    fs.descriptors.push_back({rng(), rng(), rng(), rng()});
  }
  return fs;
}

}  // namespace

TEST(Fast, RingMatchesIndependentConstruction) {
  const auto ring = oracle_ring();
  ASSERT_EQ(ring.size(), 16u);
  for (auto [dx, dy] : ring) {
    const bool found = std::any_of(detail::kFastCircle.begin(), detail::kFastCircle.end(),
                                   [&](const auto& p) { return p[0] == dx && p[1] == dy; });
    EXPECT_TRUE(found) << dx << "," << dy;
  }
}

TEST(Fast, ScoreAgreesWithBruteForceEverywhere) {
  for (unsigned seed : {1u, 2u, 3u}) {
    const Image12 img = random_blocks(48, 40, seed);
    const ToneMapped tm(img);
    for (int y = 3; y < img.height() - 3; ++y)
      for (int x = 3; x < img.width() - 3; ++x)
        ASSERT_DOUBLE_EQ(detail::fast_score(tm, x, y, 20), oracle_fast(img, x, y, 20)) << x << "," << y;
  }
}

TEST(Detect, KeypointsAreStrictLocalMaximaOfOracleScore) {
  const Image12 img = random_blocks(64, 48, 9);
  const auto fs = detect(img, {100000, 20});
  ASSERT_FALSE(fs.empty());
  std::size_t oracle_count = 0;
  for (int y = 3; y < img.height() - 3; ++y)
    for (int x = 3; x < img.width() - 3; ++x) {
      const double s = oracle_fast(img, x, y, 20);
      if (s <= 0.0) continue;
      bool is_max = true;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if (nx < 3 || ny < 3 || nx >= img.width() - 3 || ny >= img.height() - 3) continue;
          if (oracle_fast(img, nx, ny, 20) > s) is_max = false;
        }
      oracle_count += is_max;
    }
  EXPECT_EQ(fs.size(), oracle_count);
  for (std::size_t i = 1; i < fs.size(); ++i) EXPECT_GE(fs.keypoints[i - 1].response, fs.keypoints[i].response);
  for (const auto& kp : fs.keypoints) {
    EXPECT_GE(kp.x, 0);
    EXPECT_LT(kp.x, img.width());
    EXPECT_GE(kp.y, 0);
    EXPECT_LT(kp.y, img.height());
    EXPECT_DOUBLE_EQ(kp.response, oracle_fast(img, kp.x, kp.y, 20));
  }
}

TEST(Detect, ConstantImageIsEmpty) {
  EXPECT_TRUE(detect(Image12(64, 64, 1234)).empty());
  EXPECT_TRUE(detect(Image12(64, 64, 0)).empty());
}

TEST(Detect, SmallSquareCorners) {
  Image12 img(32, 32, 0);
  for (int y = 14; y <= 16; ++y)
    for (int x = 14; x <= 16; ++x) img.set(x, y, 4095);
  const auto fs = detect(img);
  ASSERT_FALSE(fs.empty());
  for (auto [cx, cy] : {std::pair{14, 14}, {16, 14}, {14, 16}, {16, 16}}) {
    const bool near = std::any_of(fs.keypoints.begin(), fs.keypoints.end(),
                                  [&](const Keypoint& k) { return std::hypot(k.x - cx, k.y - cy) <= 2.0; });
    EXPECT_TRUE(near) << cx << "," << cy;
  }
}

TEST(Detect, CapIsExact) {
  // 3 px cells: every cell corner passes the segment test.
  Image12 img(64, 64, 0);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      if ((x / 3 + y / 3) % 2) img.set(x, y, 4000);
  ASSERT_GT(detect(img).size(), 10u);
  EXPECT_EQ(detect(img, {10, 20}).size(), 10u);
}

TEST(Detect, InvariantToOneToneStepOffset) {
  SceneOptions o;
  o.noise_sigma = 3.0;
  const Image12 base = render(gradient_texture_scene(o), ExposureTime(8), 4);
  Image12 shifted(base.width(), base.height());
  for (std::size_t i = 0; i < base.size(); ++i) {
    ASSERT_LE(base.pixels()[i], kMaxDn - 16);
    shifted.pixels()[i] = static_cast<std::uint16_t>(base.pixels()[i] + 16);
  }
  const auto a = detect(base);
  const auto b = detect(shifted);
  ASSERT_FALSE(a.empty());
  EXPECT_EQ(a.keypoints, b.keypoints);
  EXPECT_EQ(a.descriptors, b.descriptors);
}

TEST(Match, SelfMatchIsFull) {
  const auto fs = random_descriptors(200, 1);
  EXPECT_EQ(match(fs, fs), fs.size());
}

TEST(Match, DistantSetsDoNotMatch) {
  FeatureSet a, b;
  for (int i = 0; i < 20; ++i) {
    a.keypoints.push_back({i, 0, 1});
    b.keypoints.push_back({i, 0, 1});
    const std::uint64_t bits = std::uint64_t{1} << i;
    a.descriptors.push_back({bits, 0, 0, 0});
    b.descriptors.push_back({~bits, ~std::uint64_t{0}, 0, 0});  // >= 100 bits away from every a
  }
  EXPECT_EQ(match(a, b), 0u);
}

TEST(Match, Symmetric) {
  for (unsigned s = 0; s < 10; ++s) {
    auto a = random_descriptors(60, s);
    auto b = random_descriptors(50, s + 100);
    // Plant near-copies so some pairs match.
    std::mt19937 rng(s);
    for (std::size_t i = 0; i < 25; ++i) {
      b.descriptors[i] = a.descriptors[i * 2];
      b.descriptors[i][rng() % 4] ^= std::uint64_t{1} << (rng() % 64);
    }
    EXPECT_EQ(match(a, b), match(b, a));
    EXPECT_GE(match(a, b), 20u);
  }
}

TEST(Match, NearbyExposuresShareKeypoints) {
  SceneOptions o;
  o.noise_sigma = 4.0;
  for (const auto& scene : {gradient_texture_scene(o), hdr_split_scene(o)}) {
    const auto seq = render_bracket_sequence(scene, standard_ladder(), 1, 2);
    const EmulatorConfig cfg;
    const auto a = detect(emulate(seq.frames[0], ExposureTime(4.0), cfg));
    const auto b = detect(emulate(seq.frames[0], ExposureTime(4.4), cfg));
    ASSERT_GT(std::min(a.size(), b.size()), 50u) << scene.name;
    EXPECT_GE(static_cast<double>(match(a, b)), 0.8 * static_cast<double>(std::min(a.size(), b.size()))) << scene.name;
  }
}

TEST(GridCoverage, Examples) {
  FeatureSet fs;
  EXPECT_DOUBLE_EQ(grid_coverage(fs, 200, 100, 20), 0.0);
  fs.keypoints.push_back({37, 51, 1});
  EXPECT_DOUBLE_EQ(grid_coverage(fs, 200, 100, 20), 1.0 / 400.0);
  fs.keypoints.clear();
  for (int cy = 0; cy < 20; ++cy)
    for (int cx = 0; cx < 20; ++cx) fs.keypoints.push_back({cx * 10 + 5, cy * 5 + 2, 1});
  EXPECT_DOUBLE_EQ(grid_coverage(fs, 200, 100, 20), 1.0);
  EXPECT_THROW(grid_coverage(fs, 200, 100, 0), Error);
}

TEST(GridCoverage, MonotoneUnderInsertion) {
  std::mt19937 rng(5);
  FeatureSet fs;
  double prev = 0.0;
  for (int i = 0; i < 500; ++i) {
    fs.keypoints.push_back({static_cast<int>(rng() % 160), static_cast<int>(rng() % 120), 1});
    const double c = grid_coverage(fs, 160, 120, 20);
    ASSERT_GE(c, prev);
    ASSERT_LE(c, 1.0);
    prev = c;
  }
}

TEST(FeatureReward, Examples) {
  EXPECT_DOUBLE_EQ(feature_reward(100, 40, 1.0, 1.0), 140.0);
  EXPECT_DOUBLE_EQ(feature_reward(100, 40, 0.0, 1.0), 40.0);
  EXPECT_DOUBLE_EQ(feature_reward(FeatureSet{}, 0, 1.0, 0.0), 0.0);
  EXPECT_THROW(feature_reward(1, 1, -1.0, 1.0), Error);
}

TEST(GradScore, RangeAndFlatImage) {
  EXPECT_DOUBLE_EQ(grad_score(Image12(16, 16, 2000)), 0.0);
  Image12 stripes(16, 16, 0);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; x += 2) stripes.set(x, y, 4095);
  const double g = grad_score(stripes);
  EXPECT_GT(g, 0.5);
  EXPECT_LE(g, 1.0);
}

TEST(EntropyScore, Extremes) {
  EXPECT_DOUBLE_EQ(entropy_score(Image12(16, 16, 100)), 0.0);
  Image12 ramp(256, 1);
  for (int x = 0; x < 256; ++x) ramp.set(x, 0, static_cast<std::uint16_t>(x * 16));
  EXPECT_NEAR(entropy_score(ramp), 1.0, 1e-12);
}
