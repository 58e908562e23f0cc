#include <gtest/gtest.h>

#include <cmath>

#include "expobench/emulator.hpp"
#include "expobench/synth.hpp"
#include "oracle.hpp"
#include "selection_oracle.hpp"

using namespace expobench;
using namespace expobench::testing;

namespace {

const std::vector<double> kLadder{1, 2, 4, 8, 16, 32};

}  // namespace

TEST(SelectSource, HigherBracketWhenUnsaturated) {
  std::vector<double> frac(6, 0.0);
  frac[4] = 0.003;
  const auto frame = frame_with_saturation(kLadder, frac);
  EXPECT_DOUBLE_EQ(select_source(frame, ExposureTime(9), {}).second.ms(), 16.0);
}

TEST(SelectSource, LowerBracketWhenHigherSaturated) {
  std::vector<double> frac(6, 0.0);
  frac[4] = 0.05;
  const auto frame = frame_with_saturation(kLadder, frac);
  EXPECT_DOUBLE_EQ(select_source(frame, ExposureTime(9), {}).second.ms(), 8.0);
}

TEST(SelectSource, OutOfRangeUsesNearestEnd) {
  const auto frame = frame_with_saturation(kLadder, std::vector<double>(6, 0.0));
  EXPECT_DOUBLE_EQ(select_source(frame, ExposureTime(64), {}).second.ms(), 32.0);
  EXPECT_DOUBLE_EQ(select_source(frame, ExposureTime(0.1), {}).second.ms(), 1.0);
}

TEST(SelectSource, DecisionTableAgreement) {
  const auto cases = all_selection_cases();
  ASSERT_GT(cases.size(), 100u);
  for (const auto& c : cases) {
    const auto frame = frame_for(c);
    EXPECT_EQ(select_source_index(frame, ExposureTime(c.target_ms), EmulatorConfig{}), expected_source(c)) << c.label;
  }
}

TEST(SelectSource, TotalAndScalesDownWhenUnsaturated) {
  const auto frame = frame_with_saturation(kLadder, std::vector<double>(6, 0.0));
  for (double t = 0.01; t < 100.0; t *= 1.07) {
    const auto idx = select_source_index(frame, ExposureTime(t), {});
    ASSERT_LT(idx, kLadder.size());
    if (t >= kLadder.front() && t <= kLadder.back()) EXPECT_LE(t / frame.exposures[idx].ms(), 1.0) << t;
  }
}

TEST(Emulate, IdentityHalvesValues) {
  BracketFrame f;
  f.images = {Image12(8, 8, 1000), Image12(8, 8, 2000)};
  f.exposures = {ExposureTime(4), ExposureTime(8)};
  const EmulatorConfig cfg;
  const Image12 out = rescale_exposure(f.images[0], ExposureTime(4), ExposureTime(2), cfg.crf);
  for (auto v : out.pixels()) EXPECT_NEAR(v, 500, 1);
}

TEST(Emulate, RatioOneIsLossless) {
  const auto scene = gradient_texture_scene({.crf = Crf::gamma(2.2), .noise_sigma = 3.0});
  const auto seq = render_bracket_sequence(scene, standard_ladder(), 1, 3);
  EmulatorConfig cfg;
  cfg.crf = Crf::gamma(2.2);
  for (std::size_t b = 0; b < seq.frames[0].images.size(); ++b) {
    const auto idx = select_source_index(seq.frames[0], seq.frames[0].exposures[b], cfg);
    ASSERT_EQ(idx, b);
    EXPECT_EQ(emulate(seq.frames[0], seq.frames[0].exposures[b], cfg), seq.frames[0].images[b]);
  }
}

TEST(Emulate, MonotoneInTargetForFixedSource) {
  const auto scene = calibration_scene(Crf::identity(), 0.0, 32, 1.0 / 8.0, 2.0);
  const Image12 src = render(scene, ExposureTime(4), 0);
  Image12 prev = rescale_exposure(src, ExposureTime(4), ExposureTime(0.5), Crf::identity());
  for (double t = 0.6; t < 40.0; t *= 1.1) {
    const Image12 cur = rescale_exposure(src, ExposureTime(4), ExposureTime(t), Crf::identity());
    for (std::size_t i = 0; i < cur.size(); ++i) ASSERT_GE(cur.pixels()[i], prev.pixels()[i]);
    prev = cur;
  }
}

TEST(Emulate, MatchesOracleRenderAtNineMs) {
  SceneOptions o;
  o.width = 96;
  o.height = 72;
  for (const auto& scene : {gradient_texture_scene(o), hdr_split_scene(o), day_cycle_scene(o)}) {
    const auto seq = render_bracket_sequence(scene, standard_ladder(), 1, 1);
    const EmulatorConfig cfg;
    const Image12 emulated = emulate(seq.frames[0], ExposureTime(9), cfg);
    const Image12 truth = render(scene, ExposureTime(9), 99);
    const auto [src, src_exp] = select_source(seq.frames[0], ExposureTime(9), cfg);
    double se = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (src.pixels()[i] == 0 || src.pixels()[i] == kMaxDn) continue;
      const double d = double(emulated.pixels()[i]) - truth.pixels()[i];
      se += d * d;
      ++n;
    }
    ASSERT_GT(n, 0u) << scene.name;
    EXPECT_LE(std::sqrt(se / n), 41.0) << scene.name;
  }
}

TEST(EmulationRmse, Examples) {
  const Image12 a(10, 10, 500);
  EXPECT_DOUBLE_EQ(emulation_rmse(a, a, NoiseProfile{}, ExposureTime(4)), 0.0);
  EXPECT_DOUBLE_EQ(emulation_rmse(a, Image12(10, 10, 510), NoiseProfile::constant(9.0), ExposureTime(4)), 1.0);
  EXPECT_DOUBLE_EQ(emulation_rmse(a, Image12(10, 10, 505), NoiseProfile::constant(9.0), ExposureTime(4)), 0.0);
  try {
    emulation_rmse(a, Image12(10, 11, 500), NoiseProfile{}, ExposureTime(4));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DimensionMismatch);
  }
}

TEST(EmulatorConfig, AlphaRange) {
  EXPECT_THROW((EmulatorConfig{0.0, {}}.validate()), Error);
  EXPECT_THROW((EmulatorConfig{1.5, {}}.validate()), Error);
  EXPECT_NO_THROW((EmulatorConfig{1.0, {}}.validate()));
}
