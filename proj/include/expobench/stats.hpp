#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "expobench/error.hpp"

namespace expobench {

struct SampleSet {
  std::string method;
  std::string metric;
  std::vector<double> values;  // one per trajectory

  void validate() const {
    if (values.empty()) fail(ErrorKind::EmptyInput, "sample set '" + method + "/" + metric + "' is empty");
    for (double v : values)
      if (!std::isfinite(v)) fail(ErrorKind::InvalidArgument, "sample values must be finite");
  }
};

enum class Alternative {
  TwoSided,
  Greater,  // x tends to exceed y
  Less,     // x tends to fall below y
};

struct MannWhitneyResult {
  double u = 0.0;  // U of the first sample: pairs x > y, ties counted 1/2
  double p = 1.0;
  bool exact = false;
  bool degenerate = false;  // every value identical
};

namespace detail {

/// Midranks (1-based) of the pooled sample.
inline std::vector<double> midranks(std::span<const double> pooled) {
  std::vector<std::size_t> order(pooled.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pooled[a] < pooled[b]; });
  std::vector<double> ranks(pooled.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && pooled[order[j + 1]] == pooled[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

/// Null distribution of 2*U_x for samples of sizes (nx, ny) given the pooled
/// midranks: count of subsets of size nx per doubled rank sum.
inline std::vector<std::uint64_t> exact_u_counts(std::span<const double> ranks, std::size_t nx) {
  // Doubled midranks are integers.
  std::vector<int> r2(ranks.size());
  for (std::size_t i = 0; i < ranks.size(); ++i) r2[i] = static_cast<int>(std::lround(2.0 * ranks[i]));
  const int max_sum = std::accumulate(r2.begin(), r2.end(), 0);
  // counts[k][s]: subsets of size k with doubled rank sum s
  std::vector<std::vector<std::uint64_t>> counts(nx + 1, std::vector<std::uint64_t>(static_cast<std::size_t>(max_sum) + 1, 0));
  counts[0][0] = 1;
  for (int r : r2) {
    for (std::size_t k = nx; k >= 1; --k) {
      auto& dst = counts[k];
      const auto& src = counts[k - 1];
      for (int s = max_sum; s >= r; --s) dst[static_cast<std::size_t>(s)] += src[static_cast<std::size_t>(s - r)];
    }
  }
  // 2U = 2R - nx(nx+1)
  const int offset = static_cast<int>(nx * (nx + 1));
  std::vector<std::uint64_t> by_u2;
  for (int s = offset; s <= max_sum; ++s) {
    const std::size_t u2 = static_cast<std::size_t>(s - offset);
    if (by_u2.size() <= u2) by_u2.resize(u2 + 1, 0);
    by_u2[u2] += counts[nx][static_cast<std::size_t>(s)];
  }
  return by_u2;
}

inline double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

}  // namespace detail

/// Largest n_x * n_y for which p-values are computed by exact enumeration.
inline constexpr std::size_t kExactProductLimit = 400;

/// Two-sample Mann-Whitney U test.
inline MannWhitneyResult mann_whitney_u(std::span<const double> x, std::span<const double> y,
                                        Alternative alternative = Alternative::TwoSided,
                                        std::size_t exact_limit = kExactProductLimit) {
  if (x.empty() || y.empty()) fail(ErrorKind::EmptyInput, "Mann-Whitney U needs two non-empty samples");
  const std::size_t nx = x.size(), ny = y.size(), n = nx + ny;
  std::vector<double> pooled(x.begin(), x.end());
  pooled.insert(pooled.end(), y.begin(), y.end());
  const auto ranks = detail::midranks(pooled);
  const double rank_sum_x = std::accumulate(ranks.begin(), ranks.begin() + static_cast<std::ptrdiff_t>(nx), 0.0);

  MannWhitneyResult res;
  res.u = rank_sum_x - static_cast<double>(nx * (nx + 1)) / 2.0;
  if (std::all_of(pooled.begin(), pooled.end(), [&](double v) { return v == pooled.front(); })) {
    res.degenerate = true;
    res.p = 1.0;
    return res;
  }
  const double mean_u = static_cast<double>(nx * ny) / 2.0;

  if (nx * ny <= exact_limit) {
    res.exact = true;
    const auto counts = detail::exact_u_counts(ranks, nx);
    const auto u2 = static_cast<std::size_t>(std::lround(2.0 * res.u));
    double total = 0.0, le = 0.0, ge = 0.0;
    for (std::size_t k = 0; k < counts.size(); ++k) {
      const auto c = static_cast<double>(counts[k]);
      total += c;
      if (k <= u2) le += c;
      if (k >= u2) ge += c;
    }
    const double p_le = le / total;
    const double p_ge = ge / total;
    switch (alternative) {
      case Alternative::TwoSided: res.p = std::min(1.0, 2.0 * std::min(p_le, p_ge)); break;
      case Alternative::Greater: res.p = p_ge; break;
      case Alternative::Less: res.p = p_le; break;
    }
    return res;
  }

  // Normal approximation with tie-corrected variance and continuity correction.
  double tie_term = 0.0;
  {
    std::vector<double> sorted = pooled;
    std::sort(sorted.begin(), sorted.end());
    std::size_t i = 0;
    while (i < sorted.size()) {
      std::size_t j = i;
      while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
      const double t = static_cast<double>(j - i + 1);
      tie_term += t * t * t - t;
      i = j + 1;
    }
  }
  const double dn = static_cast<double>(n);
  const double var = static_cast<double>(nx * ny) / 12.0 * ((dn + 1.0) - tie_term / (dn * (dn - 1.0)));
  const double sd = std::sqrt(var);
  switch (alternative) {
    case Alternative::TwoSided: {
      const double dev = std::abs(res.u - mean_u) - 0.5;
      res.p = dev <= 0.0 ? 1.0 : std::min(1.0, 2.0 * detail::normal_sf(dev / sd));
      break;
    }
    case Alternative::Greater: res.p = detail::normal_sf((res.u - mean_u - 0.5) / sd); break;
    case Alternative::Less: res.p = detail::normal_sf((mean_u - res.u - 0.5) / sd); break;
  }
  return res;
}

inline double bonferroni(double beta, std::size_t n_test) {
  if (!(beta > 0.0 && beta < 1.0)) fail(ErrorKind::InvalidArgument, "beta must lie in (0, 1)");
  if (n_test < 1) fail(ErrorKind::InvalidArgument, "n_test must be >= 1");
  return beta / static_cast<double>(n_test);
}

enum class VerdictKind { Better, Worse, Equivalent };

constexpr std::string_view to_string(VerdictKind v) noexcept {
  switch (v) {
    case VerdictKind::Better: return "Better";
    case VerdictKind::Worse: return "Worse";
    case VerdictKind::Equivalent: return "Equivalent";
  }
  return "?";
}

/// Table glyph: up-triangle better, down-triangle worse, identical-to equivalent.
constexpr std::string_view glyph(VerdictKind v) noexcept {
  switch (v) {
    case VerdictKind::Better: return "▲";
    case VerdictKind::Worse: return "▼";
    case VerdictKind::Equivalent: return "≡";
  }
  return "?";
}

struct Verdict {
  std::string method;
  std::string metric;
  VerdictKind kind = VerdictKind::Equivalent;
  double u_statistic = 0.0;
  double p_two_sided = 1.0;
  double p_one_sided = 1.0;  // NaN when stage two did not run
  double corrected_beta = 0.05;
};

/// Two-stage comparison against the reference method: a two-sided test at the
/// Bonferroni-corrected level decides whether the distributions differ; if
/// they do, a one-sided test in the "better" direction decides Better, and
/// failing it means Worse.
inline Verdict verdict(const SampleSet& test, const SampleSet& reference, double beta, std::size_t n_test,
                       bool higher_is_better) {
  test.validate();
  reference.validate();
  if (test.metric != reference.metric) fail(ErrorKind::InvalidArgument, "verdict needs samples of the same metric");
  Verdict v;
  v.method = test.method;
  v.metric = test.metric;
  v.corrected_beta = bonferroni(beta, n_test);
  const auto stage1 = mann_whitney_u(test.values, reference.values, Alternative::TwoSided);
  v.u_statistic = stage1.u;
  v.p_two_sided = stage1.p;
  v.p_one_sided = std::numeric_limits<double>::quiet_NaN();
  if (!(stage1.p < v.corrected_beta)) {
    v.kind = VerdictKind::Equivalent;
    return v;
  }
  const auto stage2 =
      mann_whitney_u(test.values, reference.values, higher_is_better ? Alternative::Greater : Alternative::Less);
  v.p_one_sided = stage2.p;
  v.kind = stage2.p < v.corrected_beta ? VerdictKind::Better : VerdictKind::Worse;
  return v;
}

}  // namespace expobench
