#pragma once

#include <limits>
#include <optional>
#include <vector>

#include "multiverse/stats/common.hpp"

namespace multiverse::stats {

/// Two-sample Kolmogorov-Smirnov statistic sup_x |F_a(x) - F_b(x)| between
/// the empirical distribution functions of a and b.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar ks_statistic(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  if (a.size() == 0 || b.size() == 0) throw StatsError("KS statistic needs two non-empty samples");
  const Vector<Scalar> sa = sorted(a);
  const Vector<Scalar> sb = sorted(b.template cast<Scalar>());
  const Eigen::Index na = sa.size(), nb = sb.size();
  // |i/na - j/nb| kept as the integer |i nb - j na| so the result is the
  // correctly rounded fraction
  Eigen::Index i = 0, j = 0, best = 0;
  while (i < na && j < nb) {
    // step past every copy of the smaller value in both samples at once
    const Scalar x = std::min(sa(i), sb(j));
    while (i < na && sa(i) == x) ++i;
    while (j < nb && sb(j) == x) ++j;
    best = std::max(best, std::abs(i * nb - j * na));
  }
  return Scalar(best) / (Scalar(na) * Scalar(nb));
}

/// Median of the pairwise KS statistics over all option pairs. Empty groups
/// are ignored; fewer than two non-empty groups leave the score undefined.
template <typename Scalar>
std::optional<Scalar> ks_sensitivity(const std::vector<Vector<Scalar>>& groups) {
  std::vector<const Vector<Scalar>*> present;
  for (const auto& g : groups)
    if (g.size() > 0) present.push_back(&g);
  if (present.size() < 2) return std::nullopt;
  std::vector<Scalar> k;
  for (std::size_t i = 0; i < present.size(); ++i)
    for (std::size_t j = i + 1; j < present.size(); ++j) k.push_back(ks_statistic(*present[i], *present[j]));
  std::sort(k.begin(), k.end());
  const std::size_t m = k.size();
  return m % 2 ? k[m / 2] : (k[m / 2 - 1] + k[m / 2]) / Scalar(2);
}

/// One-way ANOVA F = MSB / MSW. Undefined with fewer than two non-empty
/// groups or no residual degrees of freedom. No spread at all gives 0; a
/// between-group shift with zero within-group spread gives +infinity.
template <typename Scalar>
std::optional<Scalar> f_sensitivity(const std::vector<Vector<Scalar>>& groups) {
  Eigen::Index n = 0, k = 0;
  Scalar total(0);
  for (const auto& g : groups) {
    if (g.size() == 0) continue;
    ++k;
    n += g.size();
    total += g.sum();
  }
  if (k < 2 || n <= k) return std::nullopt;
  const Scalar grand = total / Scalar(n);
  Scalar ssb(0), ssw(0);
  for (const auto& g : groups) {
    if (g.size() == 0) continue;
    const Scalar mean = g.mean();
    ssb += Scalar(g.size()) * (mean - grand) * (mean - grand);
    ssw += (g.array() - mean).square().sum();
  }
  const Scalar msb = ssb / Scalar(k - 1);
  const Scalar msw = ssw / Scalar(n - k);
  // rounding noise of the means should not turn a constant sample into +inf
  const Scalar scale = std::max(Scalar(1), std::abs(grand));
  const Scalar eps = std::numeric_limits<Scalar>::epsilon() * scale * scale * Scalar(n);
  if (msw <= eps) return msb <= eps ? Scalar(0) : std::numeric_limits<Scalar>::infinity();
  return msb / msw;
}

}  // namespace multiverse::stats
