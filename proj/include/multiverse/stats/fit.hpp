#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "multiverse/stats/common.hpp"

namespace multiverse::stats {

template <typename Scalar>
struct Fold {
  Vector<Scalar> observed;
  Vector<Scalar> predicted;
};

/// Cross-validated NRMSE: sqrt of the mean per-fold MSE divided by the span
/// of all observed values. nullopt when the observed values are constant.
template <typename Scalar>
std::optional<Scalar> nrmse(const std::vector<Fold<Scalar>>& folds) {
  if (folds.empty()) throw StatsError("NRMSE needs at least one fold");
  Scalar mse(0), lo = std::numeric_limits<Scalar>::infinity(), hi = -lo;
  for (const auto& f : folds) {
    if (f.observed.size() == 0 || f.observed.size() != f.predicted.size())
      throw StatsError("each fold needs matching, non-empty observed and predicted values");
    mse += (f.observed - f.predicted).squaredNorm() / Scalar(f.observed.size());
    lo = std::min(lo, f.observed.minCoeff());
    hi = std::max(hi, f.observed.maxCoeff());
  }
  if (!(hi > lo)) return std::nullopt;
  return std::sqrt(mse / Scalar(folds.size())) / (hi - lo);
}

template <typename DerivedA, typename DerivedB>
std::optional<typename DerivedA::Scalar> nrmse(const Eigen::MatrixBase<DerivedA>& observed,
                                               const Eigen::MatrixBase<DerivedB>& predicted) {
  using Scalar = typename DerivedA::Scalar;
  return nrmse<Scalar>({Fold<Scalar>{observed, predicted}});
}

/// min(k, n) sorted values taken at the evenly spaced percentiles
/// (i - 0.5) / k by nearest rank, so every output is an input value.
template <typename Derived>
Vector<typename Derived::Scalar> quantile_sample(const Eigen::MatrixBase<Derived>& values, Eigen::Index k) {
  using Scalar = typename Derived::Scalar;
  if (values.size() == 0) throw StatsError("quantile sample of an empty set");
  if (k < 1) throw StatsError("quantile sample size must be positive");
  const Vector<Scalar> s = sorted(values);
  const Eigen::Index n = s.size();
  if (k >= n) return s;
  Vector<Scalar> out(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const double p = (static_cast<double>(i) + 0.5) / static_cast<double>(k);
    // nearest rank: smallest r with r / n >= p; the small slack absorbs
    // rounding in p * n for exact multiples
    Eigen::Index r = static_cast<Eigen::Index>(std::ceil(p * n - 1e-9));
    out(i) = s(std::clamp<Eigen::Index>(r, 1, n) - 1);
  }
  return out;
}

}  // namespace multiverse::stats
