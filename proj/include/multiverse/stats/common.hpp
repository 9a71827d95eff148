#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace multiverse::stats {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

class StatsError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Ascending copy of any vector expression.
template <typename Derived>
Vector<typename Derived::Scalar> sorted(const Eigen::MatrixBase<Derived>& x) {
  Vector<typename Derived::Scalar> s = x;
  std::sort(s.data(), s.data() + s.size());
  return s;
}

template <typename Derived>
typename Derived::Scalar sample_variance(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  if (x.size() < 2) return Scalar(0);
  return (x.array() - x.mean()).square().sum() / Scalar(x.size() - 1);
}

/// Percentile of already sorted data, linear interpolation between order
/// statistics at h = (n - 1) p (Hyndman-Fan type 7).
template <typename Derived>
typename Derived::Scalar percentile_sorted(const Eigen::MatrixBase<Derived>& s, double p) {
  using Scalar = typename Derived::Scalar;
  if (s.size() == 0) throw StatsError("percentile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw StatsError("percentile outside [0, 1]");
  const double h = (s.size() - 1) * p;
  const Eigen::Index lo = static_cast<Eigen::Index>(std::floor(h));
  const Eigen::Index hi = std::min<Eigen::Index>(lo + 1, s.size() - 1);
  const Scalar frac = Scalar(h - lo);
  return s(lo) + frac * (s(hi) - s(lo));
}

template <typename Derived>
typename Derived::Scalar percentile(const Eigen::MatrixBase<Derived>& x, double p) {
  return percentile_sorted(sorted(x), p);
}

/// Area under a sampled curve by the trapezoid rule.
template <typename DerivedX, typename DerivedY>
typename DerivedY::Scalar trapezoid(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y) {
  using Scalar = typename DerivedY::Scalar;
  const Eigen::Index n = x.size();
  if (n < 2) return Scalar(0);
  return ((x.tail(n - 1) - x.head(n - 1)).array() * (y.tail(n - 1) + y.head(n - 1)).array()).sum() / Scalar(2);
}

template <typename Scalar>
Vector<Scalar> to_vector(const std::vector<Scalar>& v) {
  return Eigen::Map<const Vector<Scalar>>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace multiverse::stats
