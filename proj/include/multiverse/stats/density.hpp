#pragma once

#include <limits>
#include <optional>
#include <vector>

#include "multiverse/stats/common.hpp"

namespace multiverse::stats {

/// Silverman's rule 0.9 min(sd, IQR/1.34) n^(-1/5). When one spread measure
/// is zero the other is used; when both are, the bandwidth falls back to a
/// tenth of the magnitude of the data (or 0.1 around zero).
template <typename Derived>
typename Derived::Scalar silverman_bandwidth(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  if (x.size() == 0) throw StatsError("bandwidth of an empty sample");
  const Vector<Scalar> s = sorted(x);
  const Scalar sd = std::sqrt(sample_variance(s));
  const Scalar iqr = (percentile_sorted(s, 0.75) - percentile_sorted(s, 0.25)) / Scalar(1.34);
  Scalar spread = std::min(sd, iqr);
  if (!(spread > 0)) spread = std::max(sd, iqr);
  if (!(spread > 0)) spread = Scalar(0.1) * std::max(Scalar(1), s.cwiseAbs().maxCoeff());
  return Scalar(0.9) * spread * std::pow(Scalar(s.size()), Scalar(-0.2));
}

/// Gaussian kernel density estimate of x with bandwidth h, evaluated on grid.
/// Integrates to one over the real line.
template <typename DerivedX, typename DerivedG>
Vector<typename DerivedX::Scalar> gaussian_kde(const Eigen::MatrixBase<DerivedX>& x,
                                               const Eigen::MatrixBase<DerivedG>& grid,
                                               typename DerivedX::Scalar h) {
  using Scalar = typename DerivedX::Scalar;
  if (x.size() == 0) throw StatsError("density of an empty sample");
  if (!(h > 0)) throw StatsError("bandwidth must be positive");
  const Scalar norm = Scalar(1) / (Scalar(x.size()) * h * std::sqrt(Scalar(2) * Scalar(EIGEN_PI)));
  Vector<Scalar> out(grid.size());
  for (Eigen::Index g = 0; g < grid.size(); ++g)
    out(g) = (Scalar(-0.5) * ((x.array() - grid(g)) / h).square()).exp().sum() * norm;
  return out;
}

template <typename Scalar>
struct DensityCurve {
  Vector<Scalar> grid;
  Vector<Scalar> values;
  Scalar scale_factor = Scalar(1);  // multiply values by this to get total area = universe count
};

/// Shared evaluation grid for several samples: [min, max] of all values padded
/// by three times the largest bandwidth.
template <typename Scalar>
Vector<Scalar> density_grid(const std::vector<Vector<Scalar>>& samples, Eigen::Index size = 256) {
  if (size < 2) throw StatsError("grid needs at least two points");
  Scalar lo = std::numeric_limits<Scalar>::infinity(), hi = -lo, h = Scalar(0);
  for (const auto& x : samples) {
    if (x.size() == 0) continue;
    lo = std::min(lo, x.minCoeff());
    hi = std::max(hi, x.maxCoeff());
    h = std::max(h, silverman_bandwidth(x));
  }
  if (!(lo <= hi)) throw StatsError("no draws to estimate a density from; use point estimates instead");
  return Vector<Scalar>::LinSpaced(size, lo - 3 * h, hi + 3 * h);
}

/// Sum of per-sample KDEs f_i on the given grid, optionally weighted
/// (sum of w_i f_i). Samples with zero size are skipped. The scale factor
/// rescales the curve to an area equal to the number of samples used.
template <typename Scalar>
DensityCurve<Scalar> aggregate_density_on(const std::vector<Vector<Scalar>>& samples, const Vector<Scalar>& grid,
                                          const std::optional<Vector<Scalar>>& weights = std::nullopt) {
  if (weights && weights->size() != static_cast<Eigen::Index>(samples.size()))
    throw StatsError("one weight per sample required");
  DensityCurve<Scalar> c;
  c.grid = grid;
  c.values = Vector<Scalar>::Zero(grid.size());
  Eigen::Index used = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].size() == 0) continue;
    ++used;
    const Scalar w = weights ? (*weights)(i) : Scalar(1);
    if (w == Scalar(0)) continue;
    c.values += w * gaussian_kde(samples[i], c.grid, silverman_bandwidth(samples[i]));
  }
  if (used == 0) throw StatsError("no draws to estimate a density from; use point estimates instead");
  const Scalar area = trapezoid(c.grid, c.values);
  c.scale_factor = area > 0 ? Scalar(used) / area : Scalar(0);
  return c;
}

template <typename Scalar>
DensityCurve<Scalar> aggregate_density(const std::vector<Vector<Scalar>>& samples, Eigen::Index grid_size = 256,
                                       const std::optional<Vector<Scalar>>& weights = std::nullopt) {
  return aggregate_density_on(samples, density_grid(samples, grid_size), weights);
}

/// Density over point estimates alone: one kernel per estimate with a common
/// Silverman bandwidth, weighted like aggregate_density_on, so each universe
/// contributes unit area.
template <typename Scalar>
DensityCurve<Scalar> point_density_on(const Vector<Scalar>& estimates, const Vector<Scalar>& grid,
                                      const std::optional<Vector<Scalar>>& weights = std::nullopt) {
  if (estimates.size() == 0) throw StatsError("no estimates to estimate a density from");
  if (weights && weights->size() != estimates.size()) throw StatsError("one weight per estimate required");
  const Scalar h = silverman_bandwidth(estimates);
  DensityCurve<Scalar> c;
  c.grid = grid;
  c.values = Vector<Scalar>::Zero(grid.size());
  for (Eigen::Index i = 0; i < estimates.size(); ++i) {
    const Scalar w = weights ? (*weights)(i) : Scalar(1);
    if (w != Scalar(0)) c.values += w * gaussian_kde(estimates.segment(i, 1), grid, h);
  }
  const Scalar area = trapezoid(c.grid, c.values);
  c.scale_factor = area > 0 ? Scalar(estimates.size()) / area : Scalar(0);
  return c;
}

template <typename Scalar>
DensityCurve<Scalar> point_density(const Vector<Scalar>& estimates, Eigen::Index grid_size = 256,
                                   const std::optional<Vector<Scalar>>& weights = std::nullopt) {
  if (estimates.size() == 0) throw StatsError("no estimates to estimate a density from");
  const Scalar h = silverman_bandwidth(estimates);
  const Vector<Scalar> grid =
      Vector<Scalar>::LinSpaced(grid_size, estimates.minCoeff() - 3 * h, estimates.maxCoeff() + 3 * h);
  return point_density_on(estimates, grid, weights);
}

/// Running trapezoid integral of a density, normalised to end at one.
template <typename DerivedX, typename DerivedY>
Vector<typename DerivedY::Scalar> cumulative(const Eigen::MatrixBase<DerivedX>& grid, const Eigen::MatrixBase<DerivedY>& y) {
  using Scalar = typename DerivedY::Scalar;
  Vector<Scalar> c = Vector<Scalar>::Zero(y.size());
  for (Eigen::Index i = 1; i < y.size(); ++i) c(i) = c(i - 1) + (grid(i) - grid(i - 1)) * (y(i) + y(i - 1)) / Scalar(2);
  if (y.size() > 0 && c(y.size() - 1) > 0) c /= c(y.size() - 1);
  return c;
}

template <typename Derived>
typename Derived::Scalar density_mean(const Eigen::MatrixBase<Derived>& grid, const Eigen::MatrixBase<Derived>& values) {
  using Scalar = typename Derived::Scalar;
  const Scalar area = trapezoid(grid, values);
  if (!(area > 0)) return Scalar(0);
  return trapezoid(grid, grid.cwiseProduct(values)) / area;
}

template <typename Derived>
typename Derived::Scalar density_sd(const Eigen::MatrixBase<Derived>& grid, const Eigen::MatrixBase<Derived>& values) {
  using Scalar = typename Derived::Scalar;
  const Scalar area = trapezoid(grid, values);
  if (!(area > 0)) return Scalar(0);
  const Scalar mu = density_mean(grid, values);
  const Vector<Scalar> dev = (grid.array() - mu).square().matrix();
  return std::sqrt(trapezoid(grid, dev.cwiseProduct(values)) / area);
}

}  // namespace multiverse::stats
