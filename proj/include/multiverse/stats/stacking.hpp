#pragma once

#include "multiverse/stats/common.hpp"

namespace multiverse::stats {

/// sum_i log sum_m w_m exp(L_im) for an n x M matrix of held-out log
/// predictive densities, computed with a per-row log-sum-exp shift.
template <typename DerivedL, typename DerivedW>
typename DerivedL::Scalar stacking_objective(const Eigen::MatrixBase<DerivedL>& lpd, const Eigen::MatrixBase<DerivedW>& w) {
  using Scalar = typename DerivedL::Scalar;
  const Vector<Scalar> shift = lpd.rowwise().maxCoeff();
  const Vector<Scalar> mix = (lpd.colwise() - shift).array().exp().matrix() * w;
  return (shift.array() + mix.array().log()).sum();
}

template <typename Scalar>
struct StackingResult {
  Vector<Scalar> weights;
  Scalar objective = Scalar(0);
  int iterations = 0;
  bool converged = false;
};

/// Simplex weights maximising the stacking objective. Exponentiated-gradient
/// steps from the uniform start with an adaptive step size; a step is taken
/// only if it does not lower the objective, otherwise the multiplicative EM
/// update w_m g_m / n (which never does) is used. Stops when the relative
/// objective change drops below tol or after max_iter iterations.
template <typename Derived>
StackingResult<typename Derived::Scalar> stacking_weights(const Eigen::MatrixBase<Derived>& lpd,
                                                          double tol = 1e-8, int max_iter = 10000) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = lpd.rows(), m = lpd.cols();
  if (n < 1 || m < 1) throw StatsError("stacking needs at least one point and one universe");
  if (!lpd.allFinite()) throw StatsError("log predictive densities must be finite");

  StackingResult<Scalar> r;
  if (m == 1) {
    r.weights = Vector<Scalar>::Ones(1);
    r.objective = stacking_objective(lpd, r.weights);
    r.converged = true;
    return r;
  }

  const Vector<Scalar> shift = lpd.rowwise().maxCoeff();
  const Matrix<Scalar> P = (lpd.colwise() - shift).array().exp().matrix();
  const Scalar offset = shift.sum();
  auto objective = [&](const Vector<Scalar>& w) { return offset + (P * w).array().log().sum(); };

  Vector<Scalar> w = Vector<Scalar>::Constant(m, Scalar(1) / Scalar(m));
  Scalar f = objective(w);
  Scalar eta(1);
  for (r.iterations = 1; r.iterations <= max_iter; ++r.iterations) {
    const Vector<Scalar> g = P.transpose() * (P * w).cwiseInverse() / Scalar(n);  // mean gradient, w.g == 1

    Vector<Scalar> next = (w.array() * g.array()).matrix();
    next /= next.sum();
    Scalar f_next = objective(next);

    for (int tries = 0; tries < 4; ++tries) {
      Vector<Scalar> z = (eta * (g.array() - g.maxCoeff())).exp().matrix().cwiseProduct(w);
      z /= z.sum();
      const Scalar fz = objective(z);
      if (fz >= f_next) {
        next = z;
        f_next = fz;
        eta *= Scalar(2);
        break;
      }
      eta /= Scalar(4);
    }
    eta = std::clamp(eta, Scalar(1e-6), Scalar(1e6));

    const Scalar change = std::abs(f_next - f) / std::max(Scalar(1), std::abs(f));
    if (f_next >= f) {
      w = next;
      f = f_next;
    }
    if (change < Scalar(tol)) {
      r.converged = true;
      break;
    }
  }
  r.iterations = std::min(r.iterations, max_iter);
  r.weights = w / w.sum();
  r.objective = objective(r.weights);
  return r;
}

}  // namespace multiverse::stats
