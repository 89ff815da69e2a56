#pragma once

// Lowest eigenpair of a real symmetric operator by Davidson iteration with a
// diagonal (Jacobi) preconditioner.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include "sqd/errors.hpp"
#include "sqd/random.hpp"

namespace sqd {

struct DavidsonOptions {
  double tolerance = 1e-8;  // on ||Hc - Ec||, relative to max(1, |E|)
  int max_iterations = 2000;
  int max_subspace = 24;
  int restart_keep = 4;
  Eigen::Index dense_threshold = 64;  // below this, a full eigensolve is used
  double start_perturbation = 1e-3;
  double precondition_floor = 1e-2;  // lower bound on |theta - H_ii|
};

struct EigenPair {
  double value = 0.0;
  Eigen::VectorXd vector;
  double residual = 0.0;
  int iterations = 0;
};

namespace detail {

/// Fixes the overall sign: the largest-magnitude entry (first on ties) is positive.
inline void canonical_sign(Eigen::VectorXd& v) {
  if (v.size() == 0) return;
  Eigen::Index imax = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (std::abs(v(i)) > std::abs(v(imax)) + 1e-14) imax = i;
  if (v(imax) < 0) v = -v;
}

/// Orthonormalizes `t` against the first `m` columns of `V` (two passes).
inline double orthogonalize(const Eigen::MatrixXd& V, Eigen::Index m, Eigen::VectorXd& t) {
  for (int pass = 0; pass < 2; ++pass)
    for (Eigen::Index j = 0; j < m; ++j) t -= V.col(j).dot(t) * V.col(j);
  return t.norm();
}

}  // namespace detail

/**
 * `apply(x, y)` must set y = H x for vectors of length `diag.size()`.
 * The start vector is the unit vector on the lowest diagonal entry, lightly
 * mixed with a fixed pseudo-random vector so that no symmetry sector of the
 * spectrum is unreachable. Output is deterministic.
 */
template <class Apply>
EigenPair davidson_ground(Apply&& apply, const Eigen::VectorXd& diag, const DavidsonOptions& opts = {},
                          const Eigen::VectorXd* guess = nullptr) {
  using Eigen::Index;
  using Eigen::MatrixXd;
  using Eigen::VectorXd;
  const Index n = diag.size();
  if (n == 0) throw DomainError("empty operator");
  EigenPair out;

  if (n <= opts.dense_threshold) {
    MatrixXd H(n, n);
    VectorXd e = VectorXd::Zero(n), col(n);
    for (Index j = 0; j < n; ++j) {
      e(j) = 1.0;
      apply(e, col);
      H.col(j) = col;
      e(j) = 0.0;
    }
    H = 0.5 * (H + H.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(H);
    out.value = es.eigenvalues()(0);
    out.vector = es.eigenvectors().col(0);
    detail::canonical_sign(out.vector);
    apply(out.vector, col);
    out.residual = (col - out.value * out.vector).norm();
    return out;
  }

  const Index max_sub = std::max<Index>(opts.max_subspace, 4);
  MatrixXd V(n, max_sub), AV(n, max_sub);
  VectorXd v(n);
  if (guess && guess->size() == n && guess->norm() > 0) {
    v = *guess;
  } else {
    Index imin = 0;
    diag.minCoeff(&imin);
    CounterRng rng(0x5d1a7e0b0c0ffeeULL);
    for (Index i = 0; i < n; ++i) v(i) = opts.start_perturbation * (rng.uniform() - 0.5);
    v(imin) += 1.0;
  }
  v.normalize();
  V.col(0) = v;
  VectorXd tmp(n);
  apply(v, tmp);
  AV.col(0) = tmp;
  Index m = 1;

  double best_residual = std::numeric_limits<double>::infinity();
  VectorXd x(n), r(n), t(n);
  for (int it = 1; it <= opts.max_iterations; ++it) {
    const MatrixXd T = V.leftCols(m).transpose() * AV.leftCols(m);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (T + T.transpose()));
    const double theta = es.eigenvalues()(0);
    const VectorXd s = es.eigenvectors().col(0);
    x.noalias() = V.leftCols(m) * s;
    r.noalias() = AV.leftCols(m) * s;
    r -= theta * x;
    const double rnorm = r.norm();
    best_residual = std::min(best_residual, rnorm);
    out.iterations = it;
    if (rnorm <= opts.tolerance * std::max(1.0, std::abs(theta))) {
      out.value = theta;
      out.vector = x / x.norm();
      detail::canonical_sign(out.vector);
      out.residual = rnorm;
      return out;
    }

    for (Index i = 0; i < n; ++i) {
      double denom = theta - diag(i);
      if (std::abs(denom) < opts.precondition_floor) denom = denom < 0 ? -opts.precondition_floor : opts.precondition_floor;
      t(i) = r(i) / denom;
    }

    if (m == max_sub) {
      const Index keep = std::clamp<Index>(opts.restart_keep, 1, m - 1);
      const MatrixXd Vk = V.leftCols(m) * es.eigenvectors().leftCols(keep);
      const MatrixXd AVk = AV.leftCols(m) * es.eigenvectors().leftCols(keep);
      V.leftCols(keep) = Vk;
      AV.leftCols(keep) = AVk;
      m = keep;
    }

    double tn = detail::orthogonalize(V, m, t);
    if (tn < 1e-10) {
      t = r;
      tn = detail::orthogonalize(V, m, t);
    }
    if (tn < 1e-14) {
      // Subspace is invariant: the Ritz pair is exact to working precision.
      out.value = theta;
      out.vector = x / x.norm();
      detail::canonical_sign(out.vector);
      out.residual = rnorm;
      return out;
    }
    t /= tn;
    V.col(m) = t;
    apply(t, tmp);
    AV.col(m) = tmp;
    ++m;
  }
  throw ConvergenceError("Davidson did not converge in " + std::to_string(opts.max_iterations) + " iterations",
                         best_residual);
}

/// Convenience overload for an assembled sparse symmetric matrix.
inline EigenPair davidson_ground(const Eigen::SparseMatrix<double>& H, const DavidsonOptions& opts = {},
                                 const Eigen::VectorXd* guess = nullptr) {
  if (H.rows() != H.cols()) throw DomainError("matrix is not square");
  const Eigen::VectorXd diag = H.diagonal();
  return davidson_ground([&](const Eigen::VectorXd& x, Eigen::VectorXd& y) { y.noalias() = H * x; }, diag, opts,
                         guess);
}

}  // namespace sqd
