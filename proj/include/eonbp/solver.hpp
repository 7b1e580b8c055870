#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>

namespace eonbp {

// Sparse generator of a continuous-time chain: off-diagonals are transition
// rates, the diagonal makes each row sum to zero.
struct SparseRateSystem {
  int dimension = 0;
  std::vector<Eigen::Triplet<double>> entries;
};

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SolveOptions {
  double tolerance = 1e-10;
  int max_iters = 0;  // 0 -> 10 * dimension
  // Above this size the dense path is no longer attempted.
  int dense_limit = 2000;
};

namespace detail {

inline Eigen::SparseMatrix<double> to_sparse(const SparseRateSystem& sys) {
  Eigen::SparseMatrix<double> q(sys.dimension, sys.dimension);
  q.setFromTriplets(sys.entries.begin(), sys.entries.end());
  return q;
}

// max_i |(pi Q)_i| plus the normalization defect.
inline double stationarity_residual(const Eigen::SparseMatrix<double>& q,
                                    const Eigen::VectorXd& pi) {
  Eigen::VectorXd r = q.transpose() * pi;
  return std::max(r.cwiseAbs().maxCoeff(), std::abs(pi.sum() - 1.0));
}

// Augmented least-squares system [Q^T; 1^T] pi = [0; 1].
inline Eigen::SparseMatrix<double> augmented(
    const Eigen::SparseMatrix<double>& q) {
  const int n = static_cast<int>(q.rows());
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(q.nonZeros()) + n);
  for (int col = 0; col < q.outerSize(); ++col)
    for (Eigen::SparseMatrix<double>::InnerIterator it(q, col); it; ++it)
      trips.emplace_back(col, static_cast<int>(it.row()), it.value());
  for (int j = 0; j < n; ++j) trips.emplace_back(n, j, 1.0);
  Eigen::SparseMatrix<double> a(n + 1, n);
  a.setFromTriplets(trips.begin(), trips.end());
  return a;
}

inline Eigen::VectorXd clamp_and_normalize(Eigen::VectorXd pi,
                                           double clamp_limit = 1e-8) {
  double worst = 0.0;
  for (int i = 0; i < pi.size(); ++i)
    if (pi[i] < 0) {
      worst = std::max(worst, -pi[i]);
      pi[i] = 0.0;
    }
  if (worst > clamp_limit)
    throw SolverError("stationary solve produced a negative component of " +
                      std::to_string(worst));
  const double total = pi.sum();
  if (total <= 0) throw SolverError("stationary solve returned a zero vector");
  return pi / total;
}

}  // namespace detail

inline Eigen::VectorXd solve_stationary_iterative(const SparseRateSystem& sys,
                                                  const SolveOptions& opts = {}) {
  const auto q = detail::to_sparse(sys);
  const auto a = detail::augmented(q);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(sys.dimension + 1);
  b[sys.dimension] = 1.0;

  Eigen::LeastSquaresConjugateGradient<Eigen::SparseMatrix<double>> lscg;
  lscg.setTolerance(opts.tolerance * 1e-2);
  const int iters =
      opts.max_iters > 0 ? opts.max_iters : std::max(1000, 10 * sys.dimension);
  lscg.setMaxIterations(iters);
  lscg.compute(a);
  Eigen::VectorXd guess =
      Eigen::VectorXd::Constant(sys.dimension, 1.0 / sys.dimension);
  Eigen::VectorXd pi = lscg.solveWithGuess(b, guess);
  pi = detail::clamp_and_normalize(std::move(pi));
  const double res = detail::stationarity_residual(q, pi);
  if (res > opts.tolerance)
    throw SolverError("iterative stationary solve stalled at residual " +
                      std::to_string(res));
  return pi;
}

inline Eigen::VectorXd solve_stationary_dense(const SparseRateSystem& sys,
                                              const SolveOptions& opts = {}) {
  const auto q = detail::to_sparse(sys);
  const int n = sys.dimension;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n + 1, n);
  a.topRows(n) = Eigen::MatrixXd(q).transpose();
  a.row(n).setOnes();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n + 1);
  b[n] = 1.0;
  Eigen::VectorXd pi = a.colPivHouseholderQr().solve(b);
  pi = detail::clamp_and_normalize(std::move(pi));
  const double res = detail::stationarity_residual(q, pi);
  if (res > opts.tolerance)
    throw SolverError("dense stationary solve stalled at residual " +
                      std::to_string(res));
  return pi;
}

// pi Q = 0 with sum(pi) = 1: iterative least squares first, dense fallback
// for small systems.
inline Eigen::VectorXd solve_stationary(const SparseRateSystem& sys,
                                        const SolveOptions& opts = {}) {
  if (sys.dimension <= 0) throw SolverError("empty system");
  if (sys.dimension == 1) return Eigen::VectorXd::Ones(1);
  try {
    return solve_stationary_iterative(sys, opts);
  } catch (const SolverError&) {
    if (sys.dimension > opts.dense_limit) throw;
    return solve_stationary_dense(sys, opts);
  }
}

}  // namespace eonbp
