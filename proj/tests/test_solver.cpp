#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "eonbp/solver.hpp"

using namespace eonbp;

namespace {

SparseRateSystem two_state(double a, double b) {
  SparseRateSystem sys;
  sys.dimension = 2;
  sys.entries = {{0, 1, a}, {0, 0, -a}, {1, 0, b}, {1, 1, -b}};
  return sys;
}

// Birth-death chain with up rates lam[i] (i -> i+1) and down rates mu[i]
// (i -> i-1). Detailed balance gives the stationary law in closed form,
// which serves as the independent oracle.
SparseRateSystem birth_death(const std::vector<double>& lam,
                             const std::vector<double>& mu) {
  const int n = static_cast<int>(lam.size()) + 1;
  SparseRateSystem sys;
  sys.dimension = n;
  std::vector<double> diag(n, 0.0);
  for (int i = 0; i + 1 < n; ++i) {
    sys.entries.emplace_back(i, i + 1, lam[i]);
    diag[i] += lam[i];
    sys.entries.emplace_back(i + 1, i, mu[i]);
    diag[i + 1] += mu[i];
  }
  for (int i = 0; i < n; ++i) sys.entries.emplace_back(i, i, -diag[i]);
  return sys;
}

}  // namespace

TEST_CASE("stationary solve: two-state closed form") {
  auto pi = solve_stationary(two_state(2.0, 3.0));
  CHECK(pi[0] == Catch::Approx(3.0 / 5.0).epsilon(1e-10));
  CHECK(pi[1] == Catch::Approx(2.0 / 5.0).epsilon(1e-10));
}

TEST_CASE("stationary solve: birth-death oracle and path agreement") {
  std::mt19937 gen(11);
  std::uniform_real_distribution<double> rate(0.05, 3.0);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 3 + trial % 12;
    std::vector<double> lam(n - 1), mu(n - 1);
    for (auto& v : lam) v = rate(gen);
    for (auto& v : mu) v = rate(gen);
    auto sys = birth_death(lam, mu);

    // Closed-form products.
    std::vector<double> expected(n, 1.0);
    for (int i = 1; i < n; ++i)
      expected[i] = expected[i - 1] * lam[i - 1] / mu[i - 1];
    double total = 0.0;
    for (double v : expected) total += v;
    for (double& v : expected) v /= total;

    auto pi_iter = solve_stationary_iterative(sys);
    auto pi_dense = solve_stationary_dense(sys);
    REQUIRE(pi_iter.size() == n);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      CHECK(pi_iter[i] == Catch::Approx(expected[i]).margin(1e-9));
      CHECK(std::abs(pi_iter[i] - pi_dense[i]) < 1e-8);
      sum += pi_iter[i];
    }
    CHECK(sum == Catch::Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("stationary solve: residual contract") {
  auto sys = birth_death({0.4, 0.9, 0.2}, {1.0, 1.0, 1.0});
  SolveOptions opts;
  opts.tolerance = 1e-10;
  auto pi = solve_stationary(sys, opts);
  auto q = detail::to_sparse(sys);
  CHECK(detail::stationarity_residual(q, pi) <= opts.tolerance);
}

TEST_CASE("stationary solve: degenerate inputs") {
  CHECK_THROWS_AS(solve_stationary(SparseRateSystem{}), SolverError);

  SparseRateSystem one;
  one.dimension = 1;
  auto pi = solve_stationary(one);
  CHECK(pi[0] == Catch::Approx(1.0));

  // Chain with an absorbing bottom state: unique stationary law at state 0.
  SparseRateSystem absorbing;
  absorbing.dimension = 3;
  absorbing.entries = {{1, 0, 1.0}, {1, 1, -1.0}, {2, 1, 2.0}, {2, 2, -2.0}};
  auto pa = solve_stationary(absorbing);
  CHECK(pa[0] == Catch::Approx(1.0).margin(1e-10));
  CHECK(pa[1] == Catch::Approx(0.0).margin(1e-10));
}
