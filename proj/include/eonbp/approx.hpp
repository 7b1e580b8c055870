#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "eonbp/combinatorics.hpp"
#include "eonbp/model.hpp"
#include "eonbp/solver.hpp"
#include "eonbp/statecount.hpp"

namespace eonbp {

// Above this capacity FF scenarios fall back to the RF closed-form counts;
// explicit FF enumeration only stays tractable on small links.
inline constexpr int kFfEnumerationMaxC = 20;

// The Uniform variant evaluates its 2-hop marginalization by the full
// nested sum only up to this capacity; beyond it the per-link product form
// is used (the nested cost grows as C^(l-1)).
inline constexpr int kUniformNestedMaxC = 20;

// Per-(x, k) acceptance ingredients of the reduced link model, as floating
// ratios of the exact integer counts, plus the macrostate census shared by
// every variant (valid microstates and expected held connections).
struct CountTables {
  int capacity = 0;
  std::vector<int> d;
  std::string source;
  std::vector<char> valid;                      // [x]
  std::vector<int> valid_xs;
  std::vector<std::vector<double>> accept_nb;   // [k][x]  |NB| / |Omega_S|
  std::vector<std::vector<double>> frag_share;  // [k][x]  |FB| / |Omega_S|
  std::vector<std::vector<double>> mean_held;   // [k][x]  E[n_k | x]

  static CountTables from_formulas(int capacity, const std::vector<int>& d) {
    CountTables t = census(capacity, d);
    t.source = "rf-formulas";
    for (int x : t.valid_xs) {
      const BigInt total = count_total(x, capacity, d);
      for (std::size_t k = 0; k < d.size(); ++k) {
        if (x > capacity - d[k]) continue;  // resource blocking: both stay 0
        const BigInt nb = count_nonblocking(x, static_cast<int>(k), capacity, d);
        t.accept_nb[k][x] = ratio_as_double(nb, total);
        t.frag_share[k][x] = ratio_as_double(total - nb, total);
      }
    }
    return t;
  }

  static CountTables from_enumeration(Policy policy, int capacity,
                                      const std::vector<int>& d,
                                      std::int64_t cap = 2'000'000) {
    CountTables t = census(capacity, d);
    t.source = policy == Policy::kFirstFit ? "ff-enumeration" : "rf-enumeration";
    auto link = enumerate_link_states(policy, capacity, d, cap);
    for (int x : t.valid_xs) {
      const double total = static_cast<double>(link.total_by_x[x]);
      if (total == 0) continue;
      for (std::size_t k = 0; k < d.size(); ++k) {
        t.accept_nb[k][x] = link.non_blocking[k][x] / total;
        t.frag_share[k][x] = link.frag_blocking[k][x] / total;
      }
    }
    return t;
  }

 private:
  static CountTables census(int capacity, const std::vector<int>& d) {
    CountTables t;
    t.capacity = capacity;
    t.d = d;
    t.valid.assign(capacity + 1, 0);
    t.accept_nb.assign(d.size(), std::vector<double>(capacity + 1, 0.0));
    t.frag_share = t.accept_nb;
    t.mean_held = t.accept_nb;
    for (int x = 0; x <= capacity; ++x) {
      auto macros = enumerate_macrostates(capacity, d, x);
      if (macros.empty()) continue;
      t.valid[x] = 1;
      t.valid_xs.push_back(x);
      for (std::size_t k = 0; k < d.size(); ++k) {
        double held = 0;
        for (const auto& n : macros) held += n[k];
        t.mean_held[k][x] = held / static_cast<double>(macros.size());
      }
    }
    return t;
  }
};

namespace detail {

// Count tables are pure functions of (C, d, source); build each once and
// share it read-only across engines and sweep workers.
inline std::shared_ptr<const CountTables> cached_counts(
    int capacity, const std::vector<int>& d, Policy policy, bool enumerate,
    std::int64_t cap) {
  static std::mutex mutex;
  static std::map<std::string, std::shared_ptr<const CountTables>> cache;
  std::string key = std::to_string(capacity);
  for (int w : d) key += "," + std::to_string(w);
  key += enumerate ? (policy == Policy::kFirstFit ? "|ff" : "|rf-enum") : "|rf";

  std::scoped_lock lock(mutex);
  auto& slot = cache[key];
  if (!slot)
    slot = std::make_shared<const CountTables>(
        enumerate ? CountTables::from_enumeration(policy, capacity, d, cap)
                  : CountTables::from_formulas(capacity, d));
  return slot;
}

}  // namespace detail

// Load-independent equiprobable-exact-states acceptance.
inline double p_accept_ees(const CountTables& t, int x, int k) {
  return t.accept_nb[k][x];
}

// Load-dependent slice-occupancy-correlation acceptance: fragmentation
// states still accept with a weight that decays as x moves away from the
// average occupancy. The exponential factor is defined as 0 at x = 0.
inline double p_accept_soc(const CountTables& t, int x, int k, double xbar) {
  if (x > t.capacity - t.d[k]) return 0.0;
  double factor = 0.0;
  if (x > 0 && xbar > 0)
    factor = std::exp(-(xbar / t.capacity) * std::abs(std::log(x / xbar)));
  return t.accept_nb[k][x] + t.frag_share[k][x] * factor;
}

// Uniform approximation: occupancy spread slice-by-slice, ignoring the
// block structure of real demands.
struct UniformTables {
  int capacity = 0;
  std::vector<int> d;
  std::vector<std::vector<double>> binom;      // [a][b], a,b <= C
  std::vector<std::vector<double>> p_given_n;  // [k][n]
  std::vector<std::vector<double>> p_link;     // [k][x]

  double b(int a, int bb) const {
    return (a < 0 || bb < 0 || bb > a) ? 0.0 : binom[a][bb];
  }

  static UniformTables build(int capacity, const std::vector<int>& d) {
    UniformTables t;
    t.capacity = capacity;
    t.d = d;
    t.binom.assign(capacity + 1, std::vector<double>(capacity + 1, 0.0));
    for (int a = 0; a <= capacity; ++a) {
      t.binom[a][0] = 1.0;
      for (int bb = 1; bb <= a; ++bb)
        t.binom[a][bb] =
            t.binom[a - 1][bb - 1] + (bb <= a - 1 ? t.binom[a - 1][bb] : 0.0);
    }
    t.p_given_n.assign(d.size(), std::vector<double>(capacity + 1, 0.0));
    t.p_link = t.p_given_n;
    for (std::size_t k = 0; k < d.size(); ++k) {
      for (int n = 0; n <= capacity; ++n) {
        // Fraction of n-free patterns with a contiguous free run >= d_k,
        // kept in exact integers: the alternating sum cancels badly in
        // floating point at larger C.
        BigInt num = 0;
        for (int i = 1; i <= capacity - n + 1; ++i) {
          const BigInt term =
              binomial(capacity - n + 1, i) *
              binomial(capacity - static_cast<std::int64_t>(i) * d[k],
                       capacity - n);
          num += (i % 2 == 1) ? term : -term;
        }
        t.p_given_n[k][n] = ratio_as_double(num, binomial(capacity, n));
      }
      for (int x = 0; x <= capacity; ++x)
        t.p_link[k][x] = t.p_given_n[k][capacity - x];
    }
    return t;
  }
};

namespace detail {

inline std::shared_ptr<const UniformTables> cached_uniform(
    int capacity, const std::vector<int>& d) {
  static std::mutex mutex;
  static std::map<std::string, std::shared_ptr<const UniformTables>> cache;
  std::string key = std::to_string(capacity);
  for (int w : d) key += "," + std::to_string(w);

  std::scoped_lock lock(mutex);
  auto& slot = cache[key];
  if (!slot)
    slot = std::make_shared<const UniformTables>(
        UniformTables::build(capacity, d));
  return slot;
}

}  // namespace detail

// Distribution g_n of the number of jointly-free slices across a route,
// given per-link occupancies. Single link: point mass at C - x; every
// further link convolves through the hypergeometric overlap kernel.
inline std::vector<double> uniform_overlap_pmf(std::span<const int> xs,
                                               const UniformTables& t) {
  const int c = t.capacity;
  std::vector<double> pmf(c + 1, 0.0);
  pmf[c - xs[0]] = 1.0;
  int min_free = c - xs[0];
  for (std::size_t hop = 1; hop < xs.size(); ++hop) {
    const int y = xs[hop];
    std::vector<double> next(c + 1, 0.0);
    for (int n = 0; n <= c - y; ++n) {
      double total = 0.0;
      for (int i = n; i <= min_free; ++i) {
        if (pmf[i] == 0.0) continue;
        // Overlap so far occupies C - i slices; combine with link `hop`.
        total += t.b(i, n) * t.b(c - i, c - y - n) / t.b(c, c - y) * pmf[i];
      }
      next[n] = total;
    }
    pmf = std::move(next);
    min_free = std::min(min_free, c - y);
  }
  return pmf;
}

inline std::vector<double> uniform_overlap_pmf(const std::vector<int>& xs,
                                               int capacity) {
  return uniform_overlap_pmf(std::span<const int>(xs),
                             UniformTables::build(capacity, {1}));
}

// Route acceptance under the Uniform approximation (continuity-aware form).
inline double p_accept_uniform_route(std::span<const int> xs, int k,
                                     const UniformTables& t) {
  auto pmf = uniform_overlap_pmf(xs, t);
  int n_max = t.capacity;
  for (int x : xs) n_max = std::min(n_max, t.capacity - x);
  double total = 0.0;
  for (int n = t.d[k]; n <= n_max; ++n)
    total += t.p_given_n[k][n] * pmf[n];
  return total;
}

// Single-link Uniform acceptance; also the per-link factor of the SC route
// product.
inline double p_accept_uniform_link_sc(int x, int k, const UniformTables& t) {
  return t.p_link[k][x];
}

// Birth-death-like reduced chain over the valid microstates of one link:
// arrivals climb by d_k at the setup rate, departures fall by d_k at the
// expected departure rate. Returns a dense distribution over 0..C.
inline std::vector<double> reduced_gbe_solve(
    const CountTables& tables, const std::vector<std::vector<double>>& alpha,
    const std::vector<std::vector<double>>& gamma,
    const SolveOptions& opts = {}) {
  const int c = tables.capacity;
  const auto& xs = tables.valid_xs;
  std::vector<int> idx(c + 1, -1);
  for (std::size_t i = 0; i < xs.size(); ++i) idx[xs[i]] = static_cast<int>(i);

  SparseRateSystem sys;
  sys.dimension = static_cast<int>(xs.size());
  std::vector<double> diag(xs.size(), 0.0);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const int x = xs[i];
    for (std::size_t k = 0; k < tables.d.size(); ++k) {
      const int dk = tables.d[k];
      if (x + dk <= c && alpha[k][x] > 0.0) {
        sys.entries.emplace_back(static_cast<int>(i), idx[x + dk], alpha[k][x]);
        diag[i] += alpha[k][x];
      }
      if (x - dk >= 0 && gamma[k][x] > 0.0) {
        sys.entries.emplace_back(static_cast<int>(i), idx[x - dk], gamma[k][x]);
        diag[i] += gamma[k][x];
      }
    }
  }
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (diag[i] != 0.0)
      sys.entries.emplace_back(static_cast<int>(i), static_cast<int>(i),
                               -diag[i]);

  auto pi = solve_stationary(sys, opts);
  std::vector<double> dense(c + 1, 0.0);
  for (std::size_t i = 0; i < xs.size(); ++i) dense[xs[i]] = pi[i];
  return dense;
}

// Reduced per-link state: stationary occupancy distribution, its mean, and
// the current setup rates.
struct LinkOccupancyModel {
  int link = 0;
  std::vector<double> pi;                  // dense over 0..C
  double xbar = 0.0;
  std::vector<std::vector<double>> alpha;  // [k][x]
};

struct FixedPointReport {
  int iterations = 0;
  double final_delta = 0.0;
  bool converged = false;
  std::vector<std::vector<double>> bp;  // [o][k]
  double overall_bp = 0.0;
  std::vector<LinkOccupancyModel> links;
  std::string counts_source;
};

// Reduced-load fixed point over per-link occupancy models.
class ApproxEngine {
 public:
  explicit ApproxEngine(const ScenarioConfig& at_load)
      : cfg_(at_load),
        capacity_(at_load.topology.capacity),
        num_classes_(at_load.num_classes()) {
    std::vector<int> widths;
    for (const auto& cls : cfg_.classes) widths.push_back(cls.width);
    const bool ff_enum = cfg_.mode.policy == Policy::kFirstFit &&
                         capacity_ <= kFfEnumerationMaxC;
    counts_ = detail::cached_counts(capacity_, widths, cfg_.mode.policy,
                                    ff_enum, cfg_.state_cap);
    if (cfg_.variant == Variant::kUniform)
      uniform_ = detail::cached_uniform(capacity_, widths);
    routes_through_.assign(cfg_.topology.num_links(), {});
    for (int o = 0; o < cfg_.num_od_pairs(); ++o)
      for (int link : cfg_.od_pairs[o].route)
        routes_through_[link].push_back(o);
  }

  const CountTables& counts() const { return *counts_; }
  const ScenarioConfig& config() const { return cfg_; }

  // Expected departure rates: gamma_k(x) = mu_k * E[n_k | x].
  std::vector<std::vector<double>> departure_rates() const {
    std::vector<std::vector<double>> gamma(
        num_classes_, std::vector<double>(capacity_ + 1, 0.0));
    for (int k = 0; k < num_classes_; ++k)
      for (int x : counts_->valid_xs)
        gamma[k][x] = cfg_.classes[k].holding_rate * counts_->mean_held[k][x];
    return gamma;
  }

  // Variant-dispatched single-link acceptance probability.
  double link_prob(int k, int x, double xbar) const {
    switch (cfg_.variant) {
      case Variant::kEes: return p_accept_ees(*counts_, x, k);
      case Variant::kSoc: return p_accept_soc(*counts_, x, k, xbar);
      case Variant::kUniform: return uniform_->p_link[k][x];
    }
    return 0.0;
  }

  // Route acceptance probability for a full occupancy vector.
  double p_accept_route(std::span<const int> xs, std::span<const double> xbars,
                        int k) const {
    const bool sc = cfg_.mode.spectrum_conversion;
    if (cfg_.variant == Variant::kUniform && !sc)
      return p_accept_uniform_route(xs, k, *uniform_);
    double product = 1.0;
    for (std::size_t i = 0; i < xs.size(); ++i)
      product *= link_prob(k, xs[i], xbars[i]);
    if (sc) return product;
    return std::pow(product, static_cast<double>(xs.size()));
  }

  // Sum_x pi_j(x) * p_j(x)^pow for one link; the building block of the
  // factorized marginalization.
  double link_marginal(int j, int k, int pow,
                       const std::vector<LinkOccupancyModel>& models) const {
    double total = 0.0;
    for (int x : counts_->valid_xs) {
      const double pi = models[j].pi[x];
      if (pi == 0.0) continue;
      total += pi * std::pow(link_prob(k, x, models[j].xbar),
                             static_cast<double>(pow));
    }
    return total;
  }

  // Per-iteration cache of link_marginal over every (pow, link, class)
  // combination the routes need.
  struct MarginalCache {
    std::map<int, std::vector<std::vector<double>>> by_pow;  // [j][k]
    double get(int pow, int j, int k) const {
      return by_pow.at(pow)[j][k];
    }
  };

  MarginalCache marginal_cache(
      const std::vector<LinkOccupancyModel>& models) const {
    std::set<int> pows{1};
    if (!cfg_.mode.spectrum_conversion)
      for (const auto& od : cfg_.od_pairs)
        pows.insert(static_cast<int>(od.route.size()));
    MarginalCache cache;
    for (int pow : pows) {
      auto& table = cache.by_pow[pow];
      table.assign(cfg_.topology.num_links(),
                   std::vector<double>(num_classes_, 0.0));
      for (int j = 0; j < cfg_.topology.num_links(); ++j)
        for (int k = 0; k < num_classes_; ++k)
          table[j][k] = link_marginal(j, k, pow, models);
    }
    return cache;
  }

  bool uniform_nested(int hops) const {
    return cfg_.variant == Variant::kUniform &&
           !cfg_.mode.spectrum_conversion && hops == 2 &&
           capacity_ <= kUniformNestedMaxC;
  }

  // Pr(Z_r >= d_k | X_j = x): acceptance of (o, k) through its whole route
  // conditioned on the occupancy of link j, other links marginalized in
  // factorized form. The Uniform variant keeps the full nested sum on
  // routes of up to two hops.
  double marginal_accept_factorized(int o, int k, int j, int x,
                                    const std::vector<LinkOccupancyModel>& models,
                                    const MarginalCache& cache) const {
    const auto& route = cfg_.od_pairs[o].route;
    const int hops = static_cast<int>(route.size());
    const bool sc = cfg_.mode.spectrum_conversion;

    if (uniform_nested(hops)) {
      const int other = route[0] == j ? route[1] : route[0];
      double total = 0.0;
      for (int xo : counts_->valid_xs) {
        const double pi = models[other].pi[xo];
        if (pi == 0.0) continue;
        const int xs[2] = {x, xo};
        total += pi * p_accept_uniform_route(xs, k, *uniform_);
      }
      return total;
    }
    const int pow = sc ? 1 : hops;
    double result = std::pow(link_prob(k, x, models[j].xbar),
                             static_cast<double>(pow));
    for (int link : route)
      if (link != j) result *= cache.get(pow, link, k);
    return result;
  }

  double marginal_accept_factorized(
      int o, int k, int j, int x,
      const std::vector<LinkOccupancyModel>& models) const {
    return marginal_accept_factorized(o, k, j, x, models,
                                      marginal_cache(models));
  }

  // Literal nested-sum evaluation of the same marginal; the oracle the
  // factorized form is checked against. Exponential in the route length.
  double marginal_accept_nested(
      int o, int k, int j, int x,
      const std::vector<LinkOccupancyModel>& models) const {
    const auto& route = cfg_.od_pairs[o].route;
    std::vector<int> xs(route.size(), 0);
    std::vector<double> xbars(route.size(), 0.0);
    for (std::size_t i = 0; i < route.size(); ++i)
      xbars[i] = models[route[i]].xbar;
    double total = 0.0;
    auto recurse = [&](auto&& self, std::size_t hop, double weight) -> void {
      if (hop == route.size()) {
        total += weight * p_accept_route(xs, xbars, k);
        return;
      }
      if (route[hop] == j) {
        xs[hop] = x;
        self(self, hop + 1, weight);
        return;
      }
      for (int xo : counts_->valid_xs) {
        const double pi = models[route[hop]].pi[xo];
        if (pi == 0.0) continue;
        xs[hop] = xo;
        self(self, hop + 1, weight * pi);
      }
    };
    recurse(recurse, 0, 1.0);
    return total;
  }

  // Setup rates on link j: each traversing OD pair contributes its thinned
  // arrival rate.
  std::vector<std::vector<double>> setup_rates(
      int j, const std::vector<LinkOccupancyModel>& models,
      const MarginalCache& cache) const {
    std::vector<std::vector<double>> alpha(
        num_classes_, std::vector<double>(capacity_ + 1, 0.0));
    for (int k = 0; k < num_classes_; ++k)
      for (int x : counts_->valid_xs) {
        if (x + cfg_.classes[k].width > capacity_) continue;
        double rate = 0.0;
        for (int o : routes_through_[j]) {
          const double lambda = cfg_.rate(o, k);
          if (lambda == 0.0) continue;
          rate += lambda * marginal_accept_factorized(o, k, j, x, models, cache);
        }
        alpha[k][x] = rate;
      }
    return alpha;
  }

  std::vector<std::vector<double>> setup_rates(
      int j, const std::vector<LinkOccupancyModel>& models) const {
    return setup_rates(j, models, marginal_cache(models));
  }

  // Network blocking per (o, k), factorized form of the ensemble average.
  std::vector<std::vector<double>> network_blocking(
      const std::vector<LinkOccupancyModel>& models,
      const MarginalCache& cache) const {
    std::vector<std::vector<double>> bp(
        cfg_.num_od_pairs(), std::vector<double>(num_classes_, 0.0));
    const bool sc = cfg_.mode.spectrum_conversion;
    for (int o = 0; o < cfg_.num_od_pairs(); ++o) {
      const auto& route = cfg_.od_pairs[o].route;
      const int hops = static_cast<int>(route.size());
      for (int k = 0; k < num_classes_; ++k) {
        double accept = 0.0;
        if (uniform_nested(hops)) {
          for (int x1 : counts_->valid_xs) {
            const double pi1 = models[route[0]].pi[x1];
            if (pi1 == 0.0) continue;
            for (int x2 : counts_->valid_xs) {
              const double pi2 = models[route[1]].pi[x2];
              if (pi2 == 0.0) continue;
              const int xs[2] = {x1, x2};
              accept += pi1 * pi2 * p_accept_uniform_route(xs, k, *uniform_);
            }
          }
        } else {
          const int pow = sc ? 1 : hops;
          accept = 1.0;
          for (int link : route) accept *= cache.get(pow, link, k);
        }
        bp[o][k] = std::max(0.0, 1.0 - accept);
      }
    }
    return bp;
  }

  std::vector<std::vector<double>> network_blocking(
      const std::vector<LinkOccupancyModel>& models) const {
    return network_blocking(models, marginal_cache(models));
  }

  // Nested-sum blocking, for the factorized-vs-direct property check.
  double blocking_nested(int o, int k,
                         const std::vector<LinkOccupancyModel>& models) const {
    const auto& route = cfg_.od_pairs[o].route;
    std::vector<int> xs(route.size(), 0);
    std::vector<double> xbars(route.size(), 0.0);
    for (std::size_t i = 0; i < route.size(); ++i)
      xbars[i] = models[route[i]].xbar;
    double accept = 0.0;
    auto recurse = [&](auto&& self, std::size_t hop, double weight) -> void {
      if (hop == route.size()) {
        accept += weight * p_accept_route(xs, xbars, k);
        return;
      }
      for (int xo : counts_->valid_xs) {
        const double pi = models[route[hop]].pi[xo];
        if (pi == 0.0) continue;
        xs[hop] = xo;
        self(self, hop + 1, weight * pi);
      }
    };
    recurse(recurse, 0, 1.0);
    return 1.0 - accept;
  }

  double overall_bp(const std::vector<std::vector<double>>& bp) const {
    double weighted = 0.0, rate_sum = 0.0;
    for (int o = 0; o < cfg_.num_od_pairs(); ++o)
      for (int k = 0; k < num_classes_; ++k) {
        weighted += cfg_.rate(o, k) * bp[o][k];
        rate_sum += cfg_.rate(o, k);
      }
    return rate_sum > 0 ? weighted / rate_sum : 0.0;
  }

  // Five-step iteration: per-link GBE solves, then average occupancy and
  // setup-rate refresh, then blocking, until the largest per-(o,k) change
  // drops below epsilon.
  FixedPointReport fixed_point(std::ostream* trace = nullptr) const {
    const int num_links = cfg_.topology.num_links();
    const auto gamma = departure_rates();
    SolveOptions solver_opts;
    solver_opts.tolerance = cfg_.solver_tolerance;

    std::vector<LinkOccupancyModel> models(num_links);
    for (int j = 0; j < num_links; ++j) {
      models[j].link = j;
      models[j].xbar = capacity_ / 2.0;
      models[j].alpha.assign(num_classes_,
                             std::vector<double>(capacity_ + 1, 0.0));
      for (int k = 0; k < num_classes_; ++k) {
        double lambda = 0.0;
        for (int o : routes_through_[j]) lambda += cfg_.rate(o, k);
        for (int x : counts_->valid_xs) models[j].alpha[k][x] = lambda;
      }
    }

    FixedPointReport report;
    report.counts_source = counts_->source;
    report.bp.assign(cfg_.num_od_pairs(),
                     std::vector<double>(num_classes_, 0.0));
    std::vector<std::vector<double>> bp_hat = report.bp;

    if (trace) {
      *trace << "iteration,max_bp_delta";
      for (int j = 0; j < num_links; ++j) *trace << ",xbar_" << j;
      *trace << '\n';
    }

    double prev_direction = 0.0;
    int oscillations = 0;
    bool damping = false;

    for (int iter = 1; iter <= cfg_.max_iters; ++iter) {
      for (int j = 0; j < num_links; ++j) {
        models[j].pi =
            reduced_gbe_solve(*counts_, models[j].alpha, gamma, solver_opts);
        models[j].xbar = 0.0;
        for (int x : counts_->valid_xs)
          models[j].xbar += x * models[j].pi[x];
      }
      const MarginalCache cache = marginal_cache(models);
      for (int j = 0; j < num_links; ++j) {
        auto fresh = setup_rates(j, models, cache);
        if (damping) {
          for (int k = 0; k < num_classes_; ++k)
            for (int x : counts_->valid_xs)
              fresh[k][x] = 0.5 * fresh[k][x] + 0.5 * models[j].alpha[k][x];
        }
        models[j].alpha = std::move(fresh);
      }

      report.bp = network_blocking(models, cache);
      report.iterations = iter;

      double delta = 0.0, direction = 0.0;
      for (int o = 0; o < cfg_.num_od_pairs(); ++o)
        for (int k = 0; k < num_classes_; ++k) {
          delta = std::max(delta, std::abs(report.bp[o][k] - bp_hat[o][k]));
          direction += report.bp[o][k] - bp_hat[o][k];
        }
      report.final_delta = delta;

      if (trace) {
        *trace << iter << ',' << delta;
        for (int j = 0; j < num_links; ++j) *trace << ',' << models[j].xbar;
        *trace << '\n';
      }

      if (delta < cfg_.epsilon) {
        report.converged = true;
        break;
      }
      if (direction * prev_direction < 0) {
        if (++oscillations >= 3) damping = true;
      } else {
        oscillations = 0;
      }
      prev_direction = direction;
      bp_hat = report.bp;
    }

    report.overall_bp = overall_bp(report.bp);
    report.links = std::move(models);
    return report;
  }

 private:
  ScenarioConfig cfg_;
  int capacity_;
  int num_classes_;
  std::shared_ptr<const CountTables> counts_;
  std::shared_ptr<const UniformTables> uniform_;
  std::vector<std::vector<int>> routes_through_;  // link -> od indices
};

// Spec-style convenience wrapper.
inline FixedPointReport fixed_point(const ScenarioConfig& at_load,
                                    std::ostream* trace = nullptr) {
  return ApproxEngine(at_load).fixed_point(trace);
}

}  // namespace eonbp
