#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "eonbp/exact.hpp"
#include "eonbp/sim.hpp"
#include "test_helpers.hpp"

using namespace eonbp;
using eonbp::test::all_modes;
using eonbp::test::single_link_config;
using eonbp::test::two_link_config;

TEST_CASE("philox stream independence and determinism") {
  Philox4x32 a(42, 0), b(42, 0), c(42, 1), d(7, 0);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 64; ++i) {
    const auto va = a.next_u64();
    CHECK(va == b.next_u64());
    seen.insert(va);
    seen.insert(c.next_u64());
    seen.insert(d.next_u64());
  }
  CHECK(seen.size() == 3 * 64);  // streams do not collide

  Philox4x32 u(1, 0);
  for (int i = 0; i < 1000; ++i) {
    const double v = u.uniform();
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("ci_halfwidth") {
  CHECK(ci_halfwidth(std::vector<double>(12, 0.25)) == 0.0);
  CHECK_THROWS_AS(ci_halfwidth({0.1, 0.2}), std::invalid_argument);

  // Synthetic Bernoulli(0.01) batches: batch means are binomial averages,
  // so the batch-means half-width must approach the closed-form binomial
  // one, 1.96 * sqrt(p (1-p) / n).
  const double p = 0.01;
  const int batches = 100, per_batch = 10000;
  Philox4x32 rng(123, 0);
  std::vector<double> means;
  for (int b = 0; b < batches; ++b) {
    int hits = 0;
    for (int i = 0; i < per_batch; ++i)
      if (rng.uniform() < p) ++hits;
    means.push_back(static_cast<double>(hits) / per_batch);
  }
  const double exact_hw =
      1.96 * std::sqrt(p * (1 - p) / (batches * per_batch));
  const double got = ci_halfwidth(means);
  CHECK(got == Catch::Approx(exact_hw).epsilon(0.2));
}

TEST_CASE("zero arrivals simulate to zero blocking") {
  auto cfg = single_link_config(10, {3, 4}).with_load(0.0);
  cfg.requests = 1000;
  auto result = run_sim(cfg);
  CHECK(result.overall_bp == 0.0);
  CHECK(result.offered[0][0] == 0);
  CHECK(result.blocked[0][1] == 0);
}

TEST_CASE("identical seeds reproduce the result bit for bit") {
  auto cfg = two_link_config(10, {3, 4}).with_load(1.2);
  cfg.requests = 20000;
  cfg.seed = 99;
  auto a = run_sim(cfg);
  auto b = run_sim(cfg);
  CHECK(a.overall_bp == b.overall_bp);
  CHECK(a.batch_means == b.batch_means);
  CHECK(a.offered == b.offered);
  CHECK(a.blocked == b.blocked);

  cfg.seed = 100;
  auto c = run_sim(cfg);
  CHECK(a.blocked != c.blocked);
}

TEST_CASE("sampled placements agree with the exact candidate sets") {
  // Walk the exact space of a small instance in every mode and check that
  // sampling (a) blocks exactly when Gamma+ is empty and (b) only ever
  // returns members of Gamma+.
  for (const auto& mode : all_modes()) {
    auto cfg = two_link_config(4, {1, 2});
    cfg.mode = mode;
    AllocationRules rules(cfg.topology, cfg.classes, cfg.od_pairs);
    auto space = build_state_space(cfg);
    Philox4x32 rng(5, 0);
    for (const auto& state : space.states)
      for (int o = 0; o < cfg.num_od_pairs(); ++o)
        for (int k = 0; k < cfg.num_classes(); ++k) {
          auto placements = rules.arrival_placements(state, o, k, mode);
          for (int draw = 0; draw < 8; ++draw) {
            auto sampled = rules.sample_arrival(state, o, k, mode, rng);
            CHECK(sampled.has_value() == !placements.empty());
            if (sampled)
              CHECK(std::find(placements.begin(), placements.end(),
                              *sampled) != placements.end());
          }
          CHECK(rules.blocked(state, o, k, mode) == placements.empty());
        }
  }
}

TEST_CASE("simulation tracks the exact chain on a single link") {
  auto cfg = single_link_config(10, {3, 4}).with_load(0.6);
  cfg.requests = 200000;
  cfg.seed = 2024;
  auto exact = solve_exact(cfg);
  auto sim = run_sim(cfg);
  REQUIRE(sim.ci > 0.0);
  CHECK(std::abs(sim.overall_bp - exact.overall) <= 3.0 * sim.ci);
  // Per-estimate half-widths cover the per-class values too.
  for (int k = 0; k < 2; ++k) {
    REQUIRE(sim.ci_per_class[0][k] > 0.0);
    CHECK(std::abs(sim.bp[0][k] - exact.bp[0][k]) <=
          3.0 * sim.ci_per_class[0][k]);
  }
}

TEST_CASE("replication merge pools batches") {
  auto cfg = single_link_config(10, {3, 4}).with_load(0.6);
  cfg.requests = 30000;
  std::vector<SimResult> runs;
  for (std::uint64_t stream = 0; stream < 3; ++stream) {
    SimOptions opts;
    opts.stream = stream;
    runs.push_back(run_sim(cfg, opts));
  }
  auto merged = merge_replications(runs);
  CHECK(merged.requests == 3 * cfg.requests);
  CHECK(merged.batch_means.size() == runs[0].batch_means.size() * 3);
  std::int64_t offered = 0;
  for (const auto& run : runs) offered += run.offered[0][0];
  CHECK(merged.offered[0][0] == offered);
  // Pooling more batches tightens the per-class half-width.
  CHECK(merged.ci_per_class[0][0] > 0.0);
  CHECK(merged.ci_per_class[0][0] < runs[0].ci_per_class[0][0]);
}
