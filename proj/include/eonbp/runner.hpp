#pragma once

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "eonbp/approx.hpp"
#include "eonbp/exact.hpp"
#include "eonbp/model.hpp"
#include "eonbp/report.hpp"
#include "eonbp/sim.hpp"

namespace eonbp {

// One engine dispatch over a (mode x load) sweep; shared by the CLI and the
// acceptance suite.
struct RunSpec {
  ScenarioConfig base;
  Engine engine = Engine::kApprox;
  std::vector<OperationMode> modes;  // defaults to {base.mode}
  std::vector<double> loads;         // defaults to base.loads
};

inline int worker_pool_size(int points) {
  int workers = static_cast<int>(std::thread::hardware_concurrency());
  if (const char* env = std::getenv("EON_WORKERS")) {
    const int parsed = std::atoi(env);
    if (parsed > 0) workers = parsed;
  }
  return std::max(1, std::min(workers, points));
}

namespace detail {

inline std::string od_label(const ScenarioConfig& cfg, int o) {
  return cfg.topology.nodes[cfg.od_pairs[o].origin] + ">" +
         cfg.topology.nodes[cfg.od_pairs[o].destination];
}

inline ReportRow run_point(const ScenarioConfig& base, Engine engine,
                           OperationMode mode, double load) {
  ScenarioConfig cfg = base;
  cfg.mode = mode;
  cfg.engine = engine;
  cfg = cfg.with_load(load);

  ReportRow row;
  row.mode = mode.label();
  row.engine = engine_label(engine);
  row.load = load;
  const auto start = std::chrono::steady_clock::now();
  std::ostringstream meta;

  std::vector<std::vector<double>> bp;
  switch (engine) {
    case Engine::kExact: {
      auto result = solve_exact(cfg);
      bp = result.bp;
      row.overall_bp = result.overall;
      meta << "states=" << result.total_states
           << ";residual=" << result.max_residual;
      break;
    }
    case Engine::kApprox: {
      row.variant = variant_label(cfg.variant);
      auto report = ApproxEngine(cfg).fixed_point();
      bp = report.bp;
      row.overall_bp = report.overall_bp;
      meta << "converged=" << (report.converged ? 1 : 0)
           << ";iters=" << report.iterations
           << ";delta=" << report.final_delta
           << ";counts=" << report.counts_source;
      break;
    }
    case Engine::kSim: {
      auto result = run_sim(cfg);
      bp = result.bp;
      row.overall_bp = result.overall_bp;
      meta << "ci=" << result.ci << ";seed=" << result.seed
           << ";requests=" << result.requests << ";rng=" << result.rng
           << ";batches=" << result.batch_means.size();
      break;
    }
  }
  for (int o = 0; o < cfg.num_od_pairs(); ++o)
    for (int k = 0; k < cfg.num_classes(); ++k)
      row.per_od_class.push_back({od_label(cfg, o), k + 1, bp[o][k]});
  row.runtime_s = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - start)
                      .count();
  row.meta = meta.str();
  return row;
}

}  // namespace detail

// Executes every (mode, load) point, in parallel up to the worker-pool
// size; the row order is deterministic regardless of scheduling.
inline std::vector<ReportRow> run_rows(const RunSpec& spec) {
  const auto modes =
      spec.modes.empty() ? std::vector<OperationMode>{spec.base.mode}
                         : spec.modes;
  const auto loads = spec.loads.empty() ? spec.base.loads : spec.loads;
  if (loads.empty())
    throw std::runtime_error("no loads given (config `loads` or --loads)");

  struct Point {
    OperationMode mode;
    double load;
  };
  std::vector<Point> points;
  for (const auto& mode : modes)
    for (double load : loads) points.push_back({mode, load});

  std::vector<ReportRow> rows(points.size());
  const int workers = worker_pool_size(static_cast<int>(points.size()));
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = next++; i < points.size(); i = next++)
          rows[i] = detail::run_point(spec.base, spec.engine, points[i].mode,
                                      points[i].load);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& err : errors)
    if (err) std::rethrow_exception(err);
  return rows;
}

}  // namespace eonbp
