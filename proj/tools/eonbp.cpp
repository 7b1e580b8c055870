// Command-line front door: compute exact, approximate, or simulated
// blocking probabilities for elastic optical network scenarios, dump state
// classifications, and diff result tables.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "eonbp/approx.hpp"
#include "eonbp/exact.hpp"
#include "eonbp/model.hpp"
#include "eonbp/report.hpp"
#include "eonbp/runner.hpp"
#include "eonbp/sim.hpp"
#include "eonbp/statecount.hpp"

namespace {

using namespace eonbp;

struct EngineArgs {
  std::string config_path;
  std::vector<double> loads;
  std::vector<std::string> modes;
  std::string out = "report";
  std::string variant;
  std::optional<std::int64_t> requests;
  std::optional<std::uint64_t> seed;
  std::string dump_states_path;
  std::string trace_path;
};

void add_engine_options(CLI::App* cmd, EngineArgs& args) {
  cmd->add_option("--config", args.config_path, "scenario config (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--loads", args.loads,
                  "offered loads (default: config `loads`)")
      ->delimiter(',');
  cmd->add_option("--modes", args.modes,
                  "operation modes to sweep (default: config `mode`)")
      ->delimiter(',');
  cmd->add_option("--out", args.out, "output path prefix for CSV/JSON");
}

void print_rows(const std::vector<ReportRow>& rows) {
  std::printf("%-6s %-7s %-8s %-8s %-12s %-10s %s\n", "mode", "engine",
              "variant", "load", "overall_bp", "runtime_s", "meta");
  for (const auto& row : rows)
    std::printf("%-6s %-7s %-8s %-8g %-12.4e %-10.3f %s\n", row.mode.c_str(),
                row.engine.c_str(), row.variant.c_str(), row.load,
                row.overall_bp, row.runtime_s, row.meta.c_str());
}

int run_engine(Engine engine, const EngineArgs& args) {
  auto cfg = load_config_file(args.config_path);
  if (!args.variant.empty()) cfg.variant = parse_variant(args.variant);
  if (args.requests) cfg.requests = *args.requests;
  if (args.seed) cfg.seed = *args.seed;

  RunSpec spec;
  spec.base = cfg;
  spec.engine = engine;
  spec.loads = args.loads;
  for (const auto& mode : args.modes)
    spec.modes.push_back(OperationMode::parse(mode));

  if (!args.dump_states_path.empty()) {
    auto space = build_state_space(cfg);
    std::ofstream os(args.dump_states_path);
    if (!os)
      throw std::runtime_error("cannot write '" + args.dump_states_path + "'");
    dump_states(space, os);
    std::cout << "wrote " << space.size() << " states to "
              << args.dump_states_path << "\n";
  }
  if (!args.trace_path.empty() && engine == Engine::kApprox) {
    // Convergence trace of the first (mode, load) point.
    const double load =
        !spec.loads.empty() ? spec.loads.front()
                            : (!cfg.loads.empty() ? cfg.loads.front() : 0.0);
    ScenarioConfig at_load = cfg;
    if (!spec.modes.empty()) at_load.mode = spec.modes.front();
    std::ofstream trace(args.trace_path);
    if (!trace)
      throw std::runtime_error("cannot write '" + args.trace_path + "'");
    ApproxEngine(at_load.with_load(load)).fixed_point(&trace);
  }

  auto rows = run_rows(spec);
  print_rows(rows);
  write_report_csv(args.out + ".csv", rows);
  write_report_json(args.out + ".json", rows);
  std::cout << "wrote " << args.out << ".csv and " << args.out << ".json\n";
  return 0;
}

int run_counts(int capacity, const std::vector<int>& widths,
               const std::string& policy_name, const std::string& out) {
  const Policy policy =
      policy_name == "ff" ? Policy::kFirstFit : Policy::kRandomFit;
  std::ostringstream table;
  if (policy == Policy::kFirstFit || capacity <= kFfEnumerationMaxC) {
    auto enumeration = enumerate_link_states(policy, capacity, widths);
    write_counts_csv(table, capacity, widths, &enumeration);
  } else {
    write_counts_csv(table, capacity, widths);
  }
  std::cout << table.str();
  if (!out.empty()) {
    std::ofstream os(out);
    if (!os) throw std::runtime_error("cannot write '" + out + "'");
    os << table.str();
    std::cout << "wrote " << out << "\n";
  }
  return 0;
}

int run_compare(const std::string& path_a, const std::string& path_b,
                const ToleranceSpec& tol) {
  auto got = read_report_csv_file(path_a);
  auto want = read_report_csv_file(path_b);
  auto summary = compare(got, want, tol);
  int failures = 0;
  for (const auto& entry : summary.entries) {
    if (!entry.pass) ++failures;
    std::printf("%-4s %-40s got %.6e want %.6e tol %.2e\n",
                entry.pass ? "ok" : "FAIL", entry.key.c_str(), entry.got,
                entry.want, entry.tolerance);
  }
  std::printf("%zu rows compared, %d failures, max |diff| %.3e\n",
              summary.entries.size(), failures, summary.max_abs_diff);
  return summary.all_pass ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Blocking probabilities in elastic optical networks"};
  app.require_subcommand(1);

  EngineArgs exact_args, approx_args, sim_args;

  auto* exact = app.add_subcommand("exact", "exact CTMC blocking");
  add_engine_options(exact, exact_args);
  exact->add_option("--dump-states", exact_args.dump_states_path,
                    "write the canonical state-space listing");

  auto* approx = app.add_subcommand("approx", "fixed-point approximation");
  add_engine_options(approx, approx_args);
  approx->add_option("--variant", approx_args.variant,
                     "ees, soc or uniform (default: config `variant`)");
  approx->add_option("--trace", approx_args.trace_path,
                     "per-iteration convergence trace CSV (first point)");

  auto* sim = app.add_subcommand("sim", "discrete-event simulation");
  add_engine_options(sim, sim_args);
  sim->add_option_function<std::int64_t>(
      "--requests", [&](std::int64_t v) { sim_args.requests = v; },
      "connection requests per point (default: config `requests`)");
  sim->add_option_function<std::uint64_t>(
      "--seed", [&](std::uint64_t v) { sim_args.seed = v; },
      "RNG seed (default: config `seed`)");

  int counts_capacity = 0;
  std::vector<int> counts_widths;
  std::string counts_policy = "rf", counts_out;
  auto* counts =
      app.add_subcommand("counts", "per-(x,k) link state classification");
  counts->add_option("--C", counts_capacity, "slices per link")->required();
  counts->add_option("--d", counts_widths, "class widths")
      ->required()
      ->delimiter(',');
  counts->add_option("--policy", counts_policy, "rf or ff")
      ->check(CLI::IsMember({"rf", "ff"}));
  counts->add_option("--out", counts_out, "also write the CSV here");

  std::string cmp_a, cmp_b;
  ToleranceSpec cmp_tol;
  auto* cmp = app.add_subcommand("compare", "diff two report CSVs");
  cmp->add_option("report", cmp_a, "report to check")->required();
  cmp->add_option("reference", cmp_b, "reference report")->required();
  cmp->add_option("--rtol", cmp_tol.rtol, "relative tolerance");
  cmp->add_option("--atol", cmp_tol.atol, "absolute tolerance");
  cmp->add_option("--ci-mult", cmp_tol.ci_mult,
                  "add this multiple of any row's CI half-width");

  CLI11_PARSE(app, argc, argv);

  try {
    if (exact->parsed()) return run_engine(Engine::kExact, exact_args);
    if (approx->parsed()) return run_engine(Engine::kApprox, approx_args);
    if (sim->parsed()) return run_engine(Engine::kSim, sim_args);
    if (counts->parsed())
      return run_counts(counts_capacity, counts_widths, counts_policy,
                        counts_out);
    if (cmp->parsed()) return run_compare(cmp_a, cmp_b, cmp_tol);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
