#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <sstream>

#include "eonbp/report.hpp"
#include "eonbp/runner.hpp"
#include "test_helpers.hpp"

using namespace eonbp;

namespace {

std::vector<ReportRow> sample_rows() {
  ReportRow a;
  a.mode = "rf";
  a.engine = "exact";
  a.load = 0.1;
  a.per_od_class = {{"a>b", 1, 6.8e-3}, {"a>b", 2, 7.1e-3}};
  a.overall_bp = 6.95e-3;
  a.runtime_s = 0.25;
  a.meta = "states=60;residual=1e-12";
  ReportRow b;
  b.mode = "ff";
  b.engine = "approx";
  b.variant = "soc";
  b.load = 0.6;
  b.per_od_class = {{"a>b", 1, 5.0e-2}, {"a>b", 2, 8.0e-2}};
  b.overall_bp = 6.5e-2;
  b.runtime_s = 0.03;
  b.meta = "converged=1;iters=14";
  return {a, b};
}

}  // namespace

TEST_CASE("report CSV round-trips value-identically") {
  auto rows = sample_rows();
  std::ostringstream os;
  write_report_csv(os, rows);
  std::istringstream is(os.str());
  auto back = read_report_csv(is);

  REQUIRE(back.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(back[i].mode == rows[i].mode);
    CHECK(back[i].engine == rows[i].engine);
    CHECK(back[i].variant == rows[i].variant);
    CHECK(back[i].load == rows[i].load);
    CHECK(back[i].overall_bp == rows[i].overall_bp);
    CHECK(back[i].runtime_s == rows[i].runtime_s);
    CHECK(back[i].meta == rows[i].meta);
    REQUIRE(back[i].per_od_class.size() == rows[i].per_od_class.size());
    for (std::size_t e = 0; e < rows[i].per_od_class.size(); ++e) {
      CHECK(back[i].per_od_class[e].od == rows[i].per_od_class[e].od);
      CHECK(back[i].per_od_class[e].cls == rows[i].per_od_class[e].cls);
      CHECK(back[i].per_od_class[e].bp == rows[i].per_od_class[e].bp);
    }
  }

  // Compare of a report against itself passes at zero tolerance.
  auto summary = compare(back, rows, {});
  CHECK(summary.all_pass);
  CHECK(summary.max_abs_diff == 0.0);
}

TEST_CASE("report CSV keeps full double precision") {
  ReportRow row;
  row.mode = "rf";
  row.engine = "exact";
  row.load = 0.1 * 3;  // not exactly representable as a short decimal
  row.per_od_class = {{"a>b", 1, 1.0 / 3.0}};
  row.overall_bp = 4.6883321077e-3 * (1 + 1e-13);
  row.runtime_s = 0.1 + 0.2;
  std::ostringstream os;
  write_report_csv(os, {row});
  std::istringstream is(os.str());
  auto back = read_report_csv(is);
  REQUIRE(back.size() == 1);
  CHECK(back[0].load == row.load);
  CHECK(back[0].overall_bp == row.overall_bp);
  CHECK(back[0].runtime_s == row.runtime_s);
  CHECK(back[0].per_od_class[0].bp == row.per_od_class[0].bp);
}

TEST_CASE("compare applies tolerances") {
  auto rows = sample_rows();
  auto perturbed = rows;
  perturbed[0].overall_bp += 2e-4;
  perturbed[0].per_od_class[0].bp += 2e-4;

  auto strict = compare(perturbed, rows, {});
  CHECK_FALSE(strict.all_pass);

  // 5% relative tolerance passes the 6.8e-3-style diff.
  ToleranceSpec rtol;
  rtol.rtol = 0.05;
  CHECK(compare(perturbed, rows, rtol).all_pass);

  ToleranceSpec atol;
  atol.atol = 3e-4;
  CHECK(compare(perturbed, rows, atol).all_pass);
}

TEST_CASE("compare honors per-row atol metadata and CI scaling") {
  auto rows = sample_rows();
  auto reference = rows;
  reference[0].meta = "atol=5e-4";
  auto perturbed = rows;
  perturbed[0].overall_bp += 4e-4;
  perturbed[0].per_od_class[0].bp += 4e-4;
  perturbed[0].per_od_class[1].bp += 4e-4;
  CHECK(compare(perturbed, reference, {}).all_pass);

  // Sim-style CI metadata: tolerance 3*ci covers the diff.
  auto sim_got = rows;
  sim_got[1].meta = "ci=1e-3";
  sim_got[1].overall_bp += 2.5e-3;
  sim_got[1].per_od_class[0].bp += 2.5e-3;
  sim_got[1].per_od_class[1].bp += 2.5e-3;
  ToleranceSpec ci_tol;
  ci_tol.ci_mult = 3.0;
  CHECK(compare(sim_got, rows, ci_tol).all_pass);
  CHECK_FALSE(compare(sim_got, rows, {}).all_pass);
}

TEST_CASE("compare rejects key mismatches") {
  auto rows = sample_rows();
  auto missing = rows;
  missing.pop_back();
  CHECK_THROWS_AS(compare(missing, rows, {}), std::runtime_error);
}

TEST_CASE("runner produces rows for every mode and load") {
  auto cfg = eonbp::test::single_link_config(7, {3, 4});
  cfg.loads = {0.1, 0.5};
  RunSpec spec;
  spec.base = cfg;
  spec.engine = Engine::kApprox;
  spec.modes = {{Policy::kRandomFit, false}, {Policy::kFirstFit, false}};
  auto rows = run_rows(spec);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].mode == "rf");
  CHECK(rows[0].load == 0.1);
  CHECK(rows[3].mode == "ff");
  CHECK(rows[3].load == 0.5);
  for (const auto& row : rows) {
    CHECK(row.per_od_class.size() == 2);
    CHECK(row.overall_bp >= 0.0);
    CHECK(row.overall_bp <= 1.0);
    CHECK(row.meta.find("converged=1") != std::string::npos);
    CHECK(row.runtime_s >= 0.0);
  }
  // FF on a small link uses the enumeration-backed counts.
  CHECK(rows[2].meta.find("counts=ff-enumeration") != std::string::npos);
  CHECK(rows[0].meta.find("counts=rf-formulas") != std::string::npos);
}

TEST_CASE("report files: CSV and JSON written next to each other") {
  namespace fs = std::filesystem;
  auto dir = fs::temp_directory_path() / "eonbp_report_test";
  fs::create_directories(dir);
  auto rows = sample_rows();
  write_report_csv((dir / "r.csv").string(), rows);
  write_report_json((dir / "r.json").string(), rows);
  auto back = read_report_csv_file((dir / "r.csv").string());
  CHECK(back.size() == 2);
  std::ifstream json(dir / "r.json");
  nlohmann::json doc;
  json >> doc;
  REQUIRE(doc.is_array());
  CHECK(doc.size() == 2);
  CHECK(doc[0]["per_od_class"].size() == 2);
  fs::remove_all(dir);
}
