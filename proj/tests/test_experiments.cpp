#include <doctest.h>

#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "zerocred/experiments.hpp"

using namespace zerocred;

TEST_CASE("sweep rows match the published tables") {
  CHECK(table_sweep(TableId::T1_sigma1) == std::vector<double>{5.0, 2.0, 1.0, 0.1});
  CHECK(table_sweep(TableId::T3_mu2).size() == 5);
  CHECK(table_sweep(TableId::Ex1_deductible).size() == 9);
  CHECK(table_sweep(TableId::C1_rho).size() == 5);
  CHECK(table_from_name("C2_zip_sigma1") == TableId::C2_zip_sigma1);
  CHECK_THROWS_AS(table_from_name("nope"), std::invalid_argument);
}

TEST_CASE("deductible table is exact to the published 3 decimals") {
  TableJob job;
  job.id = TableId::Ex1_deductible;
  const TableResult res = run_table(job);
  REQUIRE(res.rows.size() == 9);
  const auto ref = reference_rows(TableId::Ex1_deductible);
  for (std::size_t i = 0; i < res.rows.size(); ++i) {
    CHECK(std::abs(res.rows[i].est_0 - ref[i].val_0) <=
          reference_tolerance(TableId::Ex1_deductible, ref[i], 0));
    CHECK(std::abs(res.rows[i].est_1 - ref[i].val_1) <=
          reference_tolerance(TableId::Ex1_deductible, ref[i], 1));
    // The quadrature cross-check agrees with the exact conjugate values.
    CHECK(res.rows[i].quadrature_0 == doctest::Approx(res.rows[i].est_0).epsilon(1e-4));
  }
}

TEST_CASE("sign reversal pattern in the first sweep") {
  TableJob job;
  job.id = TableId::T1_sigma1;
  job.method = Method::Quadrature;
  const TableResult res = run_table(job);
  // E[Y2|0] < E[Y2|1] at 5.0 and 2.0; reversed at 1.0 and 0.1.
  CHECK(res.rows[0].quadrature_0 < res.rows[0].quadrature_1);
  CHECK(res.rows[1].quadrature_0 < res.rows[1].quadrature_1);
  CHECK(res.rows[2].quadrature_0 > res.rows[2].quadrature_1);
  CHECK(res.rows[3].quadrature_0 > res.rows[3].quadrature_1);
}

TEST_CASE("quadrature and mcmc estimates agree within four mcse") {
  TableJob job;
  job.id = TableId::T1_sigma1;
  job.method = Method::MCMC;
  job.mcmc.draws = 500;
  job.mcmc.burnin = 250;
  job.mcmc.runs = 24;
  job.mcmc.seed = 31;
  const TableResult res = run_table(job);
  for (const TableRow& row : res.rows) {
    CHECK(std::abs(row.est_0 - row.quadrature_0) <= 4.0 * row.mcse_0);
    CHECK(std::abs(row.est_1 - row.quadrature_1) <= 4.0 * row.mcse_1);
    CHECK(row.mcse_0 > 0.0);
  }
}

TEST_CASE("same seed reproduces the result byte for byte") {
  TableJob job;
  job.id = TableId::C3_zip_sigma2;
  job.method = Method::MCMC;
  job.mcmc.draws = 200;
  job.mcmc.burnin = 100;
  job.mcmc.runs = 8;
  job.mcmc.seed = 777;
  std::ostringstream a, b;
  run_table(job).write_csv(a);
  run_table(job).write_csv(b);
  CHECK(a.str() == b.str());
  job.mcmc.seed = 778;
  std::ostringstream c;
  run_table(job).write_csv(c);
  CHECK(a.str() != c.str());
}

TEST_CASE("shared parameter point appears identically in both zip sweeps") {
  TableJob j2, j3;
  j2.id = TableId::C2_zip_sigma1;
  j3.id = TableId::C3_zip_sigma2;
  j2.method = j3.method = Method::Quadrature;
  const TableResult r2 = run_table(j2);
  const TableResult r3 = run_table(j3);
  // sigma1^2 = 1 row of C2 and sigma2^2 = 1 row of C3 are the same model.
  CHECK(r2.rows[1].quadrature_0 == doctest::Approx(r3.rows[1].quadrature_0).epsilon(1e-6));
  CHECK(r2.rows[1].quadrature_1 == doctest::Approx(r3.rows[1].quadrature_1).epsilon(1e-6));
}

TEST_CASE("node doubling is stable on every table parameter set") {
  for (TableId id : {TableId::T1_sigma1, TableId::T2_sigma2, TableId::T3_mu2,
                     TableId::C1_rho, TableId::C2_zip_sigma1, TableId::C3_zip_sigma2}) {
    TableJob j64, j128;
    j64.id = j128.id = id;
    j64.method = j128.method = Method::Quadrature;
    j64.quad_nodes = 64;
    j128.quad_nodes = 128;
    const TableResult a = run_table(j64);
    const TableResult b = run_table(j128);
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
      CHECK(std::abs(a.rows[i].quadrature_0 - b.rows[i].quadrature_0) < 1e-6);
      CHECK(std::abs(a.rows[i].quadrature_1 - b.rows[i].quadrature_1) < 1e-6);
    }
  }
}

TEST_CASE("zip sweep mcmc agrees with quadrature too") {
  TableJob job;
  job.id = TableId::C2_zip_sigma1;
  job.method = Method::MCMC;
  job.mcmc.draws = 400;
  job.mcmc.burnin = 200;
  job.mcmc.runs = 16;
  job.mcmc.seed = 63;
  const TableResult res = run_table(job);
  for (const TableRow& row : res.rows) {
    CHECK(std::abs(row.est_0 - row.quadrature_0) <= 4.0 * row.mcse_0);
    CHECK(std::abs(row.est_1 - row.quadrature_1) <= 4.0 * row.mcse_1);
  }
}

TEST_CASE("c1 conditioning variants") {
  TableJob job;
  job.id = TableId::C1_rho;
  job.method = Method::Quadrature;
  const TableResult headers = run_table(job);
  CHECK(headers.cond_lo == 1);
  CHECK(headers.cond_hi == 2);
  job.c1_condition_zero_one = true;
  const TableResult caption = run_table(job);
  CHECK(caption.cond_lo == 0);
  CHECK(caption.cond_hi == 1);
  CHECK(headers.rows[0].quadrature_0 != caption.rows[0].quadrature_0);
}

TEST_CASE("limit sweep signs and the vanishing-variance limit") {
  const std::vector<double> grid = {5.0, 0.1};
  const Theorem1Result res = run_theorem1_sweep(grid, 0.0, 0.0, 1.0, 0.5);
  CHECK(res.diff[0] < 0.0);  // sigma1^2 = 5: no reversal yet
  CHECK(res.diff[1] > 0.0);  // sigma1^2 = 0.1: reversed
  CHECK(res.limit > 0.0);
  CHECK(res.limit == doctest::Approx(res.limit_cond0 - res.limit_cond1).epsilon(1e-12));

  // Degenerate W: the covariance term vanishes with sigma2^2.
  const Theorem1Result tiny = run_theorem1_sweep(grid, 0.3, -0.5, 1e-10, 0.5);
  CHECK(std::abs(tiny.limit) < 1e-6);
}

TEST_CASE("limit row is appended to the limit table") {
  TableJob job;
  job.id = TableId::Thm1_limit;
  const TableResult res = run_table(job);
  REQUIRE(res.rows.size() == table_sweep(TableId::Thm1_limit).size() + 1);
  const TableRow& last = res.rows.back();
  CHECK(last.sweep == 0.0);
  CHECK(last.est_0 > last.est_1);
  // The smallest positive grid point is within 1e-3 of the limit.
  const TableRow& near = res.rows[res.rows.size() - 2];
  CHECK(std::abs((near.est_0 - near.est_1) - (last.est_0 - last.est_1)) < 1e-3);
}

TEST_CASE("manifest carries the run provenance") {
  TableJob job;
  job.id = TableId::T2_sigma2;
  job.method = Method::Quadrature;
  job.mcmc.seed = 5150;
  const TableResult res = run_table(job);
  const nlohmann::json m = res.manifest();
  CHECK(m["table"] == "T2_sigma2");
  CHECK(m["seed"] == 5150);
  CHECK(m["conditioning"][0] == 0);
  std::ostringstream csv;
  res.write_csv(csv);
  CHECK(csv.str().rfind("sigma2_sq,est_0,mcse_0,est_1,mcse_1,quadrature_0,quadrature_1\n",
                        0) == 0);
}
