// zerocred: hurdle / zero-inflated count mixture models with random effects,
// predictive credibility computations, stochastic-order checks, table
// reproduction, panel simulation, fitting and prediction.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "zerocred/experiments.hpp"
#include "zerocred/fit.hpp"
#include "zerocred/orders.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace zerocred;

namespace {

constexpr const char* kVersion = "0.1.0";

// Exit code contract: 0 success, 1 internal error, 2 strict-tolerance
// failure, 3 violations found, 64 usage, 65 data.
enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kStrictFailure = 2,
  kViolations = 3,
  kUsage = 64,
  kData = 65,
};

struct ModelFlags {
  std::string family = "comono";
  double mu1 = 0.0, mu2 = 0.0, s1sq = 1.0, s2sq = 1.0, rho = 0.5;
  double a = 0.5, b = 1.0, alpha = 1.0, beta = 1.0;
  double kappa2 = 1.0, r = 1.0;
  std::string link = "softplus";
  std::vector<double> c_seq{0.0};
  std::vector<double> d_seq{0.0};

  void attach(CLI::App* cmd) {
    cmd->add_option("--family", family,
                    "Model family: gauss|conj|comono|nb|zip|zipgauss")
        ->envname("ZEROCRED_FAMILY");
    cmd->add_option("--mu1", mu1, "Bivariate-normal mean of the binary effect");
    cmd->add_option("--mu2", mu2, "Bivariate-normal mean of the count effect");
    cmd->add_option("--s1sq", s1sq, "Variance of the binary effect");
    cmd->add_option("--s2sq", s2sq, "Variance of the count effect");
    cmd->add_option("--rho", rho, "Correlation of the random effects");
    cmd->add_option("--a", a, "Beta shape a");
    cmd->add_option("--b", b, "Beta shape b");
    cmd->add_option("--alpha", alpha, "Gamma shape");
    cmd->add_option("--beta", beta, "Gamma rate");
    cmd->add_option("--kappa2", kappa2, "Scalar random-effect variance");
    cmd->add_option("--r", r, "Negative-binomial shape");
    cmd->add_option("--link", link, "Count link: exp|softplus|logistic");
    cmd->add_option("--c", c_seq, "Binary-stage offsets c_t")->delimiter(',');
    cmd->add_option("--d", d_seq, "Count-stage offsets d_t")->delimiter(',');
  }

  ModelSpec build() const {
    if (family == "gauss") return GaussHurdle{{mu1, mu2, s1sq, s2sq, rho}};
    if (family == "conj") return ConjHurdle{{a, b, alpha, beta}};
    if (family == "comono")
      return ComonoHurdle{{0.0, kappa2}, link_from_name(link), c_seq, d_seq};
    if (family == "nb") return NBHurdle{{0.0, kappa2}, r, c_seq, d_seq};
    if (family == "zip") return ZIPComono{{0.0, kappa2}, link_from_name(link), c_seq, d_seq};
    if (family == "zipgauss") return ZIPGauss{{mu1, mu2, s1sq, s2sq, rho}};
    throw CLI::ValidationError("--family", "unknown model family: " + family);
  }
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

void write_manifest(const fs::path& dir, const std::string& command, const json& config) {
  json manifest;
  manifest["tool"] = "zerocred";
  manifest["version"] = kVersion;
  manifest["command"] = command;
  manifest["config"] = config;
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

std::string cli_config_snapshot(const CLI::App& cmd) {
  // An INI snapshot of the resolved options (dotted subcommand keys); feed
  // it back with `zerocred <command> --config <file>` to reproduce the run.
  const CLI::App* root = &cmd;
  while (root->get_parent() != nullptr) root = root->get_parent();
  return root->config_to_str(true, true);
}

ClaimHistory parse_history(const std::string& text) {
  ClaimHistory out;
  std::string token;
  std::istringstream is(text);
  while (std::getline(is, token, ',')) {
    if (token.empty()) continue;
    out.push_back(std::stol(token));
  }
  return out;
}

// ---------------------------------------------------------------------------

int cmd_reproduce(const std::string& table, const fs::path& out_dir, Method method,
                  const MCMCConfig& mcmc, int nodes, unsigned threads, bool strict,
                  bool c1_zero_one, const CLI::App& cmd) {
  fs::create_directories(out_dir);
  std::vector<TableId> ids;
  if (table == "all") ids = all_tables();
  else ids.push_back(table_from_name(table));

  bool strict_ok = true;
  json config;
  for (TableId id : ids) {
    TableJob job;
    job.id = id;
    job.method = method;
    job.mcmc = mcmc;
    job.quad_nodes = nodes;
    job.threads = threads;
    job.c1_condition_zero_one = c1_zero_one;
    const TableResult result = run_table(job);

    std::ostringstream csv;
    result.write_csv(csv);
    write_text(out_dir / (result.table + ".csv"), csv.str());
    config[result.table] = result.manifest();

    if (strict) {
      const auto refs = reference_rows(id);
      for (std::size_t i = 0; i < refs.size(); ++i) {
        const double tol0 = reference_tolerance(id, refs[i], 0);
        const double tol1 = reference_tolerance(id, refs[i], 1);
        const bool ok0 = std::abs(result.rows[i].quadrature_0 - refs[i].val_0) <= tol0;
        const bool ok1 = std::abs(result.rows[i].quadrature_1 - refs[i].val_1) <= tol1;
        if (!ok0 || !ok1) {
          strict_ok = false;
          std::cerr << result.table << " row " << refs[i].sweep
                    << ": outside the strict reference band\n";
        }
      }
    }
    std::cout << result.table << ": " << result.rows.size() << " rows -> "
              << (out_dir / (result.table + ".csv")).string() << "\n";
  }
  write_manifest(out_dir, "reproduce", config);
  write_text(out_dir / "config.ini", cli_config_snapshot(cmd));
  return strict_ok ? kOk : kStrictFailure;
}

int cmd_check(const ModelFlags& model, const std::string& order, const std::string& transform,
              const std::vector<std::string>& pair_texts, int lattice_t, int lattice_ymax,
              Method method, const MCMCConfig& mcmc, int nodes, double tol,
              const fs::path& out_dir, const CLI::App& cmd) {
  const ModelSpec spec = model.build();
  EvalConfig cfg;
  cfg.method = method;
  cfg.quad_nodes = nodes;
  cfg.mcmc = mcmc;

  std::vector<std::pair<ClaimHistory, ClaimHistory>> pairs;
  for (const std::string& text : pair_texts) {
    const std::size_t sep = text.find('|');
    if (sep == std::string::npos)
      throw CLI::ValidationError("--pair", "expected low|high, e.g. 0,1|0,2");
    pairs.emplace_back(parse_history(text.substr(0, sep)), parse_history(text.substr(sep + 1)));
  }
  if (pairs.empty()) pairs = comparable_pairs({lattice_t, lattice_ymax});

  json summary;
  std::size_t violations = 0;
  bool inconclusive = false;

  if (order == "base" || order == "general") {
    const Transform h =
        order == "base" ? Transform{Identity{}} : transform_from_name(transform);
    const OrderReport report = order == "base" ? check_base_order(spec, pairs, cfg, tol)
                                               : check_general_order(spec, h, pairs, cfg, tol);
    violations = report.violations();
    summary = report.to_json();
    if (!out_dir.empty()) {
      fs::create_directories(out_dir);
      std::ostringstream csv;
      report.write_csv(csv);
      write_text(out_dir / "report.csv", csv.str());
      write_text(out_dir / "report.json", summary.dump(2) + "\n");
      write_text(out_dir / "config.ini", cli_config_snapshot(cmd));
      write_manifest(out_dir, "check", summary);
    }
    std::cout << "checked " << report.comparisons.size() << " comparisons ("
              << report.transform << "): " << violations << " violations, rate "
              << report.violation_rate() << "\n";
  } else if (order == "lr") {
    if (pairs.size() != 1)
      throw CLI::ValidationError("--pair", "lr order takes exactly one history pair");
    const auto lo = predictive_pmf_table(spec, pairs[0].first, nodes);
    const auto hi = predictive_pmf_table(spec, pairs[0].second, nodes);
    const long nmax = static_cast<long>(std::min(lo.size(), hi.size())) - 1;
    const LrReport rep = check_lr_order(std::span(lo).first(nmax + 1),
                                        std::span(hi).first(nmax + 1), nmax);
    violations = rep.holds ? 0 : 1;
    inconclusive = rep.inconclusive;
    std::cout << "likelihood-ratio order " << (rep.holds ? "holds" : "fails")
              << (rep.inconclusive ? " (inconclusive: tail mass)" : "") << "\n";
  } else if (order == "tp2") {
    std::vector<double> grid;
    for (double t = -3.0; t <= 3.0 + 1e-9; t += 0.25) grid.push_back(t);
    const Tp2Report rep = check_tp2_kernel(spec, 1, grid, 10);
    violations = rep.holds ? 0 : 1;
    std::cout << "TP2 kernel condition " << (rep.holds ? "holds" : "fails") << "\n";
  } else if (order == "mtp2") {
    const LatticeSpec lattice{lattice_t, lattice_ymax};
    const MtpReport rep = check_mtp2_lattice(lattice, joint_logpmf(spec, lattice, nodes));
    violations = rep.holds ? 0 : 1;
    std::cout << "MTP2 lattice condition " << (rep.holds ? "holds" : "fails") << "\n";
  } else {
    throw CLI::ValidationError("--order", "unknown order kind: " + order);
  }
  if (inconclusive) return kViolations;
  return violations == 0 ? kOk : kViolations;
}

int cmd_simulate(const std::string& family, long k, long periods, std::uint64_t seed,
                 const fs::path& out, const CLI::App& cmd) {
  SynthConfig cfg;
  cfg.family = family_from_name(family);
  cfg.k = k;
  cfg.periods = periods;
  cfg.seed = seed;
  const PanelDataset panel = synth_panel(cfg);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  std::ostringstream csv;
  write_panel_csv(panel, csv);
  write_text(out, csv.str());
  const fs::path dir = out.has_parent_path() ? out.parent_path() : fs::path(".");
  write_manifest(dir, "simulate",
                 json{{"family", family}, {"k", k}, {"T", periods}, {"seed", seed}});
  write_text(dir / "config.ini", cli_config_snapshot(cmd));
  std::cout << "simulated " << panel.entities.size() << " entities x " << periods
            << " periods -> " << out.string() << "\n";
  return kOk;
}

int cmd_fit(const fs::path& data, const std::string& family, int sweeps, int burnin,
            std::uint64_t seed, const fs::path& out, const CLI::App& cmd) {
  const PanelDataset panel = read_panel_csv_file(data.string());
  const FitFamily fam = family_from_name(family);
  FitResult fit;
  if (family_has_random_effects(fam)) {
    FitConfig cfg;
    cfg.sweeps = sweeps;
    cfg.burnin = burnin;
    cfg.seed = seed;
    Rng rng(seed);
    fit = fit_mcmc(panel, fam, cfg, rng);
  } else {
    fit = fit_mle(panel, fam);
  }
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_text(out, fit.to_json().dump(2) + "\n");
  const fs::path dir = out.has_parent_path() ? out.parent_path() : fs::path(".");
  {
    std::ostringstream diag;
    diag << "chain,metric,value\n";
    char buf[64];
    for (const auto& [name, value] : fit.diagnostics) {
      std::snprintf(buf, sizeof(buf), "%.17g", value);
      diag << "1," << name << ',' << buf << '\n';
    }
    write_text(dir / "diagnostics.csv", diag.str());
  }
  write_manifest(dir, "fit",
                 json{{"data", data.string()},
                      {"family", family},
                      {"sweeps", sweeps},
                      {"burnin", burnin},
                      {"seed", seed}});
  write_text(dir / "config.ini", cli_config_snapshot(cmd));
  std::cout << "fitted " << family << " on " << panel.entities.size() << " entities -> "
            << out.string() << "\n";
  if (fam == FitFamily::ConjHurdle)
    std::cout << "  constraint a < beta: a = " << fit.link.a << ", beta = " << fit.link.beta
              << "\n";
  return kOk;
}

int cmd_predict(const fs::path& fit_path, const fs::path& train_path,
                const fs::path& holdout_path, const fs::path& out, const CLI::App& cmd) {
  std::ifstream is(fit_path);
  if (!is) throw PanelFormatError("cannot open fit file: " + fit_path.string(), 0, "");
  json j;
  is >> j;
  const FitResult fit = FitResult::from_json(j);
  const PanelDataset train = read_panel_csv_file(train_path.string());
  const PanelDataset holdout = read_panel_csv_file(holdout_path.string());
  const PredictResult pred = predict_oos(fit, train, holdout);

  std::ostringstream csv;
  csv << "entity,actual,predicted\n";
  char buf[64];
  for (const auto& row : pred.rows) {
    std::snprintf(buf, sizeof(buf), "%.17g", row.predicted);
    csv << row.entity << ',' << row.actual << ',' << buf << '\n';
  }
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_text(out, csv.str());
  const fs::path dir = out.has_parent_path() ? out.parent_path() : fs::path(".");
  write_manifest(dir, "predict",
                 json{{"fit", fit_path.string()},
                      {"train", train_path.string()},
                      {"holdout", holdout_path.string()},
                      {"mse", pred.mse}});
  write_text(dir / "config.ini", cli_config_snapshot(cmd));
  std::cout << "MSE = " << pred.mse << " over " << pred.rows.size() << " entities -> "
            << out.string() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Count mixture models with excessive zeros: credibility computations and "
               "stochastic-monotonicity checks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  app.set_config("--config", "", "Read options from an INI config file");
  app.option_defaults()->always_capture_default(true);

  // Each subcommand owns its option storage so config sections for one
  // command can never leak into another.
  struct CommonOpts {
    std::uint64_t seed = 1;
    unsigned threads = 0;
    int nodes = 64;
    MCMCConfig mcmc;
    std::string method = "quadrature";

    void attach(CLI::App* cmd, bool with_method) {
      cmd->fallthrough(true);
      cmd->add_option("--seed", seed, "Base seed")->envname("ZEROCRED_SEED");
      cmd->add_option("--threads", threads, "Worker threads (0: hardware)")
          ->envname("ZEROCRED_THREADS");
      if (with_method) {
        cmd->add_option("--method", method, "quadrature|mcmc|conjugate")
            ->envname("ZEROCRED_METHOD");
        cmd->add_option("--nodes", nodes, "Quadrature nodes per dimension")
            ->envname("ZEROCRED_NODES");
        cmd->add_option("--S", mcmc.draws, "MCMC draws per run")->envname("ZEROCRED_S");
        cmd->add_option("--R", mcmc.runs, "Independent MCMC runs")->envname("ZEROCRED_R");
        cmd->add_option("--burnin", mcmc.burnin, "MCMC burn-in")->envname("ZEROCRED_BURNIN");
      }
    }
  };

  // reproduce ---------------------------------------------------------------
  auto* reproduce = app.add_subcommand("reproduce", "Recompute a published table");
  std::string table = "all";
  std::string out_dir = "runs";
  bool strict = false, c1_zero_one = false;
  reproduce->add_option("--table", table,
                        "T1_sigma1|T2_sigma2|T3_mu2|Ex1_deductible|C1_rho|C2_zip_sigma1|"
                        "C3_zip_sigma2|Thm1_limit|all");
  reproduce->add_option("--out", out_dir, "Output directory")->envname("ZEROCRED_OUT");
  reproduce->add_flag("--strict", strict, "Exit 2 if outside the reference bands");
  reproduce->add_flag("--c1-condition-zero-one", c1_zero_one,
                      "Condition the C1 sweep on {0,1} instead of {1,2}");
  CommonOpts repro_opts;
  repro_opts.attach(reproduce, true);

  // check ---------------------------------------------------------------
  auto* check = app.add_subcommand("check", "Verify a stochastic-order property");
  ModelFlags model;
  model.attach(check);
  std::string order = "base", transform = "deductible(1)";
  std::vector<std::string> pair_texts;
  int lattice_t = 2, lattice_ymax = 3;
  double tol = 1e-8;
  std::string check_out;
  check->add_option("--order", order, "base|general|lr|tp2|mtp2");
  check->add_option("--transform", transform, "Payoff for --order general, e.g. limit(2)");
  check->add_option("--pair", pair_texts, "History pair low|high, e.g. 0,1|0,2")
      ->take_all();
  check->add_option("--lattice-t", lattice_t, "Lattice horizon");
  check->add_option("--lattice-ymax", lattice_ymax, "Lattice per-coordinate cap");
  check->add_option("--tol", tol, "Deterministic comparison tolerance");
  check->add_option("--out", check_out, "Report directory")->envname("ZEROCRED_OUT");
  CommonOpts check_opts;
  check_opts.attach(check, true);

  // simulate ---------------------------------------------------------------
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic claim panel");
  std::string sim_family = "comono_hurdle";
  long sim_k = 497, sim_T = 6;
  std::string sim_out = "panel.csv";
  simulate->add_option("--family", sim_family,
                       "gauss_hurdle|conj_hurdle|comono_hurdle|poisson_glmm|poisson_glm|"
                       "poisson_hurdle|poisson_zip");
  simulate->add_option("--k", sim_k, "Number of entities");
  simulate->add_option("--T", sim_T, "Periods per entity");
  simulate->add_option("--out", sim_out, "Panel CSV path")->envname("ZEROCRED_OUT");
  CommonOpts sim_opts;
  sim_opts.attach(simulate, false);

  // fit ---------------------------------------------------------------
  auto* fit = app.add_subcommand("fit", "Fit a model family to a claim panel");
  std::string fit_data, fit_family = "comono_hurdle", fit_out = "fit.json";
  int fit_sweeps = 1500, fit_burnin = 500;
  fit->add_option("--data", fit_data, "Panel CSV")->required();
  fit->add_option("--family", fit_family, "Model family (see simulate)");
  fit->add_option("--sweeps", fit_sweeps, "Recorded MCMC sweeps");
  fit->add_option("--burnin", fit_burnin, "Burn-in sweeps");
  fit->add_option("--out", fit_out, "Fit JSON path")->envname("ZEROCRED_OUT");
  CommonOpts fit_opts;
  fit_opts.attach(fit, false);

  // predict ---------------------------------------------------------------
  auto* predict = app.add_subcommand("predict", "One-step out-of-sample prediction");
  std::string pred_fit, pred_train, pred_holdout, pred_out = "predictions.csv";
  predict->add_option("--fit", pred_fit, "Fit JSON")->required();
  predict->add_option("--train", pred_train, "Training panel CSV")->required();
  predict->add_option("--holdout", pred_holdout, "Holdout panel CSV")->required();
  predict->add_option("--out", pred_out, "Predictions CSV path")->envname("ZEROCRED_OUT");
  CommonOpts pred_opts;
  pred_opts.attach(predict, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (reproduce->parsed()) {
      repro_opts.mcmc.seed = repro_opts.seed;
      return cmd_reproduce(table, out_dir, method_from_name(repro_opts.method),
                           repro_opts.mcmc, repro_opts.nodes, repro_opts.threads, strict,
                           c1_zero_one, *reproduce);
    }
    if (check->parsed()) {
      check_opts.mcmc.seed = check_opts.seed;
      return cmd_check(model, order, transform, pair_texts, lattice_t, lattice_ymax,
                       method_from_name(check_opts.method), check_opts.mcmc,
                       check_opts.nodes, tol, check_out, *check);
    }
    if (simulate->parsed())
      return cmd_simulate(sim_family, sim_k, sim_T, sim_opts.seed, sim_out, *simulate);
    if (fit->parsed())
      return cmd_fit(fit_data, fit_family, fit_sweeps, fit_burnin, fit_opts.seed, fit_out,
                     *fit);
    if (predict->parsed())
      return cmd_predict(pred_fit, pred_train, pred_holdout, pred_out, *predict);
    return kUsage;
  } catch (const PanelFormatError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const CLI::Error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::domain_error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInternal;
  }
}
