#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include <nlohmann/json.hpp>

#include "zerocred/experiments.hpp"
#include "zerocred/fit.hpp"
#include "zerocred/orders.hpp"

namespace py = pybind11;
using namespace zerocred;

namespace {

EvalConfig make_eval_config(const std::string& method, int nodes, int draws, int burnin,
                            int runs, std::uint64_t seed, unsigned threads) {
  EvalConfig cfg;
  cfg.method = method_from_name(method);
  cfg.quad_nodes = nodes;
  cfg.mcmc.draws = draws;
  cfg.mcmc.burnin = burnin;
  cfg.mcmc.runs = runs;
  cfg.mcmc.seed = seed;
  cfg.threads = threads;
  return cfg;
}

py::dict order_report_to_dict(const OrderReport& rep) {
  py::dict out;
  out["method"] = rep.method;
  out["transform"] = rep.transform;
  out["violations"] = rep.violations();
  out["violation_rate"] = rep.violation_rate();
  py::list rows;
  for (const auto& c : rep.comparisons) {
    py::dict row;
    row["history_low"] = c.lo;
    row["history_high"] = c.hi;
    row["value_low"] = c.value_lo;
    row["value_high"] = c.value_hi;
    row["gap"] = c.gap;
    row["violated"] = c.violated;
    row["inconclusive"] = c.inconclusive;
    rows.append(std::move(row));
  }
  out["comparisons"] = std::move(rows);
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Count mixture models with excessive zeros: credibility computations and "
            "stochastic-order checks";
  m.attr("__version__") = "0.1.0";

  py::class_<Rng>(m, "Rng")
      .def(py::init<std::uint64_t>(), py::arg("seed"))
      .def("split", &Rng::split, py::arg("a"), py::arg("b") = 0, py::arg("c") = 0)
      .def("uniform", py::overload_cast<>(&Rng::uniform))
      .def("normal", py::overload_cast<>(&Rng::normal))
      .def("gamma", &Rng::gamma, py::arg("shape"), py::arg("rate"))
      .def("beta", &Rng::beta, py::arg("a"), py::arg("b"))
      .def("poisson", &Rng::poisson, py::arg("mean"));

  // Count distributions: the variant alternatives are registered so the
  // std::variant caster can pass them in either direction.
  py::class_<Poisson>(m, "Poisson").def_readonly("mean", &Poisson::lambda);
  py::class_<NegBin>(m, "NegBin")
      .def_readonly("r", &NegBin::r)
      .def_readonly("p", &NegBin::p);
  py::class_<Bernoulli>(m, "Bernoulli").def_readonly("theta", &Bernoulli::theta);
  m.def("poisson", [](double lam) { return Poisson{lam}; }, py::arg("mean"));
  m.def("negbin", [](double r, double p) { return NegBin{r, p}; }, py::arg("r"),
        py::arg("p"));
  m.def("bernoulli", [](double theta) { return Bernoulli{theta}; }, py::arg("theta"));
  m.def("count_pmf", &count_pmf, py::arg("dist"), py::arg("n"));
  m.def("count_logpmf", &count_logpmf, py::arg("dist"), py::arg("n"));
  m.def("count_mean", &count_mean, py::arg("dist"));
  m.def("count_support_max", &count_support_max, py::arg("dist"),
        py::arg("tail") = kTailMass);

  // Links ---------------------------------------------------------------------
  py::enum_<LinkFn>(m, "LinkFn")
      .value("exp", LinkFn::Exp)
      .value("softplus", LinkFn::Softplus)
      .value("logistic", LinkFn::Logistic);
  m.def("link_eval", &link_eval, py::arg("fn"), py::arg("x"));
  m.def("link_deriv", &link_deriv, py::arg("fn"), py::arg("x"));

  // Models: each ModelSpec alternative is a registered class.
  py::class_<GaussHurdle>(m, "GaussHurdle");
  py::class_<ConjHurdle>(m, "ConjHurdle");
  py::class_<ComonoHurdle>(m, "ComonoHurdle");
  py::class_<NBHurdle>(m, "NBHurdle");
  py::class_<ZIPComono>(m, "ZIPComono");
  py::class_<ZIPGauss>(m, "ZIPGauss");
  m.def("gauss_hurdle",
        [](double mu1, double mu2, double s1sq, double s2sq, double rho) {
          return GaussHurdle{{mu1, mu2, s1sq, s2sq, rho}};
        },
        py::arg("mu1"), py::arg("mu2"), py::arg("s1sq"), py::arg("s2sq"), py::arg("rho"));
  m.def("conj_hurdle",
        [](double a, double b, double alpha, double beta) {
          return ConjHurdle{{a, b, alpha, beta}};
        },
        py::arg("a"), py::arg("b"), py::arg("alpha"), py::arg("beta"));
  m.def("comono_hurdle",
        [](double kappa2, LinkFn link, std::vector<double> c, std::vector<double> d) {
          return ComonoHurdle{{0.0, kappa2}, link, std::move(c), std::move(d)};
        },
        py::arg("kappa2"), py::arg("link") = LinkFn::Softplus,
        py::arg("c") = std::vector<double>{0.0}, py::arg("d") = std::vector<double>{0.0});
  m.def("nb_hurdle",
        [](double kappa2, double r, std::vector<double> c, std::vector<double> d) {
          return NBHurdle{{0.0, kappa2}, r, std::move(c), std::move(d)};
        },
        py::arg("kappa2"), py::arg("r"), py::arg("c") = std::vector<double>{0.0},
        py::arg("d") = std::vector<double>{0.0});
  m.def("zip_comono",
        [](double kappa2, LinkFn link, std::vector<double> c, std::vector<double> d) {
          return ZIPComono{{0.0, kappa2}, link, std::move(c), std::move(d)};
        },
        py::arg("kappa2"), py::arg("link") = LinkFn::Softplus,
        py::arg("c") = std::vector<double>{0.0}, py::arg("d") = std::vector<double>{0.0});
  m.def("zip_gauss",
        [](double mu1, double mu2, double s1sq, double s2sq, double rho) {
          return ZIPGauss{{mu1, mu2, s1sq, s2sq, rho}};
        },
        py::arg("mu1"), py::arg("mu2"), py::arg("s1sq"), py::arg("s2sq"), py::arg("rho"));
  m.def("model_name", [](const ModelSpec& spec) { return std::string(model_name(spec)); },
        py::arg("spec"));

  m.def("cond_pmf",
        [](const ModelSpec& spec, long t, const std::vector<double>& theta, long y) {
          return cond_pmf(spec, t, theta, y);
        },
        py::arg("spec"), py::arg("t"), py::arg("theta"), py::arg("y"));
  m.def("cond_mean",
        [](const ModelSpec& spec, long t, const std::vector<double>& theta) {
          return cond_mean(spec, t, theta);
        },
        py::arg("spec"), py::arg("t"), py::arg("theta"));
  m.def("simulate_path",
        [](const ModelSpec& spec, long periods, std::uint64_t seed) {
          Rng rng(seed);
          return simulate_path(spec, periods, rng);
        },
        py::arg("spec"), py::arg("periods"), py::arg("seed"));
  m.def("sufficient_stats", [](const ClaimHistory& history) {
          const SufficientStats s = sufficient_stats(history);
          return py::make_tuple(s.r_t, s.m_t);
        },
        py::arg("history"));

  // Posterior ---------------------------------------------------------------
  py::class_<PosteriorState>(m, "PosteriorState")
      .def_readonly("a_star", &PosteriorState::a_star)
      .def_readonly("b_star", &PosteriorState::b_star)
      .def_readonly("alpha_star", &PosteriorState::alpha_star)
      .def_readonly("beta_star", &PosteriorState::beta_star)
      .def_readonly("r_t", &PosteriorState::r_t)
      .def_readonly("m_t", &PosteriorState::m_t)
      .def_readonly("t", &PosteriorState::t);
  m.def("conjugate_update",
        [](double a, double b, double alpha, double beta, const ClaimHistory& history) {
          return conjugate_update(BetaGamma{a, b, alpha, beta}, history);
        },
        py::arg("a"), py::arg("b"), py::arg("alpha"), py::arg("beta"), py::arg("history"));
  m.def("predictive_mean_conjugate", &predictive_mean_conjugate, py::arg("state"));
  m.def("condition_eq53", &condition_eq53, py::arg("state"));

  py::class_<Identity>(m, "Identity");
  py::class_<Deductible>(m, "Deductible").def_readonly("d", &Deductible::d);
  py::class_<Limit>(m, "Limit").def_readonly("d", &Limit::d);
  m.def("identity", [] { return Identity{}; });
  m.def("deductible", [](long d) { return Deductible{d}; }, py::arg("d"));
  m.def("limit", [](long d) { return Limit{d}; }, py::arg("d"));

  m.def("predictive_expectation",
        [](const ModelSpec& spec, const ClaimHistory& history, const Transform& h,
           const std::string& method, int nodes, int draws, int burnin, int runs,
           std::uint64_t seed, unsigned threads) {
          const Estimate est = predictive_expectation(
              spec, history, h, make_eval_config(method, nodes, draws, burnin, runs, seed,
                                                 threads));
          return py::make_tuple(est.value, est.mcse);
        },
        py::arg("spec"), py::arg("history"), py::arg("transform"),
        py::arg("method") = "quadrature", py::arg("nodes") = 64, py::arg("draws") = 1000,
        py::arg("burnin") = 500, py::arg("runs") = 100, py::arg("seed") = 1,
        py::arg("threads") = 0,
        "E[h(Y_{t+1}) | history]; returns (estimate, mcse)");
  m.def("mcmc_posterior",
        [](const ModelSpec& spec, const ClaimHistory& history, int draws, int burnin,
           std::uint64_t seed) {
          MCMCConfig cfg;
          cfg.draws = draws;
          cfg.burnin = burnin;
          Rng rng(seed);
          const McmcSamples samples = mcmc_posterior(spec, history, cfg, rng);
          std::vector<std::vector<double>> out;
          out.reserve(samples.draws.size());
          for (const auto& d : samples.draws)
            out.emplace_back(d.begin(), d.begin() + samples.dim);
          return out;
        },
        py::arg("spec"), py::arg("history"), py::arg("draws") = 1000,
        py::arg("burnin") = 500, py::arg("seed") = 1);
  m.def("predictive_pmf_table", &predictive_pmf_table, py::arg("spec"), py::arg("history"),
        py::arg("nodes") = 64, py::arg("tail") = kTailMass);

  // Orders -------------------------------------------------------------------
  m.def("check_lr_order",
        [](const std::vector<double>& lo, const std::vector<double>& hi, long support_max) {
          const LrReport rep = check_lr_order(lo, hi, support_max);
          py::dict out;
          out["holds"] = rep.holds;
          out["inconclusive"] = rep.inconclusive;
          if (rep.first_violation)
            out["first_violation"] = py::make_tuple(rep.first_violation->first,
                                                    rep.first_violation->second);
          return out;
        },
        py::arg("pmf_low"), py::arg("pmf_high"), py::arg("support_max"));
  m.def("check_base_order",
        [](const ModelSpec& spec,
           const std::vector<std::pair<ClaimHistory, ClaimHistory>>& pairs,
           const std::string& method, int nodes, double tol) {
          return order_report_to_dict(
              check_base_order(spec, pairs, make_eval_config(method, nodes, 1000, 500, 100,
                                                             1, 0), tol));
        },
        py::arg("spec"), py::arg("pairs"), py::arg("method") = "quadrature",
        py::arg("nodes") = 64, py::arg("tol") = 1e-8);
  m.def("check_general_order",
        [](const ModelSpec& spec, const Transform& h,
           const std::vector<std::pair<ClaimHistory, ClaimHistory>>& pairs,
           const std::string& method, int nodes, double tol) {
          return order_report_to_dict(check_general_order(
              spec, h, pairs, make_eval_config(method, nodes, 1000, 500, 100, 1, 0), tol));
        },
        py::arg("spec"), py::arg("transform"), py::arg("pairs"),
        py::arg("method") = "quadrature", py::arg("nodes") = 64, py::arg("tol") = 1e-8);
  m.def("comparable_pairs",
        [](int t, int y_max) { return comparable_pairs({t, y_max}); }, py::arg("t"),
        py::arg("y_max"));
  m.def("check_tp2_kernel",
        [](const ModelSpec& spec, long t, const std::vector<double>& grid, long y_max) {
          return check_tp2_kernel(spec, t, grid, y_max).holds;
        },
        py::arg("spec"), py::arg("t"), py::arg("theta_grid"), py::arg("y_max"));
  m.def("check_mtp2_lattice",
        [](const ModelSpec& spec, int t, int y_max, int nodes) {
          const LatticeSpec lattice{t, y_max};
          return check_mtp2_lattice(lattice, joint_logpmf(spec, lattice, nodes)).holds;
        },
        py::arg("spec"), py::arg("t"), py::arg("y_max"), py::arg("nodes") = 64);
  m.def("condition_a_lt_beta",
        [](double a, double b, double alpha, double beta) {
          return condition_a_lt_beta(BetaGamma{a, b, alpha, beta});
        },
        py::arg("a"), py::arg("b"), py::arg("alpha"), py::arg("beta"));
  m.def("softplus_condition",
        [](LinkFn link, std::pair<double, double> d_range,
           std::pair<double, double> theta_range, double step) {
          return softplus_condition(link, d_range, theta_range, step);
        },
        py::arg("link"), py::arg("d_range"), py::arg("theta_range"),
        py::arg("step") = 0.05);

  // Experiments ----------------------------------------------------------------
  m.def("run_table",
        [](const std::string& table, const std::string& method, int draws, int runs,
           int burnin, std::uint64_t seed, int nodes, unsigned threads) {
          TableJob job;
          job.id = table_from_name(table);
          job.method = method_from_name(method);
          job.mcmc.draws = draws;
          job.mcmc.runs = runs;
          job.mcmc.burnin = burnin;
          job.mcmc.seed = seed;
          job.quad_nodes = nodes;
          job.threads = threads;
          const TableResult res = run_table(job);
          py::list rows;
          for (const TableRow& r : res.rows) {
            py::dict row;
            row["sweep"] = r.sweep;
            row["est_0"] = r.est_0;
            row["mcse_0"] = r.mcse_0;
            row["est_1"] = r.est_1;
            row["mcse_1"] = r.mcse_1;
            row["quadrature_0"] = r.quadrature_0;
            row["quadrature_1"] = r.quadrature_1;
            rows.append(std::move(row));
          }
          py::dict out;
          out["table"] = res.table;
          out["sweep_name"] = res.sweep_name;
          out["conditioning"] = py::make_tuple(res.cond_lo, res.cond_hi);
          out["rows"] = std::move(rows);
          return out;
        },
        py::arg("table"), py::arg("method") = "quadrature", py::arg("draws") = 1000,
        py::arg("runs") = 100, py::arg("burnin") = 500, py::arg("seed") = 1,
        py::arg("nodes") = 64, py::arg("threads") = 0);

  // Panels and fitting -----------------------------------------------------------
  py::class_<PanelDataset>(m, "PanelDataset")
      .def_property_readonly("n_entities",
                             [](const PanelDataset& p) { return p.entities.size(); })
      .def_property_readonly("covariate_names",
                             [](const PanelDataset& p) { return p.covariate_names; })
      .def("counts",
           [](const PanelDataset& p, std::size_t i) { return p.entities.at(i).counts; })
      .def("to_csv", [](const PanelDataset& p) {
        std::ostringstream os;
        write_panel_csv(p, os);
        return os.str();
      });
  m.def("synth_panel",
        [](const std::string& family, long k, long periods, std::uint64_t seed) {
          SynthConfig cfg;
          cfg.family = family_from_name(family);
          cfg.k = k;
          cfg.periods = periods;
          cfg.seed = seed;
          return synth_panel(cfg);
        },
        py::arg("family") = "comono_hurdle", py::arg("k") = 497, py::arg("periods") = 6,
        py::arg("seed") = 1);
  m.def("read_panel_csv",
        [](const std::string& text) {
          std::istringstream is(text);
          return read_panel_csv(is);
        },
        py::arg("text"));
  m.def("split_last_period", &split_last_period, py::arg("panel"));

  py::class_<FitResult>(m, "FitResult")
      .def_property_readonly("family",
                             [](const FitResult& f) { return std::string(family_name(f.family)); })
      .def_property_readonly("param_names", [](const FitResult& f) { return f.param_names; })
      .def_property_readonly("estimate",
                             [](const FitResult& f) {
                               return std::vector<double>(f.estimate.data(),
                                                          f.estimate.data() + f.estimate.size());
                             })
      .def_property_readonly("sd",
                             [](const FitResult& f) {
                               return std::vector<double>(f.sd.data(), f.sd.data() + f.sd.size());
                             })
      .def("param", &FitResult::param, py::arg("name"))
      .def("to_json", [](const FitResult& f) { return f.to_json().dump(2); })
      .def_static("from_json", [](const std::string& text) {
        return FitResult::from_json(nlohmann::json::parse(text));
      });
  m.def("fit_mcmc",
        [](const PanelDataset& panel, const std::string& family, int sweeps, int burnin,
           std::uint64_t seed) {
          FitConfig cfg;
          cfg.sweeps = sweeps;
          cfg.burnin = burnin;
          cfg.seed = seed;
          Rng rng(seed);
          return fit_mcmc(panel, family_from_name(family), cfg, rng);
        },
        py::arg("panel"), py::arg("family"), py::arg("sweeps") = 1500,
        py::arg("burnin") = 500, py::arg("seed") = 1);
  m.def("fit_mle",
        [](const PanelDataset& panel, const std::string& family, double zero_offset) {
          return fit_mle(panel, family_from_name(family), zero_offset);
        },
        py::arg("panel"), py::arg("family"), py::arg("zero_inflation_offset") = 0.0);
  m.def("predict_oos",
        [](const FitResult& fit, const PanelDataset& train, const PanelDataset& holdout,
           int nodes) {
          const PredictResult pred = predict_oos(fit, train, holdout, nodes);
          py::list rows;
          for (const auto& r : pred.rows)
            rows.append(py::make_tuple(r.entity, r.actual, r.predicted));
          return py::make_tuple(pred.mse, rows);
        },
        py::arg("fit"), py::arg("train"), py::arg("holdout"), py::arg("nodes") = 64);
  m.def("violation_report",
        [](const FitResult& fit, const PanelDataset& panel, int t_anchor,
           const std::vector<Transform>& transforms, int nodes) {
          const ViolationReport rep = violation_report(fit, panel, t_anchor, transforms, nodes);
          py::dict out;
          for (const auto& [name, r] : rep.by_transform) out[name.c_str()] = r.violation_rate();
          return out;
        },
        py::arg("fit"), py::arg("panel"), py::arg("t_anchor") = 5,
        py::arg("transforms") = std::vector<Transform>{}, py::arg("nodes") = 64);
}
