#include "zerocred/panel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace zerocred {

std::size_t PanelDataset::n_observations() const {
  std::size_t n = 0;
  for (const auto& e : entities) n += e.counts.size();
  return n;
}

const PanelEntity* PanelDataset::find(long id) const {
  for (const auto& e : entities)
    if (e.id == id) return &e;
  return nullptr;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  // RFC-4180: fields may be quoted; quotes are escaped by doubling.
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace

PanelDataset read_panel_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw PanelFormatError("empty panel file", 0, "");
  const std::vector<std::string> header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "entity" || header[1] != "period" ||
      header[2] != "count")
    throw PanelFormatError("header must start with entity,period,count", 1, "header");

  PanelDataset panel;
  panel.covariate_names.push_back("intercept");
  for (std::size_t j = 3; j < header.size(); ++j) panel.covariate_names.push_back(header[j]);

  struct Row {
    long period;
    long count;
    std::vector<double> x;
  };
  std::map<long, std::vector<Row>> by_entity;
  std::vector<long> order;

  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw PanelFormatError("wrong field count", lineno, "");
    Row row;
    long id = 0;
    try {
      id = std::stol(fields[0]);
    } catch (...) {
      throw PanelFormatError("entity must be an integer", lineno, "entity");
    }
    try {
      row.period = std::stol(fields[1]);
    } catch (...) {
      throw PanelFormatError("period must be an integer", lineno, "period");
    }
    try {
      row.count = std::stol(fields[2]);
    } catch (...) {
      throw PanelFormatError("count must be an integer", lineno, "count");
    }
    if (row.count < 0) throw PanelFormatError("count must be non-negative", lineno, "count");
    row.x.push_back(1.0);
    for (std::size_t j = 3; j < fields.size(); ++j) {
      try {
        row.x.push_back(std::stod(fields[j]));
      } catch (...) {
        throw PanelFormatError("covariate must be numeric", lineno, header[j]);
      }
    }
    if (by_entity.find(id) == by_entity.end()) order.push_back(id);
    by_entity[id].push_back(std::move(row));
  }

  for (long id : order) {
    auto& rows = by_entity[id];
    std::sort(rows.begin(), rows.end(),
              [](const Row& a, const Row& b) { return a.period < b.period; });
    PanelEntity entity;
    entity.id = id;
    entity.x = rows.front().x;
    for (std::size_t t = 0; t < rows.size(); ++t) {
      if (rows[t].period != static_cast<long>(t) + 1)
        throw PanelFormatError("periods must be contiguous from 1 for entity " +
                                   std::to_string(id),
                               0, "period");
      if (rows[t].x != entity.x)
        throw PanelFormatError("covariates must be constant over time for entity " +
                                   std::to_string(id),
                               0, "covariates");
      entity.counts.push_back(rows[t].count);
    }
    panel.entities.push_back(std::move(entity));
  }
  if (panel.entities.empty()) throw PanelFormatError("panel has no data rows", 1, "");
  return panel;
}

PanelDataset read_panel_csv_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw PanelFormatError("cannot open panel file: " + path, 0, "");
  return read_panel_csv(is);
}

void write_panel_csv(const PanelDataset& panel, std::ostream& os) {
  os << "entity,period,count";
  for (std::size_t j = 1; j < panel.covariate_names.size(); ++j)
    os << ',' << csv_escape(panel.covariate_names[j]);
  os << '\n';
  char buf[64];
  for (const auto& e : panel.entities) {
    for (std::size_t t = 0; t < e.counts.size(); ++t) {
      os << e.id << ',' << (t + 1) << ',' << e.counts[t];
      for (std::size_t j = 1; j < e.x.size(); ++j) {
        std::snprintf(buf, sizeof(buf), "%.17g", e.x[j]);
        os << ',' << buf;
      }
      os << '\n';
    }
  }
}

void write_panel_csv_file(const PanelDataset& panel, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write panel file: " + path);
  write_panel_csv(panel, os);
}

std::pair<PanelDataset, PanelDataset> split_last_period(const PanelDataset& panel) {
  PanelDataset train, holdout;
  train.covariate_names = panel.covariate_names;
  holdout.covariate_names = panel.covariate_names;
  for (const auto& e : panel.entities) {
    if (e.counts.size() < 2)
      throw std::invalid_argument("split_last_period: entities need at least two periods");
    PanelEntity tr = e;
    tr.counts.pop_back();
    PanelEntity ho;
    ho.id = e.id;
    ho.x = e.x;
    ho.counts = {e.counts.back()};
    train.entities.push_back(std::move(tr));
    holdout.entities.push_back(std::move(ho));
  }
  return {std::move(train), std::move(holdout)};
}

const char* family_name(FitFamily family) {
  switch (family) {
    case FitFamily::GaussHurdle: return "gauss_hurdle";
    case FitFamily::ConjHurdle: return "conj_hurdle";
    case FitFamily::ComonoHurdle: return "comono_hurdle";
    case FitFamily::PoissonGLMM: return "poisson_glmm";
    case FitFamily::PoissonGLM: return "poisson_glm";
    case FitFamily::PoissonHurdle: return "poisson_hurdle";
    case FitFamily::PoissonZIP: return "poisson_zip";
  }
  return "?";
}

FitFamily family_from_name(const std::string& name) {
  for (FitFamily f : {FitFamily::GaussHurdle, FitFamily::ConjHurdle, FitFamily::ComonoHurdle,
                      FitFamily::PoissonGLMM, FitFamily::PoissonGLM, FitFamily::PoissonHurdle,
                      FitFamily::PoissonZIP})
    if (name == family_name(f)) return f;
  throw std::invalid_argument("unknown model family: " + name);
}

bool family_has_random_effects(FitFamily family) {
  switch (family) {
    case FitFamily::GaussHurdle:
    case FitFamily::ConjHurdle:
    case FitFamily::ComonoHurdle:
    case FitFamily::PoissonGLMM:
      return true;
    default:
      return false;
  }
}

namespace {

double dot(const Eigen::VectorXd& coef, const std::vector<double>& x) {
  if (static_cast<std::size_t>(coef.size()) != x.size())
    throw std::invalid_argument("covariate dimension does not match coefficients");
  double acc = 0.0;
  for (Eigen::Index j = 0; j < coef.size(); ++j) acc += coef(j) * x[static_cast<std::size_t>(j)];
  return acc;
}

}  // namespace

ModelSpec entity_spec(const CovariateLink& link, const std::vector<double>& x) {
  switch (link.family) {
    case FitFamily::GaussHurdle:
      return GaussHurdle{{dot(link.coef1, x), dot(link.coef2, x), link.s1sq, link.s2sq, link.rho}};
    case FitFamily::ConjHurdle:
      return ConjHurdle{{link.a, std::exp(dot(link.coef1, x)), std::exp(dot(link.coef2, x)),
                         link.beta}};
    case FitFamily::ComonoHurdle:
      return ComonoHurdle{{0.0, link.kappa2}, link.link,
                          {dot(link.coef1, x)}, {dot(link.coef2, x)}};
    default:
      throw std::invalid_argument("entity_spec: family has no per-entity mixture model");
  }
}

PanelDataset simulate_panel(const CovariateLink& truth,
                            const std::vector<std::vector<double>>& design,
                            const std::vector<std::string>& names, long periods, Rng& rng) {
  if (periods < 1) throw std::invalid_argument("simulate_panel: periods must be >= 1");
  PanelDataset panel;
  panel.covariate_names = names;
  panel.entities.reserve(design.size());
  for (std::size_t i = 0; i < design.size(); ++i) {
    PanelEntity entity;
    entity.id = static_cast<long>(i) + 1;
    entity.x = design[i];
    Rng local = rng.split(i);
    switch (truth.family) {
      case FitFamily::GaussHurdle:
      case FitFamily::ConjHurdle:
      case FitFamily::ComonoHurdle: {
        entity.counts = simulate_path(entity_spec(truth, entity.x), periods, local);
        break;
      }
      case FitFamily::PoissonGLMM: {
        const double lambda = std::exp(dot(truth.coef1, entity.x));
        const double re = local.normal(-0.5 * truth.d * truth.d, truth.d);
        for (long t = 0; t < periods; ++t)
          entity.counts.push_back(local.poisson(lambda * std::exp(re)));
        break;
      }
      case FitFamily::PoissonGLM: {
        const double lambda = std::exp(dot(truth.coef1, entity.x));
        for (long t = 0; t < periods; ++t) entity.counts.push_back(local.poisson(lambda));
        break;
      }
      case FitFamily::PoissonHurdle: {
        const double pi = logistic(dot(truth.coef1, entity.x));
        const double lambda = std::exp(dot(truth.coef2, entity.x));
        for (long t = 0; t < periods; ++t) {
          if (!local.bernoulli(pi)) {
            entity.counts.push_back(0);
            continue;
          }
          long y = local.poisson(lambda);  // zero-truncated by rejection
          while (y == 0) y = local.poisson(lambda);
          entity.counts.push_back(y);
        }
        break;
      }
      case FitFamily::PoissonZIP: {
        const double pi = logistic(dot(truth.coef1, entity.x));
        const double lambda = std::exp(dot(truth.coef2, entity.x));
        for (long t = 0; t < periods; ++t)
          entity.counts.push_back(local.bernoulli(pi) ? local.poisson(lambda) : 0);
        break;
      }
    }
    panel.entities.push_back(std::move(entity));
  }
  return panel;
}

const std::vector<std::pair<std::string, double>>& entity_type_levels() {
  static const std::vector<std::pair<std::string, double>> levels = {
      {"miscellaneous", 0.0503}, {"city", 0.0966},    {"county", 0.1147},
      {"school", 0.3642},        {"town", 0.1690},    {"village", 0.2052}};
  return levels;
}

const std::vector<std::pair<std::string, double>>& coverage_levels() {
  static const std::vector<std::pair<std::string, double>> levels = {
      {"coverage1", 0.3340}, {"coverage2", 0.3320}, {"coverage3", 0.3340}};
  return levels;
}

CovariateLink default_truth(FitFamily family, std::size_t p) {
  CovariateLink link;
  link.family = family;
  auto fill = [p](std::initializer_list<double> lead) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
    std::size_t j = 0;
    for (double c : lead) {
      if (j >= p) break;
      v(static_cast<Eigen::Index>(j++)) = c;
    }
    // Mild signal on any remaining columns, alternating sign.
    for (; j < p; ++j) v(static_cast<Eigen::Index>(j)) = (j % 2 == 0 ? 0.2 : -0.2);
    return v;
  };
  switch (family) {
    case FitFamily::GaussHurdle:
      link.coef1 = fill({0.3, -0.4});
      link.coef2 = fill({-0.2, 0.5});
      link.s1sq = 1.0;
      link.s2sq = 0.5;
      link.rho = 0.3;
      break;
    case FitFamily::ConjHurdle:
      link.coef1 = fill({0.4, 0.3});   // log b_i
      link.coef2 = fill({-0.3, 0.4});  // log alpha_i
      link.a = 0.6;
      link.beta = 1.4;  // a < beta
      break;
    case FitFamily::ComonoHurdle:
      link.coef1 = fill({0.5, -0.3});  // c_i
      link.coef2 = fill({0.2, 0.4});   // d_i
      link.kappa2 = 0.5;
      break;
    case FitFamily::PoissonGLMM:
      link.coef1 = fill({0.3, -0.5});
      link.d = 0.7;
      break;
    case FitFamily::PoissonGLM:
      link.coef1 = fill({0.3, -0.5});
      break;
    case FitFamily::PoissonHurdle:
    case FitFamily::PoissonZIP:
      link.coef1 = fill({0.4, -0.3});
      link.coef2 = fill({0.1, 0.4});
      break;
  }
  return link;
}

PanelDataset synth_panel(const SynthConfig& cfg) {
  const std::size_t p = 1 + (entity_type_levels().size() - 1) + (coverage_levels().size() - 1);
  return synth_panel(cfg, default_truth(cfg.family, p));
}

PanelDataset synth_panel(const SynthConfig& cfg, const CovariateLink& truth) {
  if (cfg.k < 1 || cfg.periods < 1)
    throw std::invalid_argument("synth_panel: k and periods must be >= 1");
  Rng rng(cfg.seed);
  Rng cov_rng = rng.split(0xC0);

  std::vector<std::string> names = {"intercept"};
  for (std::size_t l = 1; l < entity_type_levels().size(); ++l)
    names.push_back("type_" + entity_type_levels()[l].first);
  for (std::size_t l = 1; l < coverage_levels().size(); ++l)
    names.push_back(coverage_levels()[l].first);

  auto draw_level = [](const std::vector<std::pair<std::string, double>>& levels, Rng& r) {
    const double u = r.uniform();
    double cum = 0.0;
    for (std::size_t l = 0; l < levels.size(); ++l) {
      cum += levels[l].second;
      if (u < cum) return l;
    }
    return levels.size() - 1;
  };

  std::vector<std::vector<double>> design;
  design.reserve(static_cast<std::size_t>(cfg.k));
  for (long i = 0; i < cfg.k; ++i) {
    std::vector<double> x(names.size(), 0.0);
    x[0] = 1.0;
    const std::size_t type = draw_level(entity_type_levels(), cov_rng);
    if (type > 0) x[type] = 1.0;  // columns 1..5 follow the level order
    const std::size_t cov = draw_level(coverage_levels(), cov_rng);
    if (cov > 0) x[entity_type_levels().size() - 1 + cov] = 1.0;
    design.push_back(std::move(x));
  }

  Rng sim_rng = rng.split(0x51);
  return simulate_panel(truth, design, names, cfg.periods, sim_rng);
}

}  // namespace zerocred
