#include "lmdrop/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "lmdrop/errors.hpp"
#include "lmdrop/inference.hpp"
#include "lmdrop/numeric.hpp"
#include "lmdrop/parallel.hpp"

namespace lmdrop {

namespace {

int draw_categorical(const Eigen::VectorXd& p, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double x = unif(rng);
  double acc = 0.0;
  for (Eigen::Index u = 0; u + 1 < p.size(); ++u) {
    acc += p(u);
    if (x < acc) return static_cast<int>(u);
  }
  return static_cast<int>(p.size() - 1);
}

double draw_value(const CovariateGenerator& g, int occasion, std::mt19937_64& rng) {
  switch (g.kind) {
    case CovariateGenerator::Kind::constant:
      return g.value;
    case CovariateGenerator::Kind::uniform:
      return std::uniform_real_distribution<double>(g.lo, g.hi)(rng);
    case CovariateGenerator::Kind::binary:
      return std::bernoulli_distribution(g.prob)(rng) ? 1.0 : 0.0;
    case CovariateGenerator::Kind::time_polynomial: {
      double v = 0.0, pw = 1.0;
      for (double c : g.coefficients) {
        v += c * pw;
        pw *= occasion;
      }
      return v;
    }
  }
  return 0.0;
}

const std::vector<std::string>& names_or_throw(const std::vector<std::string>& names, int p,
                                               const std::string& where) {
  if (static_cast<int>(names.size()) != p)
    throw SchemaError(where + ": simulation needs one covariate name per slope");
  return names;
}

}  // namespace

CovariateGenerator CovariateGenerator::constant_value(double v) {
  CovariateGenerator g;
  g.value = v;
  return g;
}

CovariateGenerator CovariateGenerator::uniform(double lo, double hi, bool per_subject) {
  CovariateGenerator g;
  g.kind = Kind::uniform;
  g.lo = lo;
  g.hi = hi;
  g.per_subject = per_subject;
  return g;
}

CovariateGenerator CovariateGenerator::binary(double prob, bool per_subject) {
  CovariateGenerator g;
  g.kind = Kind::binary;
  g.prob = prob;
  g.per_subject = per_subject;
  return g;
}

CovariateGenerator CovariateGenerator::polynomial(std::vector<double> coefficients) {
  CovariateGenerator g;
  g.kind = Kind::time_polynomial;
  g.coefficients = std::move(coefficients);
  return g;
}

std::string to_string(CovariateGenerator::Kind kind) {
  switch (kind) {
    case CovariateGenerator::Kind::constant: return "constant";
    case CovariateGenerator::Kind::uniform: return "uniform";
    case CovariateGenerator::Kind::binary: return "binary";
    case CovariateGenerator::Kind::time_polynomial: return "time_polynomial";
  }
  return "constant";
}

CovariateGenerator::Kind parse_generator_kind(const std::string& s) {
  if (s == "constant") return CovariateGenerator::Kind::constant;
  if (s == "uniform") return CovariateGenerator::Kind::uniform;
  if (s == "binary") return CovariateGenerator::Kind::binary;
  if (s == "time_polynomial") return CovariateGenerator::Kind::time_polynomial;
  throw SchemaError("unknown covariate generator '" + s + "'");
}

void SimConfig::validate() const {
  if (n < 1) throw DomainError("simulation needs n >= 1");
  if (s < 1) throw DomainError("simulation needs s >= 1");
  spec.validate();
  validate_params(truth, spec);
  const auto need = [&](const std::string& name) {
    if (!covariates.count(name)) throw SchemaError("no generator for covariate '" + name + "'");
  };
  for (const auto& c : spec.channels)
    for (const auto& name : names_or_throw(c.covariate_names, c.p, "channel " + c.name)) need(name);
  for (const auto& name : names_or_throw(spec.hazard_covariate_names, spec.q, "drop-out model"))
    need(name);
  for (const auto& [name, g] : covariates) {
    if (g.kind == CovariateGenerator::Kind::uniform && !(g.lo <= g.hi))
      throw DomainError("covariate '" + name + "': uniform range is empty");
    if (g.kind == CovariateGenerator::Kind::binary && !(g.prob >= 0.0 && g.prob <= 1.0))
      throw DomainError("covariate '" + name + "': probability outside [0, 1]");
  }
}

Simulation simulate(const SimConfig& cfg) {
  cfg.validate();
  const ModelSpec& spec = cfg.spec;
  const ParamSet& th = cfg.truth;
  const int r = spec.r();
  const int s = cfg.s;
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  Simulation out;
  PanelDataset& d = out.data;
  d.s = s;
  for (const auto& c : spec.channels) {
    d.channel_names.push_back(c.name);
    d.channel_families.push_back(c.family);
    d.channel_covariate_names.push_back(c.covariate_names);
  }
  d.hazard_covariate_names = spec.hazard_covariate_names;
  out.truth.seed = cfg.seed;

  std::vector<std::string> names;
  for (const auto& [name, g] : cfg.covariates) names.push_back(name);
  const auto column_of = [&](const std::string& name) {
    return static_cast<int>(std::find(names.begin(), names.end(), name) - names.begin());
  };

  for (int i = 0; i < cfg.n; ++i) {
    // Covariates for every occasion up to s, in name order.
    Eigen::MatrixXd cov(s, static_cast<Eigen::Index>(names.size()));
    for (std::size_t c = 0; c < names.size(); ++c) {
      const CovariateGenerator& g = cfg.covariates.at(names[c]);
      const double fixed = g.per_subject ? draw_value(g, 1, rng) : 0.0;
      for (int t = 0; t < s; ++t)
        cov(t, static_cast<Eigen::Index>(c)) = g.per_subject ? fixed : draw_value(g, t + 1, rng);
    }
    const auto design_row = [&](const std::vector<std::string>& which, int t) {
      std::vector<double> row;
      for (const auto& name : which) row.push_back(cov(t, column_of(name)));
      return row;
    };

    std::vector<int> path;
    std::vector<std::vector<double>> y;
    int t_i = s;
    for (int t = 0; t < s; ++t) {
      const int u = t == 0 ? draw_categorical(th.pi, rng)
                           : draw_categorical(th.Pi.row(path.back()).transpose(), rng);
      path.push_back(u);
      std::vector<double> yt(static_cast<std::size_t>(r));
      for (int h = 0; h < r; ++h) {
        const std::vector<double> x = design_row(spec.channels[h].covariate_names, t);
        const double eta = channel_eta(h, u, x, th);
        yt[h] = spec.channels[h].family == Family::gaussian
                    ? eta + std::sqrt(th.sigma2(h)) * normal(rng)
                    : (unif(rng) < numeric::logistic(eta) ? 1.0 : 0.0);
      }
      y.push_back(std::move(yt));
      if (t + 1 < s) {
        const std::vector<double> z = design_row(spec.hazard_covariate_names, t);
        if (unif(rng) < hazard(u, z, t + 1, th, spec, s)) {
          t_i = t + 1;
          break;
        }
      }
    }

    SubjectRecord sub;
    sub.id = std::to_string(i + 1);
    sub.t = t_i;
    sub.y.resize(t_i, r);
    for (int t = 0; t < t_i; ++t)
      for (int h = 0; h < r; ++h) sub.y(t, h) = y[t][h];
    for (int h = 0; h < r; ++h) {
      const auto& cn = spec.channels[h].covariate_names;
      RowMatrix x(t_i, static_cast<Eigen::Index>(cn.size()));
      for (int t = 0; t < t_i; ++t)
        for (std::size_t j = 0; j < cn.size(); ++j) x(t, static_cast<Eigen::Index>(j)) = cov(t, column_of(cn[j]));
      sub.x.push_back(std::move(x));
    }
    sub.z.resize(t_i, spec.q);
    for (int t = 0; t < t_i; ++t)
      for (int j = 0; j < spec.q; ++j) sub.z(t, j) = cov(t, column_of(spec.hazard_covariate_names[j]));
    out.truth.ids.push_back(sub.id);
    out.truth.t.push_back(t_i);
    out.truth.paths.push_back(path);
    d.subjects.push_back(std::move(sub));
  }
  validate_panel(d);
  return out;
}

bool is_slope_or_hazard(const std::string& name) {
  return name.rfind("beta[", 0) == 0 || name.rfind("delta[", 0) == 0 ||
         name.rfind("gamma_dev[", 0) == 0 || name == "intercept[dropout]";
}

std::vector<int> align_to_truth(const ParamSet& fitted, const ParamSet& truth) {
  const int k = static_cast<int>(fitted.pi.size());
  std::vector<int> perm(static_cast<std::size_t>(k));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_d = std::numeric_limits<double>::infinity();
  do {
    double dist = 0.0;
    for (int u = 0; u < k; ++u) dist += (fitted.alpha.col(perm[u]) - truth.alpha.col(u)).squaredNorm();
    if (dist < best_d) {
      best_d = dist;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

RecoverySummary recovery_study(const SimConfig& config, int n_reps, const EmConfig& em,
                               const RecoveryOptions& options) {
  config.validate();
  if (n_reps < 1) throw DomainError("recovery study needs at least one replicate");
  RecoverySummary sum;
  sum.names = reporting_names(config.spec);
  const Eigen::VectorXd truth = reporting_vector(config.truth, config.spec);
  sum.replicates.resize(static_cast<std::size_t>(n_reps));

  for_each_index(n_reps, options.parallel, [&](int rep) {
    ReplicateRecord& rec = sum.replicates[rep];
    rec.index = rep;
    rec.seed = derive_seed(config.seed, static_cast<std::uint64_t>(rep));
    try {
      SimConfig sc = config;
      sc.seed = rec.seed;
      const Simulation sim = simulate(sc);
      EmConfig ec = em;
      ec.seed = derive_seed(rec.seed, 0);
      FitResult fit;
      bool have_fit = false;
      if (!options.select_ks.empty()) {
        KSelection sel = select_k(sim.data, config.spec, options.select_ks, ec);
        rec.chosen_k = sel.chosen_k;
        for (std::size_t i = 0; i < sel.rows.size(); ++i)
          if (sel.rows[i].k == config.spec.k && sel.rows[i].ok) {
            fit = std::move(sel.fits[i]);
            have_fit = true;
          }
      }
      if (!have_fit) fit = multistart_fit(sim.data, config.spec, ec);
      rec.loglik = fit.loglik;
      rec.permutation = align_to_truth(fit.params, config.truth);
      const ParamSet aligned = permute_states(fit.params, rec.permutation);
      rec.estimate = reporting_vector(aligned, config.spec);
      try {
        rec.se = oakes_information(sim.data, aligned, config.spec, options.fd_step,
                                   Execution::serial)
                     .se_reported;
      } catch (const SingularInformationError&) {
      }
      rec.ok = true;
    } catch (const std::exception& ex) {
      rec.error = ex.what();
    }
  });

  const auto m = truth.size();
  sum.parameters.resize(static_cast<std::size_t>(m));
  int hits = 0, checked = 0, k_hits = 0;
  for (const auto& rec : sum.replicates) {
    if (!rec.ok) continue;
    ++sum.n_ok;
    if (rec.chosen_k == config.spec.k) ++k_hits;
  }
  for (Eigen::Index j = 0; j < m; ++j) {
    ParameterRecovery& pr = sum.parameters[j];
    pr.name = sum.names[j];
    pr.truth = truth(j);
    double est_sum = 0.0, sq = 0.0;
    int cover = 0, in3 = 0;
    for (const auto& rec : sum.replicates) {
      if (!rec.ok) continue;
      const double err = rec.estimate(j) - truth(j);
      est_sum += rec.estimate(j);
      sq += err * err;
      if (rec.se.size() != m) continue;
      ++pr.n_used;
      if (std::abs(err) <= 1.96 * rec.se(j)) ++cover;
      if (std::abs(err) <= 3.0 * rec.se(j)) ++in3;
    }
    if (sum.n_ok > 0) {
      pr.mean_estimate = est_sum / sum.n_ok;
      pr.bias = pr.mean_estimate - pr.truth;
      pr.rmse = std::sqrt(sq / sum.n_ok);
    }
    if (pr.n_used > 0) {
      pr.coverage95 = static_cast<double>(cover) / pr.n_used;
      pr.within3se = static_cast<double>(in3) / pr.n_used;
    }
    if (is_slope_or_hazard(pr.name)) {
      hits += in3;
      checked += pr.n_used;
    }
  }
  sum.slope_hazard_checked = checked;
  sum.slope_hazard_within3se = checked > 0 ? static_cast<double>(hits) / checked : 0.0;
  if (!options.select_ks.empty() && sum.n_ok > 0)
    sum.select_k_hit_rate = static_cast<double>(k_hits) / sum.n_ok;
  return sum;
}

}  // namespace lmdrop
