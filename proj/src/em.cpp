#include "lmdrop/em.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lmdrop/complete_data.hpp"
#include "lmdrop/errors.hpp"
#include "lmdrop/numeric.hpp"
#include "lmdrop/parallel.hpp"

namespace lmdrop {

namespace {

constexpr double kMonotoneSlack = 1e-8;
constexpr double kMinOccupancy = 1e-8;

double relative_change(double prev, double next) {
  return std::abs(next - prev) / (std::abs(next) + 1.0);
}

// Spread of k points equally spaced on [-1, 1]; zero for k = 1.
double offset(int u, int k) { return k == 1 ? 0.0 : -1.0 + 2.0 * u / (k - 1); }

double weighted_mean_response(const WeightedGlmProblem& pr) {
  double sw = 0.0, swy = 0.0;
  for (int b = 0; b < pr.n_rows(); ++b) {
    const double w = pr.weights.row(b).sum();
    sw += w;
    swy += w * pr.response(b);
  }
  return sw > 0.0 ? swy / sw : 0.5;
}

// Intercept that reproduces a marginal event rate under the given link.
double link_intercept(double rate, Link link) {
  rate = std::clamp(rate, 1e-6, 1.0 - 1e-6);
  return link == Link::cloglog ? std::log(-std::log1p(-rate)) : numeric::logit(rate);
}

ModelSpec pooled_spec(const ModelSpec& spec) {
  ModelSpec one = spec;
  one.k = 1;
  return one;
}

}  // namespace

void EmConfig::validate() const {
  if (!(tol_loglik > 0.0)) throw DomainError("tol_loglik must be positive");
  if (max_iter < 1) throw DomainError("max_iter must be at least 1");
  if (n_random_starts < 0) throw DomainError("n_random_starts must be nonnegative");
  if (!(perturbation_scale >= 0.0)) throw DomainError("perturbation_scale must be nonnegative");
  if (newton.max_iter < 1 || !(newton.tol > 0.0) || newton.max_halvings < 0)
    throw DomainError("invalid Newton options");
}

EStepResult e_step(const PanelDataset& data, const ParamSet& params, const ModelSpec& spec,
                   Execution exec) {
  const int n = data.n();
  EStepResult r;
  r.post.resize(static_cast<std::size_t>(n));
  r.subject_loglik.assign(static_cast<std::size_t>(n), 0.0);
  for_each_index(n, exec == Execution::parallel, [&](int i) {
    SubjectEStep e = subject_e_step(data.subjects[i], params, spec, data.s);
    r.post[i] = std::move(e.post);
    r.subject_loglik[i] = e.loglik;
  });
  for (double v : r.subject_loglik) r.loglik += v;
  return r;
}

LatentUpdate m_step_latent(const std::vector<Posteriors>& post, const Eigen::MatrixXd& previous_Pi) {
  const auto k = previous_Pi.rows();
  LatentUpdate out;
  out.pi = Eigen::VectorXd::Zero(k);
  Eigen::MatrixXd trans = Eigen::MatrixXd::Zero(k, k);
  for (const auto& p : post) {
    out.pi += p.w.row(0).transpose();
    for (const auto& z : p.z) {
      trans += z;
      out.Pi_updated = true;
    }
  }
  out.pi /= out.pi.sum();
  out.Pi = previous_Pi;
  if (!out.Pi_updated) return out;
  for (Eigen::Index u = 0; u < k; ++u) {
    const double denom = trans.row(u).sum();
    if (denom > 0.0) out.Pi.row(u) = trans.row(u) / denom;
  }
  return out;
}

ParamSet m_step(const PanelDataset& data, const std::vector<Posteriors>& post,
                const ParamSet& current, const ModelSpec& spec, const NewtonOptions& newton) {
  const int k = spec.k;
  Eigen::VectorXd occupancy = Eigen::VectorXd::Zero(k);
  for (const auto& p : post) occupancy += p.w.colwise().sum().transpose();
  for (int u = 0; u < k; ++u)
    if (occupancy(u) < kMinOccupancy)
      throw DegenerateStateError("state " + std::to_string(u + 1) + " has expected occupancy " +
                                 std::to_string(occupancy(u)));

  ParamSet next = current;
  const LatentUpdate lat = m_step_latent(post, current.Pi);
  next.pi = lat.pi;
  next.Pi = lat.Pi;

  for (int h = 0; h < spec.r(); ++h) {
    const WeightedGlmProblem pr = channel_problem(data, post, spec, h);
    const int p = spec.channels[h].p;
    Eigen::VectorXd coef;
    if (spec.channels[h].family == Family::gaussian) {
      const GaussianFit fit = fit_weighted_gaussian(pr);
      coef = fit.coef;
      next.sigma2(h) = fit.sigma2;
    } else {
      Eigen::VectorXd init(k + p);
      init << current.alpha.row(h).transpose(), current.beta[h];
      coef = fit_weighted_binary(pr, init, newton).coef;
    }
    next.alpha.row(h) = coef.head(k).transpose();
    next.beta[h] = coef.tail(p);
  }

  if (data.s > 1) {
    const HazardFit hz = fit_weighted_hazard(data, post, spec, current.gamma, current.delta, newton);
    next.gamma = hz.gamma;
    next.delta = hz.delta;
  }
  return next;
}

FitResult em_fit(const PanelDataset& data, const ModelSpec& spec, const EmConfig& config,
                 const ParamSet& init) {
  config.validate();
  check_compatible(data, spec);
  validate_params(init, spec);

  FitResult res;
  ParamSet params = init;
  EStepResult e = e_step(data, params, spec);
  res.trace.push_back({e.loglik, 0.0, expected_score(data, e.post, params, spec).cwiseAbs().maxCoeff(),
                       0.0});
  for (int it = 1; it <= config.max_iter; ++it) {
    ParamSet next = m_step(data, e.post, params, spec, config.newton);
    const double param_change = (pack(next, spec) - pack(params, spec)).cwiseAbs().maxCoeff();
    EStepResult e_next = e_step(data, next, spec);
    const double prev = e.loglik;
    if (e_next.loglik < prev - kMonotoneSlack)
      throw MonotonicityError("log-likelihood decreased from " + std::to_string(prev) + " to " +
                              std::to_string(e_next.loglik) + " at iteration " +
                              std::to_string(it));
    params = std::move(next);
    e = std::move(e_next);
    IterationRecord rec;
    rec.loglik = e.loglik;
    rec.rel_change = relative_change(prev, e.loglik);
    rec.max_score = expected_score(data, e.post, params, spec).cwiseAbs().maxCoeff();
    rec.param_change = param_change;
    res.trace.push_back(rec);
    res.n_iter = it;
    if (rec.rel_change < config.tol_loglik &&
        (config.tol_score <= 0.0 || rec.max_score < config.tol_score)) {
      res.converged = true;
      break;
    }
  }
  res.params = order_states(params);
  res.loglik = e.loglik;
  return res;
}

ParamSet deterministic_init(const PanelDataset& data, const ModelSpec& spec,
                            const NewtonOptions& newton) {
  spec.validate();
  check_compatible(data, spec);
  const int k = spec.k;
  const ModelSpec one = pooled_spec(spec);
  const std::vector<Posteriors> pooled = pooled_posteriors(data, 1);

  ParamSet p = zero_params(spec);
  for (int h = 0; h < spec.r(); ++h) {
    const WeightedGlmProblem pr = channel_problem(data, pooled, one, h);
    const int np = spec.channels[h].p;
    Eigen::VectorXd coef;
    double spread = 1.0;
    if (spec.channels[h].family == Family::gaussian) {
      const GaussianFit fit = fit_weighted_gaussian(pr);
      coef = fit.coef;
      p.sigma2(h) = fit.sigma2;
      spread = std::sqrt(fit.sigma2);
    } else {
      Eigen::VectorXd init = Eigen::VectorXd::Zero(1 + np);
      init(0) = link_intercept(weighted_mean_response(pr), Link::logit);
      coef = fit_weighted_binary(pr, init, newton).coef;
    }
    for (int u = 0; u < k; ++u) p.alpha(h, u) = coef(0) + offset(u, k) * spread;
    p.beta[h] = coef.tail(np);
  }

  if (data.s > 1) {
    const WeightedGlmProblem pr = hazard_problem(data, pooled, one);
    Eigen::VectorXd init = Eigen::VectorXd::Zero(1 + spec.q);
    init(0) = link_intercept(weighted_mean_response(pr), spec.hazard_link);
    const Eigen::VectorXd coef = fit_weighted_binary(pr, init, newton).coef;
    for (int u = 0; u < spec.n_gamma(); ++u)
      p.gamma(u) = coef(0) + (spec.share_gamma ? 0.0 : offset(u, k));
    p.delta = coef.tail(spec.q);
  }

  p.pi = Eigen::VectorXd::Constant(k, 1.0 / k);
  if (k == 1) {
    p.Pi = Eigen::MatrixXd::Ones(1, 1);
  } else {
    const double off = 1.0 / (k * (k - 1.0));
    p.Pi = Eigen::MatrixXd::Constant(k, k, off);
    p.Pi.diagonal().setConstant(1.0 - (k - 1) * off);
  }
  return p;
}

ParamSet perturb(const ParamSet& params, const ModelSpec& spec, double scale,
                 std::mt19937_64& rng) {
  Eigen::VectorXd v = pack(params, spec);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index j = 0; j < v.size(); ++j)
    v(j) += scale * normal(rng) * std::max(1.0, std::abs(v(j)));
  return unpack(v, spec);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  // splitmix64 finalizer over the combined key
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

FitResult multistart_fit(const PanelDataset& data, const ModelSpec& spec, const EmConfig& config,
                         const std::vector<ParamSet>& extra_starts) {
  config.validate();
  const int n_random = config.n_random_starts;
  const int n_extra = static_cast<int>(extra_starts.size());
  const int total = 1 + n_random + n_extra;
  std::vector<FitResult> fits(static_cast<std::size_t>(total));
  std::vector<StartRecord> records(static_cast<std::size_t>(total));

  const auto run = [&](int index, const auto& make_init) {
    StartRecord& rec = records[index];
    rec.index = index;
    rec.deterministic = index == 0;
    try {
      fits[index] = em_fit(data, spec, config, make_init());
      rec.ok = true;
      rec.loglik = fits[index].loglik;
      rec.n_iter = fits[index].n_iter;
      rec.converged = fits[index].converged;
    } catch (const std::exception& ex) {
      rec.error = ex.what();
      rec.loglik = -std::numeric_limits<double>::infinity();
    }
  };

  ParamSet det_init;
  std::string init_error;
  try {
    det_init = deterministic_init(data, spec, config.newton);
  } catch (const std::exception& ex) {
    init_error = ex.what();
  }
  if (init_error.empty()) {
    run(0, [&] { return det_init; });
  } else {
    records[0] = {0, true, false, -std::numeric_limits<double>::infinity(), 0, false, init_error};
  }

  // Random starts perturb the deterministic solution, or its starting point
  // when that fit failed.
  const bool have_base = records[0].ok || init_error.empty();
  const ParamSet base = records[0].ok ? fits[0].params : det_init;
  for_each_index(n_random, true, [&](int j) {
    const int index = 1 + j;
    if (!have_base) {
      records[index] = {index, false, false, -std::numeric_limits<double>::infinity(), 0, false,
                        "no deterministic start to perturb"};
      return;
    }
    run(index, [&] {
      std::mt19937_64 rng(derive_seed(config.seed, static_cast<std::uint64_t>(index)));
      return perturb(base, spec, config.perturbation_scale, rng);
    });
  });
  for (int j = 0; j < n_extra; ++j) run(1 + n_random + j, [&] { return extra_starts[j]; });

  int best = -1;
  for (int i = 0; i < total; ++i)
    if (records[i].ok && (best < 0 || records[i].loglik > records[best].loglik)) best = i;
  if (best < 0) {
    std::string msg = "all " + std::to_string(total) + " starts failed:";
    for (const auto& r : records) msg += "\n  start " + std::to_string(r.index) + ": " + r.error;
    throw FitError(msg);
  }
  FitResult out = std::move(fits[best]);
  out.best_start = best;
  out.starts = std::move(records);
  return out;
}

}  // namespace lmdrop
