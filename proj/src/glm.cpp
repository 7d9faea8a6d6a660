#include "lmdrop/glm.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <tuple>

#include "lmdrop/errors.hpp"
#include "lmdrop/numeric.hpp"

namespace lmdrop {

namespace {

// Fitted probabilities within about 1e-15 of 0 or 1.
constexpr double kMaxLinearPredictor = 35.0;

// Floor on the Bernoulli variance p(1-p) used for curvature only.
constexpr double kProbClamp = 1e-12;

struct BinaryTerms {
  double value;   // log-likelihood contribution
  double score;   // d/d eta
  double curv;    // d2/d eta2 (<= 0)
};

BinaryTerms binary_terms(double y, double eta, Link link) {
  const HazardLogs hl = hazard_logs(eta, link);
  BinaryTerms t{};
  t.value = y * hl.log_p + (1.0 - y) * hl.log_1mp;
  if (link == Link::cloglog) {
    const double mu = std::exp(eta);
    const double q = std::exp(-mu);
    const double one_minus_q = -std::expm1(-mu);
    const double g = one_minus_q > 0.0 ? mu * q / one_minus_q : 1.0;
    t.score = y * g - (1.0 - y) * mu;
    const double dg = one_minus_q > 0.0
                          ? mu * q * (one_minus_q - mu) / (one_minus_q * one_minus_q)
                          : 0.0;
    t.curv = y * dg - (1.0 - y) * mu;
    t.curv = std::min(t.curv, -kProbClamp * (1.0 - kProbClamp));
  } else {
    const double p = numeric::logistic(eta);
    t.score = y - p;
    const double pc = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
    t.curv = -pc * (1.0 - pc);
  }
  return t;
}

void check_problem(const WeightedGlmProblem& pr) {
  if (pr.covariates.rows() != pr.n_rows() || pr.weights.rows() != pr.n_rows())
    throw ShapeError("GLM problem: response, covariates and weights disagree in rows");
  if ((pr.weights.array() < 0.0).any()) throw DomainError("GLM problem: negative weight");
}

double row_slope_eta(const WeightedGlmProblem& pr, int b, const Eigen::VectorXd& coef) {
  const int I = pr.n_intercepts();
  double xb = 0.0;
  for (int j = 0; j < pr.n_slopes(); ++j) xb += pr.covariates(b, j) * coef(I + j);
  return xb;
}

// Visits every expanded row with positive weight: f(b, intercept column, weight, eta).
template <class F>
void for_each_expanded(const WeightedGlmProblem& pr, const Eigen::VectorXd& coef, F&& f) {
  const int k = pr.n_states();
  for (int b = 0; b < pr.n_rows(); ++b) {
    const double xb = row_slope_eta(pr, b, coef);
    if (pr.shared_intercept) {
      const double w = pr.weights.row(b).sum();
      if (w > 0.0) f(b, 0, w, coef(0) + xb);
    } else {
      for (int u = 0; u < k; ++u) {
        const double w = pr.weights(b, u);
        if (w > 0.0) f(b, u, w, coef(u) + xb);
      }
    }
  }
}

// Accumulates a derivative structure given per-expanded-row (score, curvature)
// terms in eta. Slope blocks are aggregated per base row.
template <class Terms>
GlmDerivatives assemble(const WeightedGlmProblem& pr, const Eigen::VectorXd& coef, Terms&& terms) {
  const int I = pr.n_intercepts();
  const int P = pr.n_slopes();
  GlmDerivatives d;
  d.score = Eigen::VectorXd::Zero(I + P);
  d.hessian = Eigen::MatrixXd::Zero(I + P, I + P);
  int current = -1;
  double row_s = 0.0, row_h = 0.0;
  Eigen::VectorXd row_hi = Eigen::VectorXd::Zero(I);
  const auto flush = [&]() {
    if (current < 0) return;
    const auto x = pr.covariates.row(current);
    for (int j = 0; j < P; ++j) {
      d.score(I + j) += row_s * x(j);
      for (int i = 0; i < I; ++i) d.hessian(i, I + j) += row_hi(i) * x(j);
      for (int l = 0; l <= j; ++l) d.hessian(I + j, I + l) += row_h * x(j) * x(l);
    }
    row_s = row_h = 0.0;
    row_hi.setZero();
  };
  for_each_expanded(pr, coef, [&](int b, int iu, double w, double eta) {
    if (b != current) {
      flush();
      current = b;
    }
    const auto [v, s, h] = terms(pr.response(b), eta);
    d.value += w * v;
    d.score(iu) += w * s;
    d.hessian(iu, iu) += w * h;
    row_s += w * s;
    row_h += w * h;
    row_hi(iu) += w * h;
  });
  flush();
  for (int j = 0; j < P; ++j) {
    for (int i = 0; i < I; ++i) d.hessian(I + j, i) = d.hessian(i, I + j);
    for (int l = 0; l < j; ++l) d.hessian(I + l, I + j) = d.hessian(I + j, I + l);
  }
  return d;
}

// Names the columns involved in an (approximate) linear dependency of the
// weighted cross-product matrix A, or returns an empty list when A is of full rank.
std::vector<int> collinear_columns(const Eigen::MatrixXd& A) {
  const auto m = A.rows();
  std::vector<int> bad;
  Eigen::VectorXd scale(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    if (!(A(j, j) > 0.0)) bad.push_back(static_cast<int>(j));
    scale(j) = A(j, j) > 0.0 ? 1.0 / std::sqrt(A(j, j)) : 0.0;
  }
  if (!bad.empty()) return bad;
  const Eigen::MatrixXd S = scale.asDiagonal() * A * scale.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  const auto& ev = es.eigenvalues();
  if (ev(0) > 1e-11 * std::max(1.0, ev(m - 1))) return bad;
  const Eigen::VectorXd v = es.eigenvectors().col(0);
  for (Eigen::Index j = 0; j < m; ++j)
    if (std::abs(v(j)) > 0.05) bad.push_back(static_cast<int>(j));
  return bad;
}

[[noreturn]] void throw_rank(const WeightedGlmProblem& pr, const std::vector<int>& cols) {
  std::ostringstream os;
  os << "rank-deficient design; collinear columns:";
  for (int j : cols) os << ' ' << pr.column_name(j);
  throw RankError(os.str());
}

}  // namespace

std::string WeightedGlmProblem::column_name(int j) const {
  if (j < static_cast<int>(column_names.size())) return column_names[j];
  if (j < n_intercepts())
    return shared_intercept ? "intercept" : "intercept[" + std::to_string(j + 1) + "]";
  return "x" + std::to_string(j - n_intercepts() + 1);
}

double binary_objective(const WeightedGlmProblem& pr, const Eigen::VectorXd& coef) {
  double v = 0.0;
  for_each_expanded(pr, coef, [&](int b, int, double w, double eta) {
    const HazardLogs hl = hazard_logs(eta, pr.link);
    const double y = pr.response(b);
    v += w * (y * hl.log_p + (1.0 - y) * hl.log_1mp);
  });
  return v;
}

GlmDerivatives binary_derivatives(const WeightedGlmProblem& pr, const Eigen::VectorXd& coef) {
  check_problem(pr);
  return assemble(pr, coef, [&](double y, double eta) {
    const BinaryTerms t = binary_terms(y, eta, pr.link);
    return std::tuple{t.value, t.score, t.curv};
  });
}

GlmDerivatives gaussian_derivatives(const WeightedGlmProblem& pr, const Eigen::VectorXd& coef,
                                    double log_sigma2) {
  check_problem(pr);
  const double s2 = std::exp(log_sigma2);
  const double c0 = -0.5 * std::log(2.0 * std::numbers::pi) - 0.5 * log_sigma2;
  double sum_w = 0.0, sum_wr2 = 0.0;
  Eigen::VectorXd cross = Eigen::VectorXd::Zero(pr.n_coef());  // sum w r d / s2
  const int I = pr.n_intercepts();
  GlmDerivatives core = assemble(pr, coef, [&](double y, double eta) {
    const double r = y - eta;
    return std::tuple{c0 - 0.5 * r * r / s2, r / s2, -1.0 / s2};
  });
  for_each_expanded(pr, coef, [&](int b, int iu, double w, double eta) {
    const double r = pr.response(b) - eta;
    sum_w += w;
    sum_wr2 += w * r * r;
    cross(iu) += w * r / s2;
    for (int j = 0; j < pr.n_slopes(); ++j) cross(I + j) += w * r * pr.covariates(b, j) / s2;
  });
  const int m = pr.n_coef();
  GlmDerivatives d;
  d.value = core.value;
  d.score.resize(m + 1);
  d.score.head(m) = core.score;
  d.score(m) = -0.5 * sum_w + 0.5 * sum_wr2 / s2;
  d.hessian = Eigen::MatrixXd::Zero(m + 1, m + 1);
  d.hessian.topLeftCorner(m, m) = core.hessian;
  d.hessian.col(m).head(m) = -cross;
  d.hessian.row(m).head(m) = -cross.transpose();
  d.hessian(m, m) = -0.5 * sum_wr2 / s2;
  return d;
}

GaussianFit fit_weighted_gaussian(const WeightedGlmProblem& pr) {
  check_problem(pr);
  const int I = pr.n_intercepts();
  const int P = pr.n_slopes();
  const int m = I + P;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m, m);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
  const int k = pr.n_states();
  for (int b = 0; b < pr.n_rows(); ++b) {
    const auto x = pr.covariates.row(b);
    const double y = pr.response(b);
    const double wt = pr.weights.row(b).sum();
    if (wt <= 0.0) continue;
    if (pr.shared_intercept) {
      A(0, 0) += wt;
      rhs(0) += wt * y;
      for (int j = 0; j < P; ++j) A(0, I + j) += wt * x(j);
    } else {
      for (int u = 0; u < k; ++u) {
        const double w = pr.weights(b, u);
        A(u, u) += w;
        rhs(u) += w * y;
        for (int j = 0; j < P; ++j) A(u, I + j) += w * x(j);
      }
    }
    for (int j = 0; j < P; ++j) {
      rhs(I + j) += wt * y * x(j);
      for (int l = 0; l <= j; ++l) A(I + j, I + l) += wt * x(j) * x(l);
    }
  }
  for (int j = 0; j < P; ++j) {
    for (int i = 0; i < I; ++i) A(I + j, i) = A(i, I + j);
    for (int l = 0; l < j; ++l) A(I + l, I + j) = A(I + j, I + l);
  }
  if (const auto bad = collinear_columns(A); !bad.empty()) throw_rank(pr, bad);

  GaussianFit fit;
  fit.coef = A.ldlt().solve(rhs);
  double sum_w = 0.0, sum_wr2 = 0.0;
  for_each_expanded(pr, fit.coef, [&](int b, int, double w, double eta) {
    const double r = pr.response(b) - eta;
    sum_w += w;
    sum_wr2 += w * r * r;
  });
  fit.sigma2 = sum_wr2 / sum_w;
  return fit;
}

BinaryFit fit_weighted_binary(const WeightedGlmProblem& pr, const Eigen::VectorXd& init,
                              const NewtonOptions& opts) {
  check_problem(pr);
  if (init.size() != pr.n_coef()) throw ShapeError("initial coefficients have wrong length");

  // An intercept column whose weighted rows are all events (or all non-events)
  // has no finite maximizer.
  {
    const int I = pr.n_intercepts();
    Eigen::VectorXd ev = Eigen::VectorXd::Zero(I), non = Eigen::VectorXd::Zero(I);
    for_each_expanded(pr, init, [&](int b, int iu, double w, double) {
      (pr.response(b) > 0.5 ? ev : non)(iu) += w;
    });
    for (int i = 0; i < I; ++i) {
      if (ev(i) + non(i) <= 0.0) throw_rank(pr, {i});
      if (ev(i) <= 0.0 || non(i) <= 0.0)
        throw SeparationError("column " + pr.column_name(i) + " has " +
                              (ev(i) <= 0.0 ? "no events" : "only events") +
                              "; the maximum likelihood estimate is infinite");
    }
  }

  BinaryFit fit;
  fit.coef = init;
  GlmDerivatives d = binary_derivatives(pr, fit.coef);
  for (int it = 0; it < opts.max_iter; ++it) {
    fit.iterations = it;
    fit.max_score = d.score.cwiseAbs().maxCoeff();
    fit.objective = d.value;
    if (fit.max_score < opts.tol) return fit;

    const Eigen::MatrixXd neg_h = -d.hessian;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(neg_h);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        (ldlt.vectorD().array() <= 0.0).any()) {
      if (const auto bad = collinear_columns(neg_h); !bad.empty()) throw_rank(pr, bad);
      throw SeparationError("Newton-Raphson: information matrix is not positive definite");
    }
    const Eigen::VectorXd step = ldlt.solve(d.score);
    // Steps whose effect is below the rounding level of the objective are
    // accepted; the score decides convergence.
    const double noise = 1e-13 * (1.0 + std::abs(d.value));

    double lambda = 1.0;
    bool accepted = false;
    for (int k = 0; k <= opts.max_halvings; ++k, lambda *= 0.5) {
      const Eigen::VectorXd trial = fit.coef + lambda * step;
      const double obj = binary_objective(pr, trial);
      if (std::isfinite(obj) && obj >= d.value - noise) {
        fit.coef = trial;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // No representable ascent left: accept the current point if it is
      // stationary up to rounding in the objective.
      if (fit.max_score < 1e-6 * std::max(1.0, std::abs(d.value))) return fit;
      throw SeparationError("Newton-Raphson: step halving failed (max score " +
                            std::to_string(fit.max_score) + ")");
    }
    double max_eta = 0.0;
    for_each_expanded(pr, fit.coef, [&](int, int, double w, double eta) {
      if (w > 0.0) max_eta = std::max(max_eta, std::abs(eta));
    });
    if (max_eta > kMaxLinearPredictor)
      throw SeparationError("Newton-Raphson: linear predictor reached " + std::to_string(max_eta) +
                            "; the data appear separated");
    d = binary_derivatives(pr, fit.coef);
  }
  fit.iterations = opts.max_iter;
  fit.max_score = d.score.cwiseAbs().maxCoeff();
  fit.objective = d.value;
  if (fit.max_score < opts.tol) return fit;
  throw SeparationError("Newton-Raphson did not converge in " + std::to_string(opts.max_iter) +
                        " iterations (max score " + std::to_string(fit.max_score) + ")");
}

Eigen::VectorXd fit_weighted_bernoulli(const WeightedGlmProblem& problem,
                                       const Eigen::VectorXd& init, const NewtonOptions& opts) {
  return fit_weighted_binary(problem, init, opts).coef;
}

std::vector<Posteriors> pooled_posteriors(const PanelDataset& data, int k) {
  std::vector<Posteriors> post(static_cast<std::size_t>(data.n()));
  for (int i = 0; i < data.n(); ++i) {
    const int T = data.subjects[i].t;
    post[i].w = Eigen::MatrixXd::Zero(T, k);
    post[i].w.col(0).setOnes();
    for (int t = 1; t < T; ++t) {
      Eigen::MatrixXd z = Eigen::MatrixXd::Zero(k, k);
      z(0, 0) = 1.0;
      post[i].z.push_back(std::move(z));
    }
  }
  return post;
}

WeightedGlmProblem channel_problem(const PanelDataset& data, const std::vector<Posteriors>& post,
                                   const ModelSpec& spec, int h) {
  const int k = post.empty() ? spec.k : static_cast<int>(post.front().w.cols());
  int B = 0;
  for (const auto& sub : data.subjects) B += sub.t;
  const int P = spec.channels[h].p;
  WeightedGlmProblem pr;
  pr.family = spec.channels[h].family;
  pr.link = spec.channels[h].link;
  pr.response.resize(B);
  pr.covariates.resize(B, P);
  pr.weights.resize(B, k);
  int b = 0;
  for (int i = 0; i < data.n(); ++i) {
    const auto& sub = data.subjects[i];
    for (int t = 0; t < sub.t; ++t, ++b) {
      pr.response(b) = sub.y(t, h);
      pr.covariates.row(b) = sub.x[h].row(t);
      pr.weights.row(b) = post[i].w.row(t);
    }
  }
  const auto& c = spec.channels[h];
  for (int u = 0; u < k; ++u)
    pr.column_names.push_back(c.name + ":intercept[" + std::to_string(u + 1) + "]");
  for (int j = 0; j < P; ++j)
    pr.column_names.push_back(c.name + ":" + (j < static_cast<int>(c.covariate_names.size())
                                                  ? c.covariate_names[j]
                                                  : "x" + std::to_string(j + 1)));
  return pr;
}

WeightedGlmProblem hazard_problem(const PanelDataset& data, const std::vector<Posteriors>& post,
                                  const ModelSpec& spec) {
  const int k = post.empty() ? spec.k : static_cast<int>(post.front().w.cols());
  int B = 0;
  for (const auto& sub : data.subjects) B += std::min(sub.t, data.s - 1);
  WeightedGlmProblem pr;
  pr.family = Family::bernoulli;
  pr.link = spec.hazard_link;
  pr.shared_intercept = spec.share_gamma;
  pr.response.resize(B);
  pr.covariates.resize(B, spec.q);
  pr.weights.resize(B, k);
  int b = 0;
  for (int i = 0; i < data.n(); ++i) {
    const auto& sub = data.subjects[i];
    const int last = std::min(sub.t, data.s - 1);
    for (int t = 0; t < last; ++t, ++b) {
      pr.response(b) = (t + 1 == sub.t) ? 1.0 : 0.0;
      pr.covariates.row(b) = sub.z.row(t);
      pr.weights.row(b) = post[i].w.row(t);
    }
  }
  if (spec.share_gamma) {
    pr.column_names.push_back("dropout:intercept");
  } else {
    for (int u = 0; u < k; ++u)
      pr.column_names.push_back("dropout:intercept[" + std::to_string(u + 1) + "]");
  }
  for (int j = 0; j < spec.q; ++j)
    pr.column_names.push_back("dropout:" + (j < static_cast<int>(spec.hazard_covariate_names.size())
                                                ? spec.hazard_covariate_names[j]
                                                : "z" + std::to_string(j + 1)));
  return pr;
}

HazardFit fit_weighted_hazard(const PanelDataset& data, const std::vector<Posteriors>& post,
                              const ModelSpec& spec, const Eigen::VectorXd& gamma,
                              const Eigen::VectorXd& delta, const NewtonOptions& opts) {
  const WeightedGlmProblem pr = hazard_problem(data, post, spec);
  Eigen::VectorXd init(pr.n_coef());
  init << gamma, delta;
  const BinaryFit fit = fit_weighted_binary(pr, init, opts);
  return {fit.coef.head(pr.n_intercepts()), fit.coef.tail(pr.n_slopes())};
}

}  // namespace lmdrop
