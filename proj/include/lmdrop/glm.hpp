#pragma once

#include <string>
#include <vector>

#include "lmdrop/data.hpp"
#include "lmdrop/model.hpp"
#include "lmdrop/recursions.hpp"

namespace lmdrop {

/// A GLM over state-expanded rows (b, u): base row b carries a response and
/// covariates, and each latent state u contributes a copy with weight
/// weights(b, u) and a one-hot state intercept. The expansion is never
/// materialized. Coefficients are ordered [intercepts..., slopes...].
struct WeightedGlmProblem {
  Family family = Family::gaussian;  // bernoulli covers any binary response
  Link link = Link::identity;        // identity (gaussian), logit or cloglog
  bool shared_intercept = false;     // a single intercept common to all states
  Eigen::VectorXd response;          // length B
  RowMatrix covariates;              // B x p
  Eigen::MatrixXd weights;           // B x k, nonnegative
  std::vector<std::string> column_names;  // optional, one per coefficient

  int n_rows() const { return static_cast<int>(response.size()); }
  int n_states() const { return static_cast<int>(weights.cols()); }
  int n_intercepts() const { return shared_intercept ? 1 : n_states(); }
  int n_slopes() const { return static_cast<int>(covariates.cols()); }
  int n_coef() const { return n_intercepts() + n_slopes(); }
  std::string column_name(int j) const;
};

struct NewtonOptions {
  int max_iter = 100;
  double tol = 1e-8;       // max-abs score
  int max_halvings = 40;
};

/// Weighted log-likelihood and its first two derivatives in the coefficients.
struct GlmDerivatives {
  double value = 0.0;
  Eigen::VectorXd score;
  Eigen::MatrixXd hessian;
};

/// Binary-response (logit or cloglog) weighted log-likelihood.
double binary_objective(const WeightedGlmProblem& problem, const Eigen::VectorXd& coef);
GlmDerivatives binary_derivatives(const WeightedGlmProblem& problem, const Eigen::VectorXd& coef);

/// Gaussian weighted log-likelihood with coordinates [coef..., log sigma2].
GlmDerivatives gaussian_derivatives(const WeightedGlmProblem& problem, const Eigen::VectorXd& coef,
                                    double log_sigma2);

struct GaussianFit {
  Eigen::VectorXd coef;
  double sigma2 = 1.0;
};

/// Closed-form weighted least squares; sigma2 = sum w (y - yhat)^2 / sum w.
/// Throws RankError naming the collinear columns.
GaussianFit fit_weighted_gaussian(const WeightedGlmProblem& problem);

struct BinaryFit {
  Eigen::VectorXd coef;
  double objective = 0.0;
  double max_score = 0.0;
  int iterations = 0;
};

/// Newton-Raphson with step halving for logit or cloglog links.
/// Throws SeparationError when an intercept column sees only events or only
/// non-events, when step halving cannot make progress, or on the iteration cap.
BinaryFit fit_weighted_binary(const WeightedGlmProblem& problem, const Eigen::VectorXd& init,
                              const NewtonOptions& opts = {});

Eigen::VectorXd fit_weighted_bernoulli(const WeightedGlmProblem& problem,
                                       const Eigen::VectorXd& init,
                                       const NewtonOptions& opts = {});

/// Channel h's M-step problem: rows (i, t) for t <= t_i weighted by w_it(u).
WeightedGlmProblem channel_problem(const PanelDataset& data, const std::vector<Posteriors>& post,
                                   const ModelSpec& spec, int h);

/// Drop-out M-step problem: rows (i, t) for t <= min(t_i, s - 1), event
/// indicator 1 at t = t_i < s.
WeightedGlmProblem hazard_problem(const PanelDataset& data, const std::vector<Posteriors>& post,
                                  const ModelSpec& spec);

struct HazardFit {
  Eigen::VectorXd gamma;
  Eigen::VectorXd delta;
};

HazardFit fit_weighted_hazard(const PanelDataset& data, const std::vector<Posteriors>& post,
                              const ModelSpec& spec, const Eigen::VectorXd& gamma,
                              const Eigen::VectorXd& delta, const NewtonOptions& opts = {});

/// Unit posteriors: every subject in state 0 with certainty (k = 1 pooling).
std::vector<Posteriors> pooled_posteriors(const PanelDataset& data, int k = 1);

}  // namespace lmdrop
