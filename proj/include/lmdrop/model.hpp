#pragma once

#include <span>
#include <string>
#include <vector>

#include "lmdrop/data.hpp"
#include "lmdrop/types.hpp"

namespace lmdrop {

struct ChannelSpec {
  std::string name;
  Family family = Family::gaussian;
  Link link = Link::identity;
  int p = 0;  // number of covariates with shared slopes
  std::vector<std::string> covariate_names;  // optional labels, size p when set

  static ChannelSpec gaussian(int p, std::string name = "y") {
    return {std::move(name), Family::gaussian, Link::identity, p, {}};
  }
  static ChannelSpec bernoulli(int p, std::string name = "y") {
    return {std::move(name), Family::bernoulli, Link::logit, p, {}};
  }
};

struct ModelSpec {
  int k = 1;
  std::vector<ChannelSpec> channels;
  int q = 0;
  Link hazard_link = Link::logit;  // logit or cloglog
  bool share_gamma = false;        // gamma_1 = ... = gamma_k
  std::vector<std::string> hazard_covariate_names;  // optional labels, size q when set

  int r() const { return static_cast<int>(channels.size()); }
  int n_gamma() const { return share_gamma ? 1 : k; }
  int n_gaussian() const;
  /// Throws SchemaError for k < 1, r < 1, or an unsupported family/link pair.
  void validate() const;
};

/// Spec whose channel/hazard dimensions follow the dataset's designs.
ModelSpec spec_for(const PanelDataset& data, int k, Link hazard_link = Link::logit,
                   bool share_gamma = false);

/// Throws SchemaError when the dataset's designs disagree with the spec.
void check_compatible(const PanelDataset& data, const ModelSpec& spec);

struct ParamSet {
  Eigen::VectorXd pi;                // k
  Eigen::MatrixXd Pi;                // k x k, rows sum to one
  Eigen::MatrixXd alpha;             // r x k state intercepts
  std::vector<Eigen::VectorXd> beta; // per channel, length p_h
  Eigen::VectorXd sigma2;            // r; only gaussian entries are meaningful (others held at 1)
  Eigen::VectorXd gamma;             // k, or 1 under share_gamma
  Eigen::VectorXd delta;             // q

  double gamma_of(int u) const { return gamma.size() == 1 ? gamma(0) : gamma(u); }
};

/// Zero-slope parameters of the right shape: uniform pi, Pi = I, unit sigma2.
ParamSet zero_params(const ModelSpec& spec);

/// Throws DomainError / ShapeError when the parameters violate their invariants.
void validate_params(const ParamSet& params, const ModelSpec& spec);

struct HazardLogs {
  double log_p;    // log p
  double log_1mp;  // log(1 - p)
};

/// Stable log-probabilities of the drop-out event at linear predictor eta.
HazardLogs hazard_logs(double eta, Link link);

double hazard_eta(int u, std::span<const double> z, const ParamSet& params);

/// Drop-out probability right after occasion t (1-based) for state u (0-based).
/// Exactly 1 at the horizon.
double hazard(int u, std::span<const double> z, int t, const ParamSet& params,
              const ModelSpec& spec, int s);

/// log Pr(T = t_obs | path), path[j] is the state at occasion j+1.
/// z holds the hazard covariates, row j for occasion j+1.
double duration_logprob(int t_obs, std::span<const int> path, const RowMatrix& z,
                        const ParamSet& params, const ModelSpec& spec, int s);

double channel_eta(int h, int u, std::span<const double> x, const ParamSet& params);

/// log f(y | U = u) for channel h.
double channel_logdensity(int h, double y, int u, std::span<const double> x,
                          const ParamSet& params, const ModelSpec& spec);

/// Free parameter count, as used for BIC.
int num_params(const ModelSpec& spec);

/// Offsets of each block inside the packed (unconstrained) vector.
struct PackLayout {
  std::vector<int> alpha;   // per channel, k slots
  std::vector<int> beta;    // per channel, p_h slots
  std::vector<int> sigma;   // per channel, one log-sigma2 slot or -1
  int gamma = 0;
  int delta = 0;
  int pi = 0;               // k-1 log-ratios against state 0
  int Pi = 0;               // k rows of k-1 log-ratios against column 0
  int size = 0;
  std::vector<std::string> names;
};

PackLayout pack_layout(const ModelSpec& spec);

Eigen::VectorXd pack(const ParamSet& params, const ModelSpec& spec);
ParamSet unpack(const Eigen::VectorXd& v, const ModelSpec& spec);

/// Relabel states: new state u is old state perm[u].
ParamSet permute_states(const ParamSet& params, std::span<const int> perm);

/// Permutation sorting states by increasing first-channel intercept.
std::vector<int> state_order(const ParamSet& params);
ParamSet order_states(const ParamSet& params);

/// Averaged-intercept view used for tables: intercept means, deviations, slopes.
struct ReportedParams {
  Eigen::VectorXd alpha_mean;          // r
  Eigen::MatrixXd alpha_dev;           // r x k
  std::vector<Eigen::VectorXd> beta;
  Eigen::VectorXd sigma2;
  double gamma_mean = 0.0;
  Eigen::VectorXd gamma_dev;           // k (zeros under share_gamma)
  Eigen::VectorXd delta;
  Eigen::VectorXd pi;
  Eigen::MatrixXd Pi;
};

ReportedParams report_params(const ParamSet& params, const ModelSpec& spec);

/// Flat reporting basis: per channel [mean intercept, k deviations, slopes],
/// then gaussian sigma2, gamma mean, gamma deviations (unless shared), delta,
/// pi, and Pi row-major.
std::vector<std::string> reporting_names(const ModelSpec& spec);
Eigen::VectorXd reporting_vector(const ParamSet& params, const ModelSpec& spec);

}  // namespace lmdrop
