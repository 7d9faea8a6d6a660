#pragma once

#include <cstdint>
#include <string>

#include "lmdrop/recursions.hpp"

namespace lmdrop {

/// Largest number of latent paths k^t_i the enumerators accept.
inline constexpr std::uint64_t kMaxOraclePaths = 10'000'000;

/// Observed log-likelihood of one subject by summing over every latent path.
/// Throws ExplosionError when k^t_i exceeds kMaxOraclePaths.
double brute_loglik(const SubjectRecord& subject, const ParamSet& params, const ModelSpec& spec,
                    int s);

/// Occupancy and transition posteriors from normalized path weights.
Posteriors brute_posteriors(const SubjectRecord& subject, const ParamSet& params,
                            const ModelSpec& spec, int s);

/// Central-difference Hessian of total_loglik in packed coordinates, with
/// per-coordinate steps step * (|theta_j| + 1).
Eigen::MatrixXd brute_observed_hessian(const PanelDataset& data, const ParamSet& params,
                                       const ModelSpec& spec, double step = 1e-4);

struct AuditReport {
  int n_subjects = 0;
  double loglik_recursion = 0.0;
  double loglik_oracle = 0.0;
  double max_loglik_diff = 0.0;
  double max_posterior_diff = 0.0;
  std::string worst_subject;  // largest combined discrepancy
};

/// Recomputes every subject with the enumerators and compares with the
/// recursions. Checks the path guard for all subjects before any work.
AuditReport audit(const PanelDataset& data, const ParamSet& params, const ModelSpec& spec);

}  // namespace lmdrop
