#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "lmdrop/glm.hpp"
#include "lmdrop/recursions.hpp"

namespace lmdrop {

struct EmConfig {
  double tol_loglik = 1e-8;        // on |dl| / (|l| + 1)
  double tol_score = 1e-6;         // max-abs expected score; <= 0 disables
  int max_iter = 1000;
  int n_random_starts = 9;         // in addition to the deterministic start
  double perturbation_scale = 0.5;
  std::uint64_t seed = 0;
  NewtonOptions newton;            // inner M-step solvers

  void validate() const;
};

struct EStepResult {
  std::vector<Posteriors> post;
  std::vector<double> subject_loglik;
  double loglik = 0.0;
};

/// Posteriors for every subject and the observed log-likelihood, with the
/// subject loop serial or spread over OpenMP threads.
EStepResult e_step(const PanelDataset& data, const ParamSet& params, const ModelSpec& spec,
                   Execution exec = Execution::parallel);

struct LatentUpdate {
  Eigen::VectorXd pi;
  Eigen::MatrixXd Pi;
  bool Pi_updated = false;  // false when no subject has t_i >= 2
};

/// Closed-form initial/transition update. Rows whose expected origin count is
/// zero keep their previous values.
LatentUpdate m_step_latent(const std::vector<Posteriors>& post, const Eigen::MatrixXd& previous_Pi);

/// Full M-step. Throws DegenerateStateError when a state's expected
/// occupancy drops below 1e-8.
ParamSet m_step(const PanelDataset& data, const std::vector<Posteriors>& post,
                const ParamSet& current, const ModelSpec& spec, const NewtonOptions& newton = {});

struct IterationRecord {
  double loglik = 0.0;
  double rel_change = 0.0;    // |dl| / (|l| + 1) against the previous iteration
  double max_score = 0.0;
  double param_change = 0.0;  // max-abs change in packed coordinates of the M-step
};

struct StartRecord {
  int index = 0;
  bool deterministic = false;
  bool ok = false;
  double loglik = 0.0;
  int n_iter = 0;
  bool converged = false;
  std::string error;
};

struct FitResult {
  ParamSet params;
  double loglik = 0.0;
  int n_iter = 0;
  bool converged = false;
  std::vector<IterationRecord> trace;
  int best_start = 0;
  std::vector<StartRecord> starts;
};

FitResult em_fit(const PanelDataset& data, const ModelSpec& spec, const EmConfig& config,
                 const ParamSet& init);

/// Pooled GLM start: slopes from state-free fits, state intercepts spread
/// around the pooled intercepts, uniform pi, Pi with off-diagonals 1/[k(k-1)].
ParamSet deterministic_init(const PanelDataset& data, const ModelSpec& spec,
                            const NewtonOptions& newton = {});

/// Gaussian noise on packed coordinates scaled by max(1, |coordinate|).
ParamSet perturb(const ParamSet& params, const ModelSpec& spec, double scale,
                 std::mt19937_64& rng);

/// Deterministic start, then n_random_starts perturbations of its solution
/// (run in parallel), then any caller-supplied starts. Returns the best fit.
FitResult multistart_fit(const PanelDataset& data, const ModelSpec& spec, const EmConfig& config,
                         const std::vector<ParamSet>& extra_starts = {});

/// Independent stream for replication/start `index` under a master seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

}  // namespace lmdrop
