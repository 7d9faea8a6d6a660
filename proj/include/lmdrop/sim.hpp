#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lmdrop/em.hpp"

namespace lmdrop {

/// How one named covariate is drawn. Values are per occasion unless
/// per_subject is set, in which case one draw is held over all occasions.
struct CovariateGenerator {
  enum class Kind { constant, uniform, binary, time_polynomial };
  Kind kind = Kind::constant;
  double value = 0.0;                 // constant
  double lo = 0.0, hi = 1.0;          // uniform
  double prob = 0.5;                  // binary
  std::vector<double> coefficients;   // time_polynomial: c0 + c1 t + c2 t^2 + ...
  bool per_subject = false;

  static CovariateGenerator constant_value(double v);
  static CovariateGenerator uniform(double lo, double hi, bool per_subject = false);
  static CovariateGenerator binary(double prob, bool per_subject = true);
  static CovariateGenerator polynomial(std::vector<double> coefficients);
};

std::string to_string(CovariateGenerator::Kind kind);
CovariateGenerator::Kind parse_generator_kind(const std::string& s);

struct SimConfig {
  int n = 100;
  int s = 5;
  ModelSpec spec;      // covariate_names must be set wherever p or q is positive
  ParamSet truth;
  std::map<std::string, CovariateGenerator> covariates;  // keyed by covariate name
  std::uint64_t seed = 0;

  void validate() const;
};

struct TruthRecord {
  std::vector<std::string> ids;
  std::vector<std::vector<int>> paths;  // latent states for occasions 1..t_i
  std::vector<int> t;
  std::uint64_t seed = 0;
};

struct Simulation {
  PanelDataset data;
  TruthRecord truth;
};

/// Draws each subject's latent chain, outcomes at every occasion, and then the
/// drop-out trial after that occasion; the horizon truncates at s.
Simulation simulate(const SimConfig& config);

struct RecoveryOptions {
  std::vector<int> select_ks;  // when nonempty, run select_k on every replicate
  double fd_step = 1e-5;
  bool parallel = true;        // replicates across threads
};

struct ParameterRecovery {
  std::string name;
  double truth = 0.0;
  double mean_estimate = 0.0;
  double bias = 0.0;
  double rmse = 0.0;
  double coverage95 = 0.0;     // fraction of replicates with |est - truth| <= 1.96 SE
  double within3se = 0.0;      // fraction with |est - truth| <= 3 SE
  int n_used = 0;              // replicates with SEs
};

struct ReplicateRecord {
  int index = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double loglik = 0.0;
  std::vector<int> permutation;  // aligned state u is fitted state permutation[u]
  Eigen::VectorXd estimate;      // reporting basis after alignment
  Eigen::VectorXd se;            // empty when the information was singular
  int chosen_k = 0;              // 0 unless select_ks was given
};

struct RecoverySummary {
  std::vector<std::string> names;  // reporting basis
  std::vector<ParameterRecovery> parameters;
  std::vector<ReplicateRecord> replicates;
  int n_ok = 0;
  // Over slope and drop-out coordinates of successful replicates with SEs.
  double slope_hazard_within3se = 0.0;
  int slope_hazard_checked = 0;
  double select_k_hit_rate = 0.0;  // fraction choosing spec.k, when selection ran
};

/// True for slope and drop-out coordinates of the reporting basis.
bool is_slope_or_hazard(const std::string& reporting_name);

/// Permutation of fitted states minimizing the squared distance of the
/// intercepts to the truth.
std::vector<int> align_to_truth(const ParamSet& fitted, const ParamSet& truth);

RecoverySummary recovery_study(const SimConfig& config, int n_reps, const EmConfig& em,
                               const RecoveryOptions& options = {});

}  // namespace lmdrop
