#pragma once

#include <vector>

#include "lmdrop/data.hpp"
#include "lmdrop/model.hpp"

namespace lmdrop {

/// How across-subject loops are scheduled. Both give identical results: the
/// parallel path writes per-subject slots and reduces them in subject order.
enum class Execution { serial, parallel };

/// log a_t(u), row j is occasion j+1. log_norm(j) = logsumexp_u log a_{j+1}(u).
struct ForwardTable {
  Eigen::MatrixXd log_a;
  Eigen::VectorXd log_norm;
};

/// log b_t(u); the last row is identically zero.
struct BackwardTable {
  Eigen::MatrixXd log_b;
};

/// w(j, u): Pr(U_{j+1} = u | data).
/// z[j](u, v): Pr(U_{j+1} = u, U_{j+2} = v | data), so z has t_i - 1 entries.
struct Posteriors {
  Eigen::MatrixXd w;
  std::vector<Eigen::MatrixXd> z;
};

/// Per-occasion log factor for every state: sum of channel log-densities plus
/// log(1 - p) before the last observed occasion and log p at it (0 at the horizon).
Eigen::MatrixXd occasion_log_factors(const SubjectRecord& subject, const ParamSet& params,
                                     const ModelSpec& spec, int s);

ForwardTable forward(const SubjectRecord& subject, const ParamSet& params, const ModelSpec& spec,
                     int s);
BackwardTable backward(const SubjectRecord& subject, const ParamSet& params,
                       const ModelSpec& spec, int s);
double subject_loglik(const SubjectRecord& subject, const ParamSet& params, const ModelSpec& spec,
                      int s);
Posteriors posteriors(const ForwardTable& fwd, const BackwardTable& bwd,
                      const SubjectRecord& subject, const ParamSet& params, const ModelSpec& spec,
                      int s);

struct SubjectEStep {
  Posteriors post;
  double loglik = 0.0;
};

/// Forward, backward and posteriors for one subject sharing one factor table.
SubjectEStep subject_e_step(const SubjectRecord& subject, const ParamSet& params,
                            const ModelSpec& spec, int s);

double total_loglik(const PanelDataset& data, const ParamSet& params, const ModelSpec& spec,
                    Execution exec = Execution::parallel);

}  // namespace lmdrop
