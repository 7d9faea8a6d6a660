#pragma once

#include <vector>

#include "lmdrop/data.hpp"
#include "lmdrop/model.hpp"
#include "lmdrop/recursions.hpp"

namespace lmdrop {

/// Expected complete-data log-likelihood Q(params | posteriors) and its
/// derivatives in the packed (unconstrained) coordinates of pack_layout.
struct QDerivatives {
  double value = 0.0;
  Eigen::VectorXd score;
  Eigen::MatrixXd hessian;  // empty unless requested
};

QDerivatives q_derivatives(const PanelDataset& data, const std::vector<Posteriors>& post,
                           const ParamSet& params, const ModelSpec& spec, bool with_hessian = true);

/// Analytic score of Q with the posteriors held fixed. At the posteriors of
/// the same parameters this equals the gradient of the observed log-likelihood.
Eigen::VectorXd expected_score(const PanelDataset& data, const std::vector<Posteriors>& post,
                               const ParamSet& params, const ModelSpec& spec);

}  // namespace lmdrop
