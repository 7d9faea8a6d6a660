#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "lmdrop/sim.hpp"

namespace lmdrop::testing {

/// Two channels (gaussian with age and time, bernoulli with age), drop-out
/// depending on age. States are well separated for k = 2.
inline SimConfig standard_design(int n, int s, int k, std::uint64_t seed) {
  SimConfig c;
  c.n = n;
  c.s = s;
  c.seed = seed;
  ChannelSpec g = ChannelSpec::gaussian(2, "y1");
  g.covariate_names = {"age", "time"};
  ChannelSpec b = ChannelSpec::bernoulli(1, "y2");
  b.covariate_names = {"age"};
  c.spec.k = k;
  c.spec.channels = {g, b};
  c.spec.q = 1;
  c.spec.hazard_covariate_names = {"age"};

  ParamSet& p = c.truth;
  p = zero_params(c.spec);
  for (int u = 0; u < k; ++u) {
    const double o = k == 1 ? 0.0 : -1.0 + 2.0 * u / (k - 1);
    p.alpha(0, u) = 1.5 * o;
    p.alpha(1, u) = 1.0 * o;
    p.gamma(u) = -2.0 + 0.6 * o;
  }
  p.beta[0] << 0.5, -0.3;
  p.beta[1] << 0.4;
  p.sigma2 << 0.6, 1.0;
  p.delta << 0.3;
  p.pi = Eigen::VectorXd::Constant(k, 1.0 / k);
  p.Pi = Eigen::MatrixXd::Constant(k, k, k == 1 ? 1.0 : 0.15 / (k - 1));
  if (k > 1) p.Pi.diagonal().setConstant(0.85);
  c.covariates["age"] = CovariateGenerator::uniform(-1.0, 1.0, true);
  c.covariates["time"] = CovariateGenerator::polynomial({-0.5, 0.1});
  return c;
}

}  // namespace lmdrop::testing
