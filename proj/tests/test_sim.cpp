#include <doctest.h>

#include <cmath>

#include <boost/math/distributions/chi_squared.hpp>

#include "lmdrop/numeric.hpp"
#include "lmdrop/sim.hpp"
#include "support.hpp"

using namespace lmdrop;

namespace {

SimConfig constant_hazard(int n, int s, double p, std::uint64_t seed) {
  SimConfig c;
  c.n = n;
  c.s = s;
  c.seed = seed;
  c.spec.k = 1;
  c.spec.channels = {ChannelSpec::gaussian(0, "y")};
  c.truth = zero_params(c.spec);
  c.truth.gamma(0) = numeric::logit(p);
  return c;
}

}  // namespace

TEST_CASE("same seed, same panel") {
  const auto cfg = testing::standard_design(100, 6, 2, 101);
  const auto a = simulate(cfg);
  const auto b = simulate(cfg);
  REQUIRE(a.data.n() == b.data.n());
  for (int i = 0; i < a.data.n(); ++i) {
    CHECK(a.data.subjects[i].t == b.data.subjects[i].t);
    CHECK(a.data.subjects[i].y == b.data.subjects[i].y);
    CHECK(a.data.subjects[i].z == b.data.subjects[i].z);
  }
  CHECK(a.truth.paths == b.truth.paths);
  auto other = cfg;
  other.seed = 102;
  CHECK(simulate(other).truth.paths != a.truth.paths);
  CHECK_NOTHROW(validate_panel(a.data));
}

TEST_CASE("negligible hazard keeps everyone to the horizon") {
  auto cfg = testing::standard_design(200, 7, 2, 103);
  cfg.truth.gamma.setConstant(-40.0);
  cfg.truth.delta.setZero();
  const auto sim = simulate(cfg);
  for (int t : sim.truth.t) CHECK(t == 7);
}

TEST_CASE("latent chain frequencies follow the transition matrix") {
  auto cfg = testing::standard_design(4000, 6, 3, 104);
  cfg.truth.Pi << 0.6, 0.3, 0.1, 0.2, 0.5, 0.3, 0.1, 0.1, 0.8;
  const auto sim = simulate(cfg);
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(3, 3);
  Eigen::VectorXd first = Eigen::VectorXd::Zero(3);
  for (const auto& path : sim.truth.paths) {
    first(path[0]) += 1;
    for (std::size_t j = 1; j < path.size(); ++j) counts(path[j - 1], path[j]) += 1;
  }
  for (int u = 0; u < 3; ++u) {
    const double tot = counts.row(u).sum();
    for (int v = 0; v < 3; ++v) {
      const double p = cfg.truth.Pi(u, v);
      CHECK(std::abs(counts(u, v) / tot - p) < 4.0 * std::sqrt(p * (1 - p) / tot));
    }
    CHECK(std::abs(first(u) / 4000 - 1.0 / 3) < 4.0 * std::sqrt(2.0 / 9 / 4000));
  }
}

TEST_CASE("constant hazard gives a truncated geometric duration") {
  const double p = 0.25;
  const int s = 5;
  const int n = 20000;
  const auto sim = simulate(constant_hazard(n, s, p, 105));
  Eigen::VectorXd obs = Eigen::VectorXd::Zero(s);
  for (int t : sim.truth.t) obs(t - 1) += 1;
  double chi2 = 0.0;
  for (int t = 1; t <= s; ++t) {
    const double prob = t < s ? std::pow(1 - p, t - 1) * p : std::pow(1 - p, s - 1);
    const double e = n * prob;
    chi2 += (obs(t - 1) - e) * (obs(t - 1) - e) / e;
  }
  const boost::math::chi_squared dist(s - 1);
  CHECK(boost::math::cdf(boost::math::complement(dist, chi2)) > 0.001);
}

TEST_CASE("covariate generators") {
  auto cfg = testing::standard_design(50, 4, 2, 106);
  const auto sim = simulate(cfg);
  for (const auto& sub : sim.data.subjects) {
    for (int t = 0; t < sub.t; ++t) {
      CHECK(sub.x[0](t, 0) == sub.x[0](0, 0));
      CHECK(sub.x[0](t, 1) == doctest::Approx(-0.5 + 0.1 * (t + 1)));
      CHECK(sub.x[1](t, 0) == sub.x[0](t, 0));
      CHECK(std::abs(sub.x[0](t, 0)) <= 1.0);
    }
  }
  CHECK(parse_generator_kind(to_string(CovariateGenerator::Kind::binary)) ==
        CovariateGenerator::Kind::binary);
  cfg.covariates.erase("time");
  CHECK_THROWS(cfg.validate());
}

TEST_CASE("aligning fitted states to the truth") {
  const auto cfg = testing::standard_design(10, 4, 3, 107);
  const int perm[] = {2, 0, 1};
  const ParamSet shuffled = permute_states(cfg.truth, perm);
  const auto found = align_to_truth(shuffled, cfg.truth);
  const ParamSet back = permute_states(shuffled, found);
  CHECK(back.alpha == cfg.truth.alpha);
}

TEST_CASE("recovery summary bookkeeping") {
  const auto cfg = testing::standard_design(300, 6, 2, 108);
  EmConfig em;
  em.n_random_starts = 1;
  const RecoverySummary r = recovery_study(cfg, 4, em);
  CHECK(r.replicates.size() == 4);
  CHECK(r.n_ok == 4);
  CHECK(r.names.size() == r.parameters.size());
  for (const auto& rep : r.replicates) CHECK(rep.chosen_k == 0);
  const RecoverySummary again = recovery_study(cfg, 4, em);
  for (std::size_t i = 0; i < r.replicates.size(); ++i)
    CHECK(r.replicates[i].loglik == again.replicates[i].loglik);
  CHECK(is_slope_or_hazard("beta[y1][age]"));
  CHECK(is_slope_or_hazard("intercept[dropout]"));
  CHECK_FALSE(is_slope_or_hazard("intercept[y1]"));
  CHECK_FALSE(is_slope_or_hazard("Pi[1,2]"));
}
