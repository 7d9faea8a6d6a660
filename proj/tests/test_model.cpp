#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "generators.hpp"
#include "lmdrop/errors.hpp"
#include "lmdrop/inference.hpp"
#include "lmdrop/model.hpp"
#include "lmdrop/numeric.hpp"
#include "oracles.hpp"

using namespace lmdrop;

namespace {

template <class A, class B>
double max_abs_diff(const A& a, const B& b) {
  return a.size() == 0 ? 0.0 : (a - b).cwiseAbs().maxCoeff();
}

// Two channels with eight covariates each and eight hazard covariates.
ModelSpec eight_covariate_design(int k, bool share = false) {
  ModelSpec s;
  s.k = k;
  s.channels = {ChannelSpec::gaussian(8, "y1"), ChannelSpec::bernoulli(8, "y2")};
  s.q = 8;
  s.share_gamma = share;
  return s;
}

ModelSpec intercept_only(int k = 1) {
  ModelSpec s;
  s.k = k;
  s.channels = {ChannelSpec::gaussian(0)};
  return s;
}

}  // namespace

TEST_CASE("parameter counts of the eight-covariate design") {
  CHECK(num_params(eight_covariate_design(1)) == 28);
  CHECK(num_params(eight_covariate_design(2)) == 34);
  CHECK(num_params(eight_covariate_design(3)) == 42);
  CHECK(num_params(eight_covariate_design(4)) == 52);
  CHECK(num_params(eight_covariate_design(2, true)) == 33);
}

TEST_CASE("packed length equals the parameter count") {
  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 50; ++rep) {
    const auto in = testing::random_instance(rng);
    CHECK(pack_layout(in.spec).size == num_params(in.spec));
    CHECK(pack(in.params, in.spec).size() == num_params(in.spec));
  }
  ModelSpec one = eight_covariate_design(1);
  const PackLayout L = pack_layout(one);
  CHECK(L.Pi == L.size);
  CHECK(L.pi == L.Pi);
}

TEST_CASE("pack and unpack round trip") {
  std::mt19937_64 rng(2);
  for (int rep = 0; rep < 200; ++rep) {
    const auto in = testing::random_instance(rng);
    const ParamSet back = unpack(pack(in.params, in.spec), in.spec);
    CHECK(max_abs_diff(back.pi, in.params.pi) < 1e-12);
    CHECK(max_abs_diff(back.Pi, in.params.Pi) < 1e-12);
    CHECK(max_abs_diff(back.alpha, in.params.alpha) < 1e-12);
    CHECK(max_abs_diff(back.gamma, in.params.gamma) < 1e-12);
    CHECK(max_abs_diff(back.delta, in.params.delta) < 1e-12);
    for (int h = 0; h < in.spec.r(); ++h) {
      CHECK(max_abs_diff(back.beta[h], in.params.beta[h]) < 1e-12);
      if (in.spec.channels[h].family == Family::gaussian)
        CHECK(std::abs(back.sigma2(h) - in.params.sigma2(h)) < 1e-12);
    }
  }
  CHECK_THROWS_AS(unpack(Eigen::VectorXd::Zero(3), eight_covariate_design(2)), ShapeError);
}

TEST_CASE("hazard values") {
  ModelSpec spec;
  spec.k = 2;
  spec.channels = {ChannelSpec::gaussian(0)};
  spec.q = 1;
  ParamSet p = zero_params(spec);
  const double z0[] = {0.0};
  CHECK(hazard(0, z0, 1, p, spec, 3) == doctest::Approx(0.5));
  CHECK(hazard(1, z0, 3, p, spec, 3) == 1.0);
  p.gamma << 4.0, -7.0;
  p.delta << 1.3;
  const double z1[] = {0.7};
  CHECK(hazard(1, z1, 3, p, spec, 3) == 1.0);

  spec.hazard_link = Link::cloglog;
  for (double eta : {-30.0, -3.0, -0.2, 0.0, 0.9, 2.5}) {
    p.gamma << eta, 0.0;
    p.delta << 0.0;
    const double direct = 1.0 - std::exp(-std::exp(eta));
    CHECK(hazard(0, z0, 1, p, spec, 3) == doctest::Approx(direct).epsilon(1e-13));
  }
}

TEST_CASE("hazard log-probabilities are stable in the tails") {
  for (Link link : {Link::logit, Link::cloglog}) {
    for (double eta : {-800.0, -40.0, -1.0, 0.0, 1.0, 3.0, 40.0}) {
      const HazardLogs hl = hazard_logs(eta, link);
      CHECK(std::isfinite(hl.log_1mp));
      CHECK(hl.log_p <= 0.0);
      CHECK(hl.log_1mp <= 0.0);
      // p + (1 - p) = 1 wherever both are representable.
      if (std::abs(eta) < 3.0) CHECK(std::exp(hl.log_p) + std::exp(hl.log_1mp) == doctest::Approx(1.0));
    }
  }
  CHECK(hazard_logs(-800.0, Link::logit).log_p == doctest::Approx(-800.0));
}

TEST_CASE("duration law") {
  ModelSpec spec = intercept_only();
  ParamSet p = zero_params(spec);
  const double prob = 0.3;
  p.gamma << numeric::logit(prob);
  const RowMatrix z(6, 0);
  const int path[] = {0, 0, 0, 0, 0, 0};
  CHECK(duration_logprob(3, path, z, p, spec, 6) ==
        doctest::Approx(std::log(prob * (1 - prob) * (1 - prob))).epsilon(1e-13));
  CHECK(duration_logprob(6, path, z, p, spec, 6) ==
        doctest::Approx(5 * std::log(1 - prob)).epsilon(1e-13));

  SUBCASE("mass over t = 1..s sums to one for any path and covariates") {
    std::mt19937_64 rng(9);
    for (int rep = 0; rep < 100; ++rep) {
      const auto in = testing::random_instance(rng);
      const int s = in.data.s;
      std::uniform_int_distribution<int> ud(0, in.spec.k - 1);
      std::normal_distribution<double> nd;
      std::vector<int> pth(s);
      for (auto& u : pth) u = ud(rng);
      RowMatrix zz(s, in.spec.q);
      for (int t = 0; t < s; ++t)
        for (int j = 0; j < in.spec.q; ++j) zz(t, j) = nd(rng);
      double total = 0.0;
      for (int t = 1; t <= s; ++t) total += std::exp(duration_logprob(t, pth, zz, in.params, in.spec, s));
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

      // Independent product of per-occasion hazards.
      const int t_obs = std::uniform_int_distribution<int>(1, s)(rng);
      double direct = 0.0;
      for (int t = 1; t <= t_obs && t < s; ++t) {
        double eta = in.params.gamma_of(pth[t - 1]);
        for (int j = 0; j < in.spec.q; ++j) eta += zz(t - 1, j) * in.params.delta(j);
        const double ph = in.spec.hazard_link == Link::logit ? 1.0 / (1.0 + std::exp(-eta))
                                                             : 1.0 - std::exp(-std::exp(eta));
        direct += std::log(t < t_obs ? 1.0 - ph : ph);
      }
      CHECK(duration_logprob(t_obs, pth, zz, in.params, in.spec, s) ==
            doctest::Approx(direct).epsilon(1e-10));
    }
  }
}

TEST_CASE("channel log-densities") {
  ModelSpec spec;
  spec.k = 1;
  spec.channels = {ChannelSpec::gaussian(0), ChannelSpec::bernoulli(0)};
  ParamSet p = zero_params(spec);
  p.alpha(0, 0) = 1.7;
  CHECK(channel_logdensity(0, 1.7, 0, {}, p, spec) == doctest::Approx(-0.9189385332046727));
  CHECK(channel_logdensity(1, 1.0, 0, {}, p, spec) == doctest::Approx(std::log(0.5)));
  p.alpha(1, 0) = 2.0;
  CHECK(channel_logdensity(1, 0.0, 0, {}, p, spec) == doctest::Approx(-std::log1p(std::exp(2.0))));
}

TEST_CASE("state permutation and ordering") {
  std::mt19937_64 rng(4);
  testing::InstanceOptions o;
  o.min_k = 3;
  const auto in = testing::random_instance(rng, o);
  const int perm[] = {2, 0, 1};
  const ParamSet q = permute_states(in.params, perm);
  CHECK(q.alpha(0, 0) == in.params.alpha(0, 2));
  CHECK(q.Pi(0, 1) == in.params.Pi(2, 0));
  const ParamSet ordered = order_states(q);
  for (int u = 0; u + 1 < 3; ++u) CHECK(ordered.alpha(0, u) <= ordered.alpha(0, u + 1));
  CHECK(order_states(in.params).alpha == ordered.alpha);
}

TEST_CASE("reporting basis and its Jacobian") {
  std::mt19937_64 rng(12);
  for (int rep = 0; rep < 30; ++rep) {
    const auto in = testing::random_instance(rng);
    const Eigen::VectorXd v = reporting_vector(in.params, in.spec);
    CHECK(static_cast<std::size_t>(v.size()) == reporting_names(in.spec).size());
    const Eigen::VectorXd theta = pack(in.params, in.spec);
    const Eigen::MatrixXd R = reporting_jacobian(in.params, in.spec);
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const Eigen::VectorXd g = testing::fd_gradient5(
          [&](const Eigen::VectorXd& t) { return reporting_vector(unpack(t, in.spec), in.spec)(i); },
          theta);
      CHECK((R.row(i).transpose() - g).cwiseAbs().maxCoeff() < 1e-8);
    }
  }
}

TEST_CASE("spec validation") {
  ModelSpec s;
  s.k = 0;
  s.channels = {ChannelSpec::gaussian(0)};
  CHECK_THROWS_AS(s.validate(), SchemaError);
  s.k = 2;
  s.channels[0].link = Link::logit;
  CHECK_THROWS_AS(s.validate(), SchemaError);
  s.channels[0].link = Link::identity;
  s.hazard_link = Link::identity;
  CHECK_THROWS_AS(s.validate(), SchemaError);
}
