#include <doctest.h>

#include <random>

#include "generators.hpp"
#include "lmdrop/complete_data.hpp"
#include "lmdrop/em.hpp"
#include "oracles.hpp"

using namespace lmdrop;

namespace {

double rel_err(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff());
}

}  // namespace

TEST_CASE("expected score matches differences of Q with frozen posteriors") {
  std::mt19937_64 rng(51);
  testing::InstanceOptions o;
  o.n = 25;
  for (int rep = 0; rep < 40; ++rep) {
    const auto in = testing::random_instance(rng, o);
    const auto post = e_step(in.data, in.params, in.spec).post;
    const Eigen::VectorXd theta = pack(in.params, in.spec);
    const auto Q = [&](const Eigen::VectorXd& v) {
      return q_derivatives(in.data, post, unpack(v, in.spec), in.spec, false).value;
    };
    const QDerivatives d = q_derivatives(in.data, post, in.params, in.spec, true);
    CHECK(rel_err(d.score, testing::fd_gradient5(Q, theta)) < 1e-6);
    CHECK(rel_err(expected_score(in.data, post, in.params, in.spec), d.score) < 1e-15);
    for (Eigen::Index j = 0; j < theta.size(); ++j) {
      const Eigen::VectorXd hj = testing::fd_gradient5(
          [&](const Eigen::VectorXd& v) {
            return expected_score(in.data, post, unpack(v, in.spec), in.spec)(j);
          },
          theta);
      CHECK(rel_err(d.hessian.row(j).transpose(), hj) < 1e-6);
    }
  }
}

TEST_CASE("at its own posteriors the expected score is the log-likelihood gradient") {
  std::mt19937_64 rng(52);
  testing::InstanceOptions o;
  o.n = 25;
  for (int rep = 0; rep < 30; ++rep) {
    const auto in = testing::random_instance(rng, o);
    const auto post = e_step(in.data, in.params, in.spec).post;
    const auto ll = [&](const Eigen::VectorXd& v) {
      return total_loglik(in.data, unpack(v, in.spec), in.spec);
    };
    const Eigen::VectorXd g = testing::fd_gradient5(ll, pack(in.params, in.spec));
    CHECK(rel_err(expected_score(in.data, post, in.params, in.spec), g) < 1e-6);
  }
}

TEST_CASE("one-state gaussian intercept score") {
  std::mt19937_64 rng(53);
  testing::InstanceOptions o;
  o.max_k = 1;
  o.n = 10;
  int checked = 0;
  while (checked < 10) {
    const auto in = testing::random_instance(rng, o);
    if (in.spec.channels[0].family != Family::gaussian) continue;
    ++checked;
    double direct = 0.0;
    for (const auto& s : in.data.subjects)
      for (int t = 0; t < s.t; ++t) {
        std::span<const double> x(s.x[0].row(t).data(), static_cast<std::size_t>(s.x[0].cols()));
        direct += (s.y(t, 0) - channel_eta(0, 0, x, in.params)) / in.params.sigma2(0);
      }
    const auto post = e_step(in.data, in.params, in.spec).post;
    const Eigen::VectorXd sc = expected_score(in.data, post, in.params, in.spec);
    CHECK(sc(pack_layout(in.spec).alpha[0]) == doctest::Approx(direct).epsilon(1e-12));
  }
}
