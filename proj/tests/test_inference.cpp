#include <doctest.h>

#include <cmath>
#include <random>

#include "lmdrop/errors.hpp"
#include "lmdrop/inference.hpp"
#include "lmdrop/oracle.hpp"
#include "lmdrop/sim.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace lmdrop;

namespace {

EmConfig quick(int starts = 0) {
  EmConfig c;
  c.n_random_starts = starts;
  c.seed = 7;
  return c;
}

double rel_frobenius(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).norm() / b.norm();
}

}  // namespace

TEST_CASE("BIC arithmetic") {
  CHECK(std::abs(bic(-7265.3, 34, 312) - 14725.9) < 0.1);
  CHECK(std::abs(bic(-8290.7, 28, 312) - 16742.2) < 0.1);
  CHECK(bic(0.0, 0, 312) == 0.0);
  for (int m = 1; m < 60; ++m) CHECK(bic(-100.0, m, 50) > bic(-100.0, m - 1, 50));
  CHECK_THROWS_AS(bic(-1.0, 3, 0), DomainError);
}

TEST_CASE("likelihood ratio for equal drop-out intercepts") {
  ModelSpec spec;
  spec.k = 2;
  spec.channels = {ChannelSpec::gaussian(0)};
  const TestReport r = lr_test_dropout(-7265.3, -7334.5, spec);
  CHECK(std::abs(r.lr - 138.4) < 0.05);
  CHECK(r.df == 1);
  CHECK(r.p_value < 1e-20);
  CHECK(lr_test_dropout(-10.0, -10.0, spec).lr == 0.0);
  CHECK(lr_test_dropout(-10.0, -10.0, spec).p_value == doctest::Approx(1.0));
  CHECK(lr_test_dropout(-10.0, -10.0 + 5e-7, spec).lr < 0.0);
  CHECK_THROWS_AS(lr_test_dropout(-10.0, -9.0, spec), NestingViolationError);
  spec.k = 3;
  CHECK(lr_test_dropout(-10.0, -12.0, spec).df == 2);
  CHECK(lr_test_dropout(-10.0, -12.0, spec).p_value == doctest::Approx(std::exp(-2.0)));
}

TEST_CASE("Wald rows") {
  Eigen::VectorXd est(3), se(3);
  est << 0.0, 2.0, 1.0;
  se << 1.0, 2.0, 0.5;
  const auto rows = wald_table(est, se, {"beta[y1:x]", "delta[z]", "sigma2[y1]"});
  CHECK(*rows[0].t == 0.0);
  CHECK(*rows[1].t == 1.0);
  CHECK_FALSE(rows[2].t.has_value());
  CHECK(*rows[2].se == 0.5);
  const auto bare = wald_table(est, Eigen::VectorXd(), {"a", "b", "c"});
  CHECK_FALSE(bare[0].se.has_value());
  CHECK(format_wald_table(rows).find("t-stat.") != std::string::npos);
}

TEST_CASE("one-state gaussian standard errors are the OLS ones") {
  std::mt19937_64 rng(81);
  std::normal_distribution<double> nd(0.0, 1.0);
  PanelDataset d;
  d.s = 4;
  d.channel_names = {"y"};
  d.channel_families = {Family::gaussian};
  d.channel_covariate_names = {{"x1", "x2"}};
  const int n = 120;
  for (int i = 0; i < n; ++i) {
    SubjectRecord sub;
    sub.id = std::to_string(i);
    sub.t = 1 + i % 4;
    sub.y.resize(sub.t, 1);
    RowMatrix x(sub.t, 2);
    for (int t = 0; t < sub.t; ++t) {
      x(t, 0) = nd(rng);
      x(t, 1) = t;
      sub.y(t, 0) = 1.0 + 0.7 * x(t, 0) - 0.2 * x(t, 1) + 0.8 * nd(rng);
    }
    sub.x.push_back(x);
    sub.z.resize(sub.t, 0);
    d.subjects.push_back(sub);
  }
  const ModelSpec spec = spec_for(d, 1);
  const FitResult fit = multistart_fit(d, spec, quick());
  const InformationResult info = oakes_information(d, fit.params, spec);

  int B = 0;
  for (const auto& s : d.subjects) B += s.t;
  Eigen::MatrixXd X(B, 3);
  Eigen::VectorXd y(B);
  int row = 0;
  for (const auto& s : d.subjects)
    for (int t = 0; t < s.t; ++t, ++row) {
      X.row(row) << 1.0, s.x[0](t, 0), s.x[0](t, 1);
      y(row) = s.y(t, 0);
    }
  const auto o = testing::ols(X, y);
  const double s2 = o.rss / B;
  const Eigen::VectorXd se = (s2 * (X.transpose() * X).inverse()).diagonal().cwiseSqrt();
  const PackLayout L = pack_layout(spec);
  CHECK(std::abs(fit.params.alpha(0, 0) - o.coef(0)) < 1e-6);
  CHECK(std::abs(fit.params.sigma2(0) - s2) < 1e-6);
  CHECK(std::abs(info.se_packed(L.alpha[0]) - se(0)) < 1e-4);
  CHECK(std::abs(info.se_packed(L.beta[0]) - se(1)) < 1e-4);
  CHECK(std::abs(info.se_packed(L.beta[0] + 1) - se(2)) < 1e-4);
  const auto rows = wald_table(info);
  for (const auto& r : rows)
    if (r.name.rfind("beta[", 0) == 0) {
      const int j = r.name.find("x1") != std::string::npos ? 1 : 2;
      CHECK(std::abs(*r.t - o.coef(j) / se(j)) < 1e-3 * std::max(1.0, std::abs(*r.t)));
    }
}

TEST_CASE("Oakes information against the numerical Hessian") {
  const auto cfg = testing::standard_design(80, 5, 2, 82);
  const auto sim = simulate(cfg);
  const FitResult fit = multistart_fit(sim.data, cfg.spec, quick(2));
  const InformationResult info = oakes_information(sim.data, fit.params, cfg.spec);
  const Eigen::MatrixXd H = -brute_observed_hessian(sim.data, fit.params, cfg.spec);
  CHECK(rel_frobenius(info.information, H) < 1e-3);
  CHECK(info.asymmetry < 1e-4);
  CHECK(info.positive_definite);
  CHECK(info.se_reported.size() == static_cast<Eigen::Index>(info.reported_names.size()));

  SUBCASE("serial and parallel columns agree") {
    const auto s = oakes_information(sim.data, fit.params, cfg.spec, 1e-5, Execution::serial);
    CHECK(s.information == info.information);
  }
  SUBCASE("relabelling permutes the matrix") {
    const int perm[] = {1, 0};
    const ParamSet q = permute_states(fit.params, perm);
    const auto ip = oakes_information(sim.data, q, cfg.spec);
    const Eigen::VectorXd a = info.se_reported, b = ip.se_reported;
    // The averaged intercepts and the slopes do not depend on the labelling.
    const auto names = info.reported_names;
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i].rfind("beta[", 0) == 0 || names[i].rfind("intercept[", 0) == 0 ||
          names[i].rfind("delta[", 0) == 0 || names[i].rfind("sigma2[", 0) == 0)
        CHECK(std::abs(a(i) - b(i)) < 1e-4 * a(i));
  }
}

TEST_CASE("an indefinite matrix carries its diagnostics") {
  ModelSpec spec;
  spec.k = 1;
  spec.channels = {ChannelSpec::gaussian(0)};
  const ParamSet p = zero_params(spec);
  const int m = num_params(spec);
  Eigen::MatrixXd I = Eigen::MatrixXd::Identity(m, m);
  I(0, 0) = -1.0;
  const InformationResult r = information_from_matrix(I, p, spec, "oakes");
  CHECK_FALSE(r.positive_definite);
  CHECK(r.se_packed.size() == 0);
  CHECK(std::isinf(r.condition_number));
}

TEST_CASE("choosing k") {
  const auto cfg = testing::standard_design(150, 6, 2, 83);
  const auto sim = simulate(cfg);
  const KSelection one = select_k(sim.data, cfg.spec, {2}, quick());
  CHECK(one.chosen_k == 2);
  CHECK(one.rows.size() == 1);
  CHECK(one.rows[0].bic == doctest::Approx(bic(one.rows[0].loglik, num_params(cfg.spec), 150)));
  const KSelection sel = select_k(sim.data, cfg.spec, {1, 2}, quick());
  CHECK(sel.chosen_k == 2);
  CHECK(format_k_table(sel).find("selected k = 2") != std::string::npos);
  CHECK_THROWS_AS(select_k(sim.data, cfg.spec, {}, quick()), DomainError);
}
