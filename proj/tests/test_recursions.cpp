#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "generators.hpp"
#include "lmdrop/errors.hpp"
#include "lmdrop/oracle.hpp"
#include "lmdrop/recursions.hpp"
#include "lmdrop/sim.hpp"
#include "support.hpp"

using namespace lmdrop;

namespace {

std::span<const double> row(const RowMatrix& m, int t) {
  return {m.row(t).data(), static_cast<std::size_t>(m.cols())};
}

double outcome_logdensity(const SubjectRecord& sub, int t, int u, const ParamSet& p,
                          const ModelSpec& spec) {
  double v = 0.0;
  for (int h = 0; h < spec.r(); ++h) v += channel_logdensity(h, sub.y(t, h), u, row(sub.x[h], t), p, spec);
  return v;
}

}  // namespace

TEST_CASE("k = 1 reduces to independent occasions and the duration law") {
  std::mt19937_64 rng(21);
  testing::InstanceOptions o;
  o.max_k = 1;
  for (int rep = 0; rep < 100; ++rep) {
    const auto in = testing::random_instance(rng, o);
    const auto& sub = in.data.subjects[0];
    double direct = 0.0;
    for (int t = 0; t < sub.t; ++t) direct += outcome_logdensity(sub, t, 0, in.params, in.spec);
    std::vector<int> path(sub.t, 0);
    direct += duration_logprob(sub.t, path, sub.z, in.params, in.spec, in.data.s);
    CHECK(subject_loglik(sub, in.params, in.spec, in.data.s) == doctest::Approx(direct).epsilon(1e-12));
    const Posteriors post = subject_e_step(sub, in.params, in.spec, in.data.s).post;
    CHECK((post.w.array() - 1.0).abs().maxCoeff() < 1e-12);
    for (const auto& z : post.z) CHECK(std::abs(z(0, 0) - 1.0) < 1e-12);
  }
}

TEST_CASE("single-occasion subjects are a mixture over the initial state") {
  std::mt19937_64 rng(22);
  testing::InstanceOptions o;
  o.min_k = 2;
  o.max_k = 2;
  for (int rep = 0; rep < 100; ++rep) {
    auto in = testing::random_instance(rng, o);
    auto& sub = in.data.subjects[0];
    sub.t = 1;
    sub.y.conservativeResize(1, Eigen::NoChange);
    for (auto& x : sub.x) x.conservativeResize(1, Eigen::NoChange);
    sub.z.conservativeResize(1, Eigen::NoChange);
    const int s = in.data.s;
    double acc = 0.0;
    for (int u = 0; u < 2; ++u) {
      const double p = hazard(u, row(sub.z, 0), 1, in.params, in.spec, s);
      acc += in.params.pi(u) * std::exp(outcome_logdensity(sub, 0, u, in.params, in.spec)) * p;
    }
    CHECK(subject_loglik(sub, in.params, in.spec, s) == doctest::Approx(std::log(acc)).epsilon(1e-12));
  }
}

TEST_CASE("recursions match path enumeration on random instances") {
  std::mt19937_64 rng(23);
  int hit_dropout = 0, hit_complete = 0;
  for (int rep = 0; rep < 400; ++rep) {
    const auto in = testing::random_instance(rng);
    const auto& sub = in.data.subjects[0];
    (sub.t < in.data.s ? hit_dropout : hit_complete)++;
    const SubjectEStep e = subject_e_step(sub, in.params, in.spec, in.data.s);
    const double brute = brute_loglik(sub, in.params, in.spec, in.data.s);
    CHECK(std::abs(e.loglik - brute) < 1e-10);
    const Posteriors bp = brute_posteriors(sub, in.params, in.spec, in.data.s);
    CHECK((e.post.w - bp.w).cwiseAbs().maxCoeff() < 1e-10);
    for (std::size_t t = 0; t < bp.z.size(); ++t)
      CHECK((e.post.z[t] - bp.z[t]).cwiseAbs().maxCoeff() < 1e-10);
  }
  CHECK(hit_dropout > 50);
  CHECK(hit_complete > 50);
}

TEST_CASE("backward table ends at zero and posteriors are consistent") {
  std::mt19937_64 rng(24);
  for (int rep = 0; rep < 200; ++rep) {
    const auto in = testing::random_instance(rng);
    const auto& sub = in.data.subjects[0];
    const BackwardTable b = backward(sub, in.params, in.spec, in.data.s);
    CHECK(b.log_b.row(sub.t - 1).cwiseAbs().maxCoeff() == 0.0);
    const ForwardTable f = forward(sub, in.params, in.spec, in.data.s);
    const Posteriors post = posteriors(f, b, sub, in.params, in.spec, in.data.s);
    for (int t = 0; t < sub.t; ++t) CHECK(std::abs(post.w.row(t).sum() - 1.0) < 1e-12);
    for (int t = 0; t + 1 < sub.t; ++t) {
      CHECK((post.z[t].rowwise().sum() - post.w.row(t).transpose()).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((post.z[t].colwise().sum() - post.w.row(t + 1)).cwiseAbs().maxCoeff() < 1e-12);
    }
    // Forward at the last occasion and forward-backward at the first agree.
    Eigen::VectorXd first = f.log_a.row(0).transpose() + b.log_b.row(0).transpose();
    const double m = first.maxCoeff();
    CHECK(m + std::log((first.array() - m).exp().sum()) ==
          doctest::Approx(f.log_norm(sub.t - 1)).epsilon(1e-12));
  }
}

TEST_CASE("two states, two occasions, no covariates, by hand") {
  ModelSpec spec;
  spec.k = 2;
  spec.channels = {ChannelSpec::gaussian(0)};
  ParamSet p = zero_params(spec);
  p.pi << 0.3, 0.7;
  p.Pi << 0.8, 0.2, 0.4, 0.6;
  p.alpha << -1.0, 2.0;
  p.sigma2 << 1.5;
  p.gamma << -1.0, 0.5;

  PanelDataset d;
  d.s = 3;
  d.channel_names = {"y"};
  d.channel_families = {Family::gaussian};
  d.channel_covariate_names = {{}};
  const double ys[2][2] = {{0.3, -0.8}, {1.9, 2.4}};
  for (int i = 0; i < 2; ++i) {
    SubjectRecord s;
    s.id = std::to_string(i + 1);
    s.t = 2;
    s.y.resize(2, 1);
    s.y << ys[i][0], ys[i][1];
    s.x = {RowMatrix(2, 0)};
    s.z = RowMatrix(2, 0);
    d.subjects.push_back(s);
  }
  const auto normal = [&](double y, int u) {
    const double s2 = 1.5;
    return std::exp(-0.5 * (y - p.alpha(0, u)) * (y - p.alpha(0, u)) / s2) / std::sqrt(2 * std::numbers::pi * s2);
  };
  const auto hz = [&](int u) { return 1.0 / (1.0 + std::exp(-p.gamma(u))); };
  double total = 0.0;
  for (int i = 0; i < 2; ++i) {
    double lik = 0.0;
    for (int u = 0; u < 2; ++u)
      for (int v = 0; v < 2; ++v)
        // Survive after occasion 1, drop out after occasion 2 (< s = 3).
        lik += p.pi(u) * normal(ys[i][0], u) * (1 - hz(u)) * p.Pi(u, v) * normal(ys[i][1], v) * hz(v);
    total += std::log(lik);
  }
  CHECK(total_loglik(d, p, spec) == doctest::Approx(total).epsilon(1e-13));
}

TEST_CASE("total log-likelihood") {
  const SimConfig cfg = testing::standard_design(20, 5, 2, 8);
  const auto sim = simulate(cfg);
  const ModelSpec& spec = cfg.spec;
  const ParamSet& p = cfg.truth;

  SUBCASE("equals the enumeration total on a 20-subject panel") {
    double brute = 0.0;
    for (const auto& s : sim.data.subjects) brute += brute_loglik(s, p, spec, sim.data.s);
    CHECK(std::abs(total_loglik(sim.data, p, spec) - brute) < 1e-9);
  }
  SUBCASE("serial and parallel agree exactly") {
    CHECK(total_loglik(sim.data, p, spec, Execution::serial) ==
          total_loglik(sim.data, p, spec, Execution::parallel));
  }
  SUBCASE("two identical subjects give twice the value") {
    PanelDataset d = sim.data;
    d.subjects = {sim.data.subjects[3], sim.data.subjects[3]};
    CHECK(total_loglik(d, p, spec) ==
          doctest::Approx(2.0 * subject_loglik(sim.data.subjects[3], p, spec, d.s)).epsilon(1e-14));
  }
  SUBCASE("non-finite factors name the subject") {
    PanelDataset d = sim.data;
    d.subjects[2].y(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_WITH_AS(total_loglik(d, p, spec), doctest::Contains("subject '3'"), NumericalError);
  }
}
