#include "lmdrop/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "lmdrop/errors.hpp"
#include "lmdrop/numeric.hpp"
#include "lmdrop/parallel.hpp"

namespace lmdrop {

namespace {

std::uint64_t path_count(int k, int t) {
  std::uint64_t n = 1;
  for (int j = 0; j < t; ++j) {
    n *= static_cast<std::uint64_t>(k);
    if (n > kMaxOraclePaths) break;
  }
  return n;
}

void check_guard(const SubjectRecord& subject, int k) {
  if (path_count(k, subject.t) > kMaxOraclePaths)
    throw ExplosionError("subject '" + subject.id + "': " + std::to_string(k) + "^" +
                         std::to_string(subject.t) + " latent paths exceed the enumeration limit of " +
                         std::to_string(kMaxOraclePaths) + "; audit a smaller k or shorter panel");
}

std::span<const double> row_of(const RowMatrix& m, int t) {
  return {m.row(t).data(), static_cast<std::size_t>(m.cols())};
}

// Calls visit(path, log_weight) for every latent path, states in odometer order.
template <class Visit>
void enumerate(const SubjectRecord& subject, const ParamSet& params, const ModelSpec& spec, int s,
               Visit&& visit) {
  check_guard(subject, spec.k);
  const int T = subject.t;
  const int k = spec.k;
  std::vector<int> path(static_cast<std::size_t>(T), 0);
  while (true) {
    double lw = std::log(params.pi(path[0]));
    for (int t = 1; t < T; ++t) lw += std::log(params.Pi(path[t - 1], path[t]));
    for (int t = 0; t < T; ++t)
      for (int h = 0; h < spec.r(); ++h)
        lw += channel_logdensity(h, subject.y(t, h), path[t], row_of(subject.x[h], t), params, spec);
    lw += duration_logprob(T, path, subject.z, params, spec, s);
    visit(path, lw);
    int j = T - 1;
    while (j >= 0 && ++path[j] == k) path[j--] = 0;
    if (j < 0) break;
  }
}

}  // namespace

double brute_loglik(const SubjectRecord& subject, const ParamSet& params, const ModelSpec& spec,
                    int s) {
  double acc = numeric::kNegInf;
  enumerate(subject, params, spec, s,
            [&](const std::vector<int>&, double lw) { acc = numeric::log_add_exp(acc, lw); });
  return acc;
}

Posteriors brute_posteriors(const SubjectRecord& subject, const ParamSet& params,
                            const ModelSpec& spec, int s) {
  const double L = brute_loglik(subject, params, spec, s);
  const int T = subject.t;
  const int k = spec.k;
  Posteriors post;
  post.w = Eigen::MatrixXd::Zero(T, k);
  post.z.assign(static_cast<std::size_t>(std::max(T - 1, 0)), Eigen::MatrixXd::Zero(k, k));
  enumerate(subject, params, spec, s, [&](const std::vector<int>& path, double lw) {
    const double p = std::exp(lw - L);
    for (int t = 0; t < T; ++t) post.w(t, path[t]) += p;
    for (int t = 1; t < T; ++t) post.z[t - 1](path[t - 1], path[t]) += p;
  });
  return post;
}

Eigen::MatrixXd brute_observed_hessian(const PanelDataset& data, const ParamSet& params,
                                       const ModelSpec& spec, double step) {
  const Eigen::VectorXd theta = pack(params, spec);
  const int m = static_cast<int>(theta.size());
  Eigen::VectorXd h(m);
  for (int j = 0; j < m; ++j) h(j) = step * (std::abs(theta(j)) + 1.0);
  const auto f = [&](const Eigen::VectorXd& v) {
    return total_loglik(data, unpack(v, spec), spec, Execution::serial);
  };
  const double f0 = f(theta);
  Eigen::MatrixXd H(m, m);
  // Upper triangle including the diagonal, one job per entry.
  std::vector<std::pair<int, int>> cells;
  for (int a = 0; a < m; ++a)
    for (int b = a; b < m; ++b) cells.emplace_back(a, b);
  for_each_index(static_cast<int>(cells.size()), true, [&](int c) {
    const auto [a, b] = cells[c];
    Eigen::VectorXd v = theta;
    if (a == b) {
      v(a) = theta(a) + h(a);
      const double fp = f(v);
      v(a) = theta(a) - h(a);
      const double fm = f(v);
      H(a, a) = (fp - 2.0 * f0 + fm) / (h(a) * h(a));
      return;
    }
    const auto at = [&](double sa, double sb) {
      v = theta;
      v(a) += sa * h(a);
      v(b) += sb * h(b);
      return f(v);
    };
    H(a, b) = H(b, a) = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * h(a) * h(b));
  });
  return H;
}

AuditReport audit(const PanelDataset& data, const ParamSet& params, const ModelSpec& spec) {
  for (const auto& sub : data.subjects) check_guard(sub, spec.k);
  AuditReport rep;
  rep.n_subjects = data.n();
  double worst = -1.0;
  for (const auto& sub : data.subjects) {
    const SubjectEStep rec = subject_e_step(sub, params, spec, data.s);
    const double lb = brute_loglik(sub, params, spec, data.s);
    const Posteriors pb = brute_posteriors(sub, params, spec, data.s);
    const double dl = std::abs(rec.loglik - lb);
    double dp = (rec.post.w - pb.w).cwiseAbs().maxCoeff();
    for (std::size_t t = 0; t < pb.z.size(); ++t)
      dp = std::max(dp, (rec.post.z[t] - pb.z[t]).cwiseAbs().maxCoeff());
    rep.loglik_recursion += rec.loglik;
    rep.loglik_oracle += lb;
    rep.max_loglik_diff = std::max(rep.max_loglik_diff, dl);
    rep.max_posterior_diff = std::max(rep.max_posterior_diff, dp);
    if (dl + dp > worst) {
      worst = dl + dp;
      rep.worst_subject = sub.id;
    }
  }
  return rep;
}

}  // namespace lmdrop
