#include "lmdrop/recursions.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "lmdrop/errors.hpp"
#include "lmdrop/numeric.hpp"
#include "lmdrop/parallel.hpp"

namespace lmdrop {

namespace {

std::span<const double> row_span(const RowMatrix& m, int t) {
  return {m.row(t).data(), static_cast<std::size_t>(m.cols())};
}

ForwardTable run_forward(const Eigen::MatrixXd& c, const ParamSet& params) {
  const auto T = c.rows();
  const auto k = c.cols();
  ForwardTable f;
  f.log_a.resize(T, k);
  f.log_norm.resize(T);
  for (Eigen::Index u = 0; u < k; ++u) f.log_a(0, u) = std::log(params.pi(u)) + c(0, u);
  Eigen::RowVectorXd scaled(k);
  for (Eigen::Index t = 1; t < T; ++t) {
    const double m = f.log_a.row(t - 1).maxCoeff();
    scaled = (f.log_a.row(t - 1).array() - m).exp().matrix();
    const Eigen::RowVectorXd mixed = scaled * params.Pi;
    for (Eigen::Index v = 0; v < k; ++v) f.log_a(t, v) = m + std::log(mixed(v)) + c(t, v);
  }
  for (Eigen::Index t = 0; t < T; ++t) {
    const auto row = f.log_a.row(t);
    double m = row.maxCoeff();
    f.log_norm(t) = m == numeric::kNegInf ? m : m + std::log((row.array() - m).exp().sum());
  }
  return f;
}

BackwardTable run_backward(const Eigen::MatrixXd& c, const ParamSet& params) {
  const auto T = c.rows();
  const auto k = c.cols();
  BackwardTable b;
  b.log_b.resize(T, k);
  b.log_b.row(T - 1).setZero();
  Eigen::VectorXd e(k);
  for (Eigen::Index t = T - 2; t >= 0; --t) {
    e = (c.row(t + 1) + b.log_b.row(t + 1)).transpose();
    const double m = e.maxCoeff();
    const Eigen::VectorXd mixed = params.Pi * (e.array() - m).exp().matrix();
    for (Eigen::Index u = 0; u < k; ++u) b.log_b(t, u) = m + std::log(mixed(u));
  }
  return b;
}

Posteriors run_posteriors(const ForwardTable& f, const BackwardTable& b, const Eigen::MatrixXd& c,
                          const ParamSet& params) {
  const auto T = c.rows();
  const auto k = c.cols();
  const double L = f.log_norm(T - 1);
  Posteriors post;
  post.w = (f.log_a + b.log_b).array() - L;
  post.w = post.w.array().exp();
  post.z.reserve(static_cast<std::size_t>(T - 1));
  for (Eigen::Index t = 1; t < T; ++t) {
    Eigen::MatrixXd z(k, k);
    for (Eigen::Index u = 0; u < k; ++u)
      for (Eigen::Index v = 0; v < k; ++v)
        z(u, v) = params.Pi(u, v) * std::exp(f.log_a(t - 1, u) + c(t, v) + b.log_b(t, v) - L);
    post.z.push_back(std::move(z));
  }
  return post;
}

void check_loglik(double ll, const SubjectRecord& subject) {
  if (!std::isfinite(ll))
    throw NumericalError("subject '" + subject.id + "': non-finite log-likelihood");
}

}  // namespace

Eigen::MatrixXd occasion_log_factors(const SubjectRecord& subject, const ParamSet& params,
                                     const ModelSpec& spec, int s) {
  const int T = subject.t;
  const int k = spec.k;
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(T, k);
  for (int h = 0; h < spec.r(); ++h) {
    const bool gaussian = spec.channels[h].family == Family::gaussian;
    const double s2 = params.sigma2(h);
    const double log_norm = -0.5 * std::log(2.0 * std::numbers::pi * s2);
    for (int t = 0; t < T; ++t) {
      const double base = channel_eta(h, 0, row_span(subject.x[h], t), params) - params.alpha(h, 0);
      const double y = subject.y(t, h);
      for (int u = 0; u < k; ++u) {
        const double eta = base + params.alpha(h, u);
        if (gaussian) {
          const double d = y - eta;
          c(t, u) += log_norm - 0.5 * d * d / s2;
        } else {
          c(t, u) += y * eta - numeric::softplus(eta);
        }
      }
    }
  }
  for (int t = 0; t < T; ++t) {
    const int occasion = t + 1;
    if (occasion >= s) break;
    double zd = 0.0;
    for (int j = 0; j < spec.q; ++j) zd += subject.z(t, j) * params.delta(j);
    for (int u = 0; u < k; ++u) {
      const HazardLogs hl = hazard_logs(params.gamma_of(u) + zd, spec.hazard_link);
      c(t, u) += occasion < T ? hl.log_1mp : hl.log_p;
    }
  }
  if (c.hasNaN() || (c.array() == std::numeric_limits<double>::infinity()).any())
    throw NumericalError("subject '" + subject.id + "': non-finite log-density");
  return c;
}

ForwardTable forward(const SubjectRecord& subject, const ParamSet& params, const ModelSpec& spec,
                     int s) {
  return run_forward(occasion_log_factors(subject, params, spec, s), params);
}

BackwardTable backward(const SubjectRecord& subject, const ParamSet& params,
                       const ModelSpec& spec, int s) {
  return run_backward(occasion_log_factors(subject, params, spec, s), params);
}

double subject_loglik(const SubjectRecord& subject, const ParamSet& params, const ModelSpec& spec,
                      int s) {
  const ForwardTable f = forward(subject, params, spec, s);
  const double ll = f.log_norm(subject.t - 1);
  check_loglik(ll, subject);
  return ll;
}

Posteriors posteriors(const ForwardTable& fwd, const BackwardTable& bwd,
                      const SubjectRecord& subject, const ParamSet& params, const ModelSpec& spec,
                      int s) {
  return run_posteriors(fwd, bwd, occasion_log_factors(subject, params, spec, s), params);
}

SubjectEStep subject_e_step(const SubjectRecord& subject, const ParamSet& params,
                            const ModelSpec& spec, int s) {
  const Eigen::MatrixXd c = occasion_log_factors(subject, params, spec, s);
  const ForwardTable f = run_forward(c, params);
  SubjectEStep out;
  out.loglik = f.log_norm(subject.t - 1);
  check_loglik(out.loglik, subject);
  out.post = run_posteriors(f, run_backward(c, params), c, params);
  return out;
}

double total_loglik(const PanelDataset& data, const ParamSet& params, const ModelSpec& spec,
                    Execution exec) {
  const int n = data.n();
  std::vector<double> ll(static_cast<std::size_t>(n), 0.0);
  for_each_index(n, exec == Execution::parallel,
                 [&](int i) { ll[i] = subject_loglik(data.subjects[i], params, spec, data.s); });
  double total = 0.0;
  for (double v : ll) total += v;
  return total;
}

}  // namespace lmdrop
