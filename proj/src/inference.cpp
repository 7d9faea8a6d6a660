#include "lmdrop/inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include <boost/math/distributions/chi_squared.hpp>

#include "lmdrop/complete_data.hpp"
#include "lmdrop/parallel.hpp"

namespace lmdrop {

namespace {

constexpr double kNestingSlack = 1e-6;

bool starts_with(const std::string& s, const char* prefix) { return s.rfind(prefix, 0) == 0; }

bool has_t_statistic(const std::string& name) {
  return starts_with(name, "beta[") || starts_with(name, "delta[") ||
         starts_with(name, "alpha_dev[") || starts_with(name, "gamma_dev[");
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace

Eigen::MatrixXd reporting_jacobian(const ParamSet& params, const ModelSpec& spec) {
  const PackLayout L = pack_layout(spec);
  const int k = spec.k;
  const auto n_rep = static_cast<Eigen::Index>(reporting_names(spec).size());
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(n_rep, L.size);
  Eigen::Index row = 0;
  for (int h = 0; h < spec.r(); ++h) {
    for (int u = 0; u < k; ++u) R(row, L.alpha[h] + u) = 1.0 / k;
    ++row;
    for (int u = 0; u < k; ++u, ++row)
      for (int w = 0; w < k; ++w) R(row, L.alpha[h] + w) = (u == w ? 1.0 : 0.0) - 1.0 / k;
    for (int j = 0; j < spec.channels[h].p; ++j, ++row) R(row, L.beta[h] + j) = 1.0;
  }
  for (int h = 0; h < spec.r(); ++h)
    if (L.sigma[h] >= 0) R(row++, L.sigma[h]) = params.sigma2(h);
  const int g = spec.n_gamma();
  for (int u = 0; u < g; ++u) R(row, L.gamma + u) = 1.0 / g;
  ++row;
  if (!spec.share_gamma)
    for (int u = 0; u < k; ++u, ++row)
      for (int w = 0; w < k; ++w) R(row, L.gamma + w) = (u == w ? 1.0 : 0.0) - 1.0 / k;
  for (int j = 0; j < spec.q; ++j, ++row) R(row, L.delta + j) = 1.0;
  // Softmax anchored at category 0: dp_u / dtheta_v = p_u (1{u=v} - p_v), v >= 1.
  const auto softmax_block = [&](const Eigen::VectorXd& p, int offset) {
    for (int u = 0; u < k; ++u, ++row)
      for (int v = 1; v < k; ++v) R(row, offset + v - 1) = p(u) * ((u == v ? 1.0 : 0.0) - p(v));
  };
  softmax_block(params.pi, L.pi);
  for (int u = 0; u < k; ++u) softmax_block(params.Pi.row(u).transpose(), L.Pi + u * (k - 1));
  return R;
}

InformationResult information_from_matrix(const Eigen::MatrixXd& information,
                                          const ParamSet& params, const ModelSpec& spec,
                                          std::string method) {
  InformationResult res;
  const double scale = information.cwiseAbs().maxCoeff();
  res.asymmetry = scale > 0.0 ? (information - information.transpose()).cwiseAbs().maxCoeff() / scale
                              : 0.0;
  res.information = 0.5 * (information + information.transpose());
  res.method = std::move(method);
  res.packed_names = pack_layout(spec).names;
  res.reported_names = reporting_names(spec);
  res.estimates_reported = reporting_vector(params, spec);

  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(res.information);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().cwiseAbs().maxCoeff();
  res.condition_number = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  const Eigen::LLT<Eigen::MatrixXd> llt(res.information);
  res.positive_definite = lo > 0.0 && llt.info() == Eigen::Success;
  if (!res.positive_definite) return res;

  const Eigen::MatrixXd cov =
      llt.solve(Eigen::MatrixXd::Identity(res.information.rows(), res.information.cols()));
  res.se_packed = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd R = reporting_jacobian(params, spec);
  res.se_reported = (R * cov * R.transpose()).diagonal().cwiseMax(0.0).cwiseSqrt();
  return res;
}

InformationResult oakes_information(const PanelDataset& data, const ParamSet& params,
                                    const ModelSpec& spec, double fd_step, Execution exec) {
  if (!(fd_step > 0.0)) throw DomainError("fd_step must be positive");
  const bool par = exec == Execution::parallel;
  const EStepResult e = e_step(data, params, spec, exec);
  const QDerivatives q = q_derivatives(data, e.post, params, spec, true);
  const Eigen::VectorXd theta = pack(params, spec);
  const auto m = theta.size();

  // Column j: d score(params; posteriors(theta')) / d theta'_j at theta' = theta.
  Eigen::MatrixXd jac(m, m);
  for_each_index(static_cast<int>(m), par, [&](int j) {
    const double h = fd_step * (std::abs(theta(j)) + 1.0);
    Eigen::VectorXd tp = theta, tm = theta;
    tp(j) += h;
    tm(j) -= h;
    const EStepResult ep = e_step(data, unpack(tp, spec), spec, Execution::serial);
    const EStepResult em = e_step(data, unpack(tm, spec), spec, Execution::serial);
    jac.col(j) = (expected_score(data, ep.post, params, spec) -
                  expected_score(data, em.post, params, spec)) /
                 (2.0 * h);
  });

  const Eigen::MatrixXd j1 = -q.hessian;
  const Eigen::MatrixXd j2 = -jac;
  InformationResult res = information_from_matrix(j1 + j2, params, spec, "oakes");
  res.j1 = j1;
  res.j2 = j2;
  if (!res.positive_definite)
    throw SingularInformationError(
        "observed information is not positive definite (condition number " +
            fmt("%.3g", res.condition_number) + ")",
        std::move(res));
  return res;
}

double bic(double loglik, int n_params, int n) {
  if (n < 1) throw DomainError("bic requires n >= 1");
  return -2.0 * loglik + n_params * std::log(static_cast<double>(n));
}

double bic(double loglik, const ModelSpec& spec, int n) { return bic(loglik, num_params(spec), n); }

std::vector<WaldRow> wald_table(const Eigen::VectorXd& estimates, const Eigen::VectorXd& se,
                                const std::vector<std::string>& names) {
  std::vector<WaldRow> rows;
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    WaldRow r{names[i], estimates(ii), std::nullopt, std::nullopt};
    if (se.size() == estimates.size()) {
      r.se = se(ii);
      if (has_t_statistic(names[i]) && se(ii) > 0.0) r.t = estimates(ii) / se(ii);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<WaldRow> wald_table(const InformationResult& info) {
  return wald_table(info.estimates_reported, info.se_reported, info.reported_names);
}

TestReport lr_test_dropout(double loglik_free, double loglik_h0, const ModelSpec& spec) {
  if (loglik_free < loglik_h0 - kNestingSlack)
    throw NestingViolationError("free fit log-likelihood " + fmt("%.6f", loglik_free) +
                                " is below the constrained fit's " + fmt("%.6f", loglik_h0) +
                                "; the free optimization did not reach the constrained optimum");
  TestReport rep;
  rep.loglik_free = loglik_free;
  rep.loglik_h0 = loglik_h0;
  rep.lr = 2.0 * (loglik_free - loglik_h0);
  rep.df = spec.k - 1;
  if (rep.df > 0) {
    const boost::math::chi_squared dist(rep.df);
    rep.p_value = boost::math::cdf(boost::math::complement(dist, std::max(rep.lr, 0.0)));
  }
  rep.caveat =
      "p-value from chi-squared(k-1); boundary and label-switching effects are not accounted for";
  return rep;
}

TestReport lr_test_dropout(const FitResult& fit_free, const FitResult& fit_h0,
                           const ModelSpec& spec) {
  return lr_test_dropout(fit_free.loglik, fit_h0.loglik, spec);
}

KSelection select_k(const PanelDataset& data, const ModelSpec& base, const std::vector<int>& ks,
                    const EmConfig& config) {
  if (ks.empty()) throw DomainError("k range is empty");
  KSelection sel;
  double best = std::numeric_limits<double>::infinity();
  for (int k : ks) {
    ModelSpec spec = base;
    spec.k = k;
    KSelectionRow row;
    row.k = k;
    row.n_params = num_params(spec);
    FitResult fit;
    try {
      fit = multistart_fit(data, spec, config);
      row.ok = true;
      row.loglik = fit.loglik;
      row.bic = bic(fit.loglik, spec, data.n());
    } catch (const std::exception& ex) {
      row.error = ex.what();
    }
    if (row.ok && (row.bic < best || (row.bic == best && k < sel.chosen_k))) {
      best = row.bic;
      sel.chosen_k = k;
    }
    sel.rows.push_back(std::move(row));
    sel.fits.push_back(std::move(fit));
  }
  if (sel.chosen_k == 0) throw FitError("no value of k could be fitted");
  return sel;
}

std::string format_k_table(const KSelection& sel) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%4s  %12s  %6s  %12s\n", "k", "log-lik.", "# par", "BIC");
  os << line;
  for (const auto& r : sel.rows) {
    if (r.ok)
      std::snprintf(line, sizeof line, "%4d  %12.1f  %6d  %12.1f%s\n", r.k, r.loglik, r.n_params,
                    r.bic, r.k == sel.chosen_k ? "  *" : "");
    else
      std::snprintf(line, sizeof line, "%4d  %12s  %6d  %12s  (%s)\n", r.k, "failed", r.n_params,
                    "-", r.error.c_str());
    os << line;
  }
  os << "selected k = " << sel.chosen_k << '\n';
  return os.str();
}

std::string format_wald_table(const std::vector<WaldRow>& rows) {
  std::size_t width = 9;
  for (const auto& r : rows) width = std::max(width, r.name.size());
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-*s  %12s  %10s  %9s\n", static_cast<int>(width), "parameter",
                "estimate", "s.e.", "t-stat.");
  os << line;
  for (const auto& r : rows) {
    const std::string se = r.se ? fmt("%10.4f", *r.se) : std::string("         -");
    const std::string t = r.t ? fmt("%9.3f", *r.t) : std::string("        -");
    std::snprintf(line, sizeof line, "%-*s  %12.4f  %s  %s\n", static_cast<int>(width),
                  r.name.c_str(), r.estimate, se.c_str(), t.c_str());
    os << line;
  }
  return os.str();
}

std::string format_test_report(const TestReport& rep) {
  std::ostringstream os;
  os << "log-lik. (free)      " << fmt("%.4f", rep.loglik_free) << '\n'
     << "log-lik. (H0)        " << fmt("%.4f", rep.loglik_h0) << '\n'
     << "LR statistic         " << fmt("%.4f", rep.lr) << '\n'
     << "df                   " << rep.df << '\n'
     << "p-value              " << fmt("%.4g", rep.p_value) << '\n'
     << "note: " << rep.caveat << '\n';
  return os.str();
}

}  // namespace lmdrop
