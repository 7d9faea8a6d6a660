#include "lmdrop/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "lmdrop/errors.hpp"
#include "lmdrop/numeric.hpp"

namespace lmdrop {

namespace {

// Probabilities are floored before taking log-ratios so that an absorbing
// zero in Pi packs to a large negative but finite coordinate.
constexpr double kProbFloor = 1e-300;

std::string state_label(int u) { return std::to_string(u + 1); }

std::string covariate_label(const std::vector<std::string>& names, int j) {
  return j < static_cast<int>(names.size()) ? names[j] : "x" + std::to_string(j + 1);
}

}  // namespace

int ModelSpec::n_gaussian() const {
  return static_cast<int>(std::count_if(channels.begin(), channels.end(), [](const ChannelSpec& c) {
    return c.family == Family::gaussian;
  }));
}

void ModelSpec::validate() const {
  if (k < 1) throw SchemaError("number of latent states must be >= 1");
  if (channels.empty()) throw SchemaError("at least one outcome channel is required");
  if (q < 0) throw SchemaError("negative hazard covariate count");
  for (const auto& c : channels) {
    if (c.p < 0) throw SchemaError("channel " + c.name + ": negative covariate count");
    const bool ok = (c.family == Family::gaussian && c.link == Link::identity) ||
                    (c.family == Family::bernoulli && c.link == Link::logit);
    if (!ok)
      throw SchemaError("channel " + c.name + ": unsupported family/link pair " +
                        std::string(to_string(c.family)) + "/" + std::string(to_string(c.link)));
  }
  if (hazard_link != Link::logit && hazard_link != Link::cloglog)
    throw SchemaError("hazard link must be logit or cloglog");
}

ModelSpec spec_for(const PanelDataset& data, int k, Link hazard_link, bool share_gamma) {
  ModelSpec spec;
  spec.k = k;
  for (int h = 0; h < data.r(); ++h) {
    ChannelSpec c;
    c.name = data.channel_names[h];
    c.family = data.channel_families[h];
    c.link = c.family == Family::gaussian ? Link::identity : Link::logit;
    c.p = static_cast<int>(data.channel_covariate_names[h].size());
    c.covariate_names = data.channel_covariate_names[h];
    spec.channels.push_back(std::move(c));
  }
  spec.q = data.q();
  spec.hazard_covariate_names = data.hazard_covariate_names;
  spec.hazard_link = hazard_link;
  spec.share_gamma = share_gamma;
  spec.validate();
  return spec;
}

void check_compatible(const PanelDataset& data, const ModelSpec& spec) {
  if (data.r() != spec.r())
    throw SchemaError("dataset has " + std::to_string(data.r()) + " channels, model expects " +
                      std::to_string(spec.r()));
  for (int h = 0; h < spec.r(); ++h) {
    if (data.channel_families[h] != spec.channels[h].family)
      throw SchemaError("channel " + spec.channels[h].name + ": family mismatch");
    if (static_cast<int>(data.channel_covariate_names[h].size()) != spec.channels[h].p)
      throw SchemaError("channel " + spec.channels[h].name + ": covariate count mismatch");
  }
  if (data.q() != spec.q) throw SchemaError("hazard covariate count mismatch");
}

ParamSet zero_params(const ModelSpec& spec) {
  ParamSet p;
  p.pi = Eigen::VectorXd::Constant(spec.k, 1.0 / spec.k);
  p.Pi = Eigen::MatrixXd::Identity(spec.k, spec.k);
  p.alpha = Eigen::MatrixXd::Zero(spec.r(), spec.k);
  for (const auto& c : spec.channels) p.beta.push_back(Eigen::VectorXd::Zero(c.p));
  p.sigma2 = Eigen::VectorXd::Ones(spec.r());
  p.gamma = Eigen::VectorXd::Zero(spec.n_gamma());
  p.delta = Eigen::VectorXd::Zero(spec.q);
  return p;
}

void validate_params(const ParamSet& p, const ModelSpec& spec) {
  const int k = spec.k;
  if (p.pi.size() != k || p.Pi.rows() != k || p.Pi.cols() != k || p.alpha.rows() != spec.r() ||
      p.alpha.cols() != k || static_cast<int>(p.beta.size()) != spec.r() ||
      p.sigma2.size() != spec.r() || p.gamma.size() != spec.n_gamma() || p.delta.size() != spec.q)
    throw ShapeError("parameter blocks do not match the model dimensions");
  for (int h = 0; h < spec.r(); ++h)
    if (p.beta[h].size() != spec.channels[h].p)
      throw ShapeError("slope vector for channel " + spec.channels[h].name + " has wrong length");
  const bool finite = p.pi.allFinite() && p.Pi.allFinite() && p.alpha.allFinite() &&
                      p.sigma2.allFinite() && p.gamma.allFinite() && p.delta.allFinite() &&
                      std::all_of(p.beta.begin(), p.beta.end(),
                                  [](const Eigen::VectorXd& b) { return b.allFinite(); });
  if (!finite) throw DomainError("non-finite parameter value");
  if ((p.pi.array() < 0.0).any() || std::abs(p.pi.sum() - 1.0) > 1e-10)
    throw DomainError("initial probabilities must be nonnegative and sum to one");
  for (int u = 0; u < k; ++u)
    if ((p.Pi.row(u).array() < 0.0).any() || std::abs(p.Pi.row(u).sum() - 1.0) > 1e-10)
      throw DomainError("transition row " + state_label(u) + " is not a probability vector");
  for (int h = 0; h < spec.r(); ++h)
    if (spec.channels[h].family == Family::gaussian && !(p.sigma2(h) > 0.0))
      throw DomainError("variance of channel " + spec.channels[h].name + " must be positive");
}

HazardLogs hazard_logs(double eta, Link link) {
  if (link == Link::cloglog) {
    const double mu = std::exp(eta);
    return {std::log(-std::expm1(-mu)), -mu};
  }
  return {-numeric::softplus(-eta), -numeric::softplus(eta)};
}

double hazard_eta(int u, std::span<const double> z, const ParamSet& params) {
  double eta = params.gamma_of(u);
  for (std::size_t j = 0; j < z.size(); ++j) eta += z[j] * params.delta(static_cast<Eigen::Index>(j));
  return eta;
}

double hazard(int u, std::span<const double> z, int t, const ParamSet& params,
              const ModelSpec& spec, int s) {
  if (t >= s) return 1.0;
  return std::exp(hazard_logs(hazard_eta(u, z, params), spec.hazard_link).log_p);
}

double duration_logprob(int t_obs, std::span<const int> path, const RowMatrix& z,
                        const ParamSet& params, const ModelSpec& spec, int s) {
  double lp = 0.0;
  for (int t = 1; t <= t_obs; ++t) {
    if (t == s) break;  // p_is = 1 contributes log 1
    const std::span<const double> zt(z.row(t - 1).data(), static_cast<std::size_t>(z.cols()));
    const HazardLogs hl = hazard_logs(hazard_eta(path[t - 1], zt, params), spec.hazard_link);
    lp += (t < t_obs) ? hl.log_1mp : hl.log_p;
  }
  return lp;
}

double channel_eta(int h, int u, std::span<const double> x, const ParamSet& params) {
  double eta = params.alpha(h, u);
  const auto& b = params.beta[h];
  for (std::size_t j = 0; j < x.size(); ++j) eta += x[j] * b(static_cast<Eigen::Index>(j));
  return eta;
}

double channel_logdensity(int h, double y, int u, std::span<const double> x,
                          const ParamSet& params, const ModelSpec& spec) {
  const double eta = channel_eta(h, u, x, params);
  if (spec.channels[h].family == Family::gaussian) {
    const double s2 = params.sigma2(h);
    const double d = y - eta;
    return -0.5 * std::log(2.0 * std::numbers::pi * s2) - 0.5 * d * d / s2;
  }
  return y * eta - numeric::softplus(eta);
}

int num_params(const ModelSpec& spec) {
  const int k = spec.k;
  int n = (k - 1) + k * (k - 1);
  for (const auto& c : spec.channels) n += k + c.p;
  n += spec.n_gaussian();
  n += spec.n_gamma() + spec.q;
  return n;
}

PackLayout pack_layout(const ModelSpec& spec) {
  PackLayout L;
  const int k = spec.k;
  int pos = 0;
  for (int h = 0; h < spec.r(); ++h) {
    const auto& c = spec.channels[h];
    L.alpha.push_back(pos);
    for (int u = 0; u < k; ++u) L.names.push_back("alpha[" + c.name + "][" + state_label(u) + "]");
    pos += k;
    L.beta.push_back(pos);
    for (int j = 0; j < c.p; ++j)
      L.names.push_back("beta[" + c.name + "][" + covariate_label(c.covariate_names, j) + "]");
    pos += c.p;
  }
  for (int h = 0; h < spec.r(); ++h) {
    if (spec.channels[h].family == Family::gaussian) {
      L.sigma.push_back(pos++);
      L.names.push_back("log_sigma2[" + spec.channels[h].name + "]");
    } else {
      L.sigma.push_back(-1);
    }
  }
  L.gamma = pos;
  for (int u = 0; u < spec.n_gamma(); ++u)
    L.names.push_back(spec.share_gamma ? "gamma" : "gamma[" + state_label(u) + "]");
  pos += spec.n_gamma();
  L.delta = pos;
  for (int j = 0; j < spec.q; ++j)
    L.names.push_back("delta[" + covariate_label(spec.hazard_covariate_names, j) + "]");
  pos += spec.q;
  L.pi = pos;
  for (int u = 1; u < k; ++u) L.names.push_back("logit_pi[" + state_label(u) + "]");
  pos += k - 1;
  L.Pi = pos;
  for (int u = 0; u < k; ++u)
    for (int v = 1; v < k; ++v)
      L.names.push_back("logit_Pi[" + state_label(u) + "," + state_label(v) + "]");
  pos += k * (k - 1);
  L.size = pos;
  return L;
}

Eigen::VectorXd pack(const ParamSet& p, const ModelSpec& spec) {
  const PackLayout L = pack_layout(spec);
  const int k = spec.k;
  Eigen::VectorXd v(L.size);
  for (int h = 0; h < spec.r(); ++h) {
    v.segment(L.alpha[h], k) = p.alpha.row(h).transpose();
    v.segment(L.beta[h], spec.channels[h].p) = p.beta[h];
    if (L.sigma[h] >= 0) v(L.sigma[h]) = std::log(p.sigma2(h));
  }
  v.segment(L.gamma, spec.n_gamma()) = p.gamma;
  v.segment(L.delta, spec.q) = p.delta;
  const auto lr = [](double a, double b) {
    return std::log(std::max(a, kProbFloor)) - std::log(std::max(b, kProbFloor));
  };
  for (int u = 1; u < k; ++u) v(L.pi + u - 1) = lr(p.pi(u), p.pi(0));
  for (int u = 0; u < k; ++u)
    for (int w = 1; w < k; ++w) v(L.Pi + u * (k - 1) + w - 1) = lr(p.Pi(u, w), p.Pi(u, 0));
  return v;
}

ParamSet unpack(const Eigen::VectorXd& v, const ModelSpec& spec) {
  const PackLayout L = pack_layout(spec);
  if (v.size() != L.size)
    throw ShapeError("packed vector has length " + std::to_string(v.size()) + ", expected " +
                     std::to_string(L.size));
  const int k = spec.k;
  ParamSet p = zero_params(spec);
  for (int h = 0; h < spec.r(); ++h) {
    p.alpha.row(h) = v.segment(L.alpha[h], k).transpose();
    p.beta[h] = v.segment(L.beta[h], spec.channels[h].p);
    if (L.sigma[h] >= 0) p.sigma2(h) = std::exp(v(L.sigma[h]));
  }
  p.gamma = v.segment(L.gamma, spec.n_gamma());
  p.delta = v.segment(L.delta, spec.q);

  const auto softmax = [k](auto&& logits_of) {
    Eigen::VectorXd e(k);
    e(0) = 0.0;
    for (int u = 1; u < k; ++u) e(u) = logits_of(u);
    const double m = e.maxCoeff();
    e = (e.array() - m).exp();
    return Eigen::VectorXd(e / e.sum());
  };
  p.pi = softmax([&](int u) { return v(L.pi + u - 1); });
  for (int u = 0; u < k; ++u)
    p.Pi.row(u) = softmax([&](int w) { return v(L.Pi + u * (k - 1) + w - 1); }).transpose();
  return p;
}

ParamSet permute_states(const ParamSet& p, std::span<const int> perm) {
  const int k = static_cast<int>(p.pi.size());
  if (static_cast<int>(perm.size()) != k) throw ShapeError("permutation length differs from k");
  ParamSet out = p;
  for (int u = 0; u < k; ++u) {
    out.pi(u) = p.pi(perm[u]);
    out.alpha.col(u) = p.alpha.col(perm[u]);
    if (p.gamma.size() == k) out.gamma(u) = p.gamma(perm[u]);
    for (int w = 0; w < k; ++w) out.Pi(u, w) = p.Pi(perm[u], perm[w]);
  }
  return out;
}

std::vector<int> state_order(const ParamSet& p) {
  std::vector<int> perm(static_cast<std::size_t>(p.pi.size()));
  std::iota(perm.begin(), perm.end(), 0);
  std::stable_sort(perm.begin(), perm.end(),
                   [&](int a, int b) { return p.alpha(0, a) < p.alpha(0, b); });
  return perm;
}

ParamSet order_states(const ParamSet& p) { return permute_states(p, state_order(p)); }

ReportedParams report_params(const ParamSet& p, const ModelSpec& spec) {
  ReportedParams rp;
  rp.alpha_mean = p.alpha.rowwise().mean();
  rp.alpha_dev = p.alpha.colwise() - rp.alpha_mean;
  rp.beta = p.beta;
  rp.sigma2 = p.sigma2;
  rp.gamma_mean = p.gamma.mean();
  rp.gamma_dev = spec.share_gamma ? Eigen::VectorXd::Zero(spec.k)
                                  : Eigen::VectorXd(p.gamma.array() - rp.gamma_mean);
  rp.delta = p.delta;
  rp.pi = p.pi;
  rp.Pi = p.Pi;
  return rp;
}

std::vector<std::string> reporting_names(const ModelSpec& spec) {
  std::vector<std::string> names;
  for (const auto& c : spec.channels) {
    names.push_back("intercept[" + c.name + "]");
    for (int u = 0; u < spec.k; ++u)
      names.push_back("alpha_dev[" + c.name + "][" + state_label(u) + "]");
    for (int j = 0; j < c.p; ++j)
      names.push_back("beta[" + c.name + "][" + covariate_label(c.covariate_names, j) + "]");
  }
  for (const auto& c : spec.channels)
    if (c.family == Family::gaussian) names.push_back("sigma2[" + c.name + "]");
  names.push_back("intercept[dropout]");
  if (!spec.share_gamma)
    for (int u = 0; u < spec.k; ++u) names.push_back("gamma_dev[" + state_label(u) + "]");
  for (int j = 0; j < spec.q; ++j)
    names.push_back("delta[" + covariate_label(spec.hazard_covariate_names, j) + "]");
  for (int u = 0; u < spec.k; ++u) names.push_back("pi[" + state_label(u) + "]");
  for (int u = 0; u < spec.k; ++u)
    for (int w = 0; w < spec.k; ++w)
      names.push_back("Pi[" + state_label(u) + "," + state_label(w) + "]");
  return names;
}

Eigen::VectorXd reporting_vector(const ParamSet& p, const ModelSpec& spec) {
  const ReportedParams rp = report_params(p, spec);
  std::vector<double> v;
  for (int h = 0; h < spec.r(); ++h) {
    v.push_back(rp.alpha_mean(h));
    for (int u = 0; u < spec.k; ++u) v.push_back(rp.alpha_dev(h, u));
    for (int j = 0; j < spec.channels[h].p; ++j) v.push_back(rp.beta[h](j));
  }
  for (int h = 0; h < spec.r(); ++h)
    if (spec.channels[h].family == Family::gaussian) v.push_back(rp.sigma2(h));
  v.push_back(rp.gamma_mean);
  if (!spec.share_gamma)
    for (int u = 0; u < spec.k; ++u) v.push_back(rp.gamma_dev(u));
  for (int j = 0; j < spec.q; ++j) v.push_back(rp.delta(j));
  for (int u = 0; u < spec.k; ++u) v.push_back(rp.pi(u));
  for (int u = 0; u < spec.k; ++u)
    for (int w = 0; w < spec.k; ++w) v.push_back(rp.Pi(u, w));
  return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace lmdrop
