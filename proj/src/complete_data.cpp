#include "lmdrop/complete_data.hpp"

#include <cmath>

#include "lmdrop/glm.hpp"

namespace lmdrop {

namespace {

// Multinomial block with counts c over a softmax anchored at category 0:
// value sum c log p, score c_v - N p_v and Hessian -N (diag p - p p') over v >= 1.
void add_multinomial(const Eigen::VectorXd& counts, const Eigen::VectorXd& prob, int offset,
                     QDerivatives& q, bool with_hessian) {
  const auto k = counts.size();
  const double N = counts.sum();
  for (Eigen::Index v = 0; v < k; ++v)
    if (counts(v) > 0.0) q.value += counts(v) * std::log(prob(v));
  for (Eigen::Index v = 1; v < k; ++v) {
    q.score(offset + v - 1) += counts(v) - N * prob(v);
    if (!with_hessian) continue;
    for (Eigen::Index w = 1; w < k; ++w)
      q.hessian(offset + v - 1, offset + w - 1) -= N * (prob(v) * ((v == w) ? 1.0 : 0.0) - prob(v) * prob(w));
  }
}

}  // namespace

QDerivatives q_derivatives(const PanelDataset& data, const std::vector<Posteriors>& post,
                           const ParamSet& params, const ModelSpec& spec, bool with_hessian) {
  const PackLayout L = pack_layout(spec);
  const int k = spec.k;
  QDerivatives q;
  q.score = Eigen::VectorXd::Zero(L.size);
  if (with_hessian) q.hessian = Eigen::MatrixXd::Zero(L.size, L.size);

  // Latent chain.
  Eigen::VectorXd first = Eigen::VectorXd::Zero(k);
  Eigen::MatrixXd trans = Eigen::MatrixXd::Zero(k, k);
  for (const auto& p : post) {
    first += p.w.row(0).transpose();
    for (const auto& z : p.z) trans += z;
  }
  add_multinomial(first, params.pi, L.pi, q, with_hessian);
  for (int u = 0; u < k; ++u)
    add_multinomial(trans.row(u).transpose(), params.Pi.row(u).transpose(), L.Pi + u * (k - 1), q,
                    with_hessian);

  // Scatter a GLM block whose coordinates are [intercepts..., slopes..., extra].
  const auto scatter = [&](const GlmDerivatives& d, const std::vector<int>& index) {
    q.value += d.value;
    for (std::size_t a = 0; a < index.size(); ++a) {
      q.score(index[a]) += d.score(static_cast<Eigen::Index>(a));
      if (!with_hessian) continue;
      for (std::size_t b = 0; b < index.size(); ++b)
        q.hessian(index[a], index[b]) +=
            d.hessian(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
    }
  };

  for (int h = 0; h < spec.r(); ++h) {
    const WeightedGlmProblem pr = channel_problem(data, post, spec, h);
    const int p = spec.channels[h].p;
    Eigen::VectorXd coef(k + p);
    coef << params.alpha.row(h).transpose(), params.beta[h];
    std::vector<int> index;
    for (int u = 0; u < k; ++u) index.push_back(L.alpha[h] + u);
    for (int j = 0; j < p; ++j) index.push_back(L.beta[h] + j);
    if (spec.channels[h].family == Family::gaussian) {
      index.push_back(L.sigma[h]);
      scatter(gaussian_derivatives(pr, coef, std::log(params.sigma2(h))), index);
    } else {
      scatter(binary_derivatives(pr, coef), index);
    }
  }

  {
    const WeightedGlmProblem pr = hazard_problem(data, post, spec);
    Eigen::VectorXd coef(spec.n_gamma() + spec.q);
    coef << params.gamma, params.delta;
    std::vector<int> index;
    for (int u = 0; u < spec.n_gamma(); ++u) index.push_back(L.gamma + u);
    for (int j = 0; j < spec.q; ++j) index.push_back(L.delta + j);
    scatter(binary_derivatives(pr, coef), index);
  }
  return q;
}

Eigen::VectorXd expected_score(const PanelDataset& data, const std::vector<Posteriors>& post,
                               const ParamSet& params, const ModelSpec& spec) {
  return q_derivatives(data, post, params, spec, false).score;
}

}  // namespace lmdrop
