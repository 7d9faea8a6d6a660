// Serial versus OpenMP E-step and log-likelihood timings on a simulated panel.
// usage: bench_estep [n] [s] [k] [reps]

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>

#include "lmdrop/em.hpp"
#include "lmdrop/sim.hpp"

using namespace lmdrop;

namespace {

template <class F>
double best_of(int reps, F&& f) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

}  // namespace

int main(int argc, char** argv) {
  const int n = argc > 1 ? std::atoi(argv[1]) : 5000;
  const int s = argc > 2 ? std::atoi(argv[2]) : 10;
  const int k = argc > 3 ? std::atoi(argv[3]) : 3;
  const int reps = argc > 4 ? std::atoi(argv[4]) : 5;

  SimConfig cfg;
  cfg.n = n;
  cfg.s = s;
  cfg.seed = 1;
  ChannelSpec g = ChannelSpec::gaussian(1, "y1");
  g.covariate_names = {"x"};
  ChannelSpec b = ChannelSpec::bernoulli(1, "y2");
  b.covariate_names = {"x"};
  cfg.spec.k = k;
  cfg.spec.channels = {g, b};
  cfg.spec.q = 1;
  cfg.spec.hazard_covariate_names = {"x"};
  cfg.truth = zero_params(cfg.spec);
  for (int u = 0; u < k; ++u) {
    cfg.truth.alpha(0, u) = u;
    cfg.truth.alpha(1, u) = u - 0.5 * k;
    cfg.truth.gamma(u) = -2.5;
  }
  cfg.truth.Pi = Eigen::MatrixXd::Constant(k, k, k == 1 ? 1.0 : 0.1 / (k - 1));
  if (k > 1) cfg.truth.Pi.diagonal().setConstant(0.9);
  cfg.covariates["x"] = CovariateGenerator::uniform(-1.0, 1.0);
  const auto sim = simulate(cfg);

  double sink = 0.0;
  const double t_serial = best_of(reps, [&] { sink += e_step(sim.data, cfg.truth, cfg.spec, Execution::serial).loglik; });
  const double t_par = best_of(reps, [&] { sink += e_step(sim.data, cfg.truth, cfg.spec, Execution::parallel).loglik; });
  const double l_serial = e_step(sim.data, cfg.truth, cfg.spec, Execution::serial).loglik;
  const double l_par = e_step(sim.data, cfg.truth, cfg.spec, Execution::parallel).loglik;

  std::printf("n=%d s=%d k=%d threads=%d\n", n, s, k, omp_get_max_threads());
  std::printf("serial    %9.4f s\n", t_serial);
  std::printf("parallel  %9.4f s  (speed-up %.2fx)\n", t_par, t_serial / t_par);
  std::printf("log-likelihoods %s (%.10f)\n", l_serial == l_par ? "identical" : "DIFFER", l_serial);
  return sink == 0.0 ? 2 : 0;
}
