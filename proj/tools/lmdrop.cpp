// lmdrop: latent Markov models with informative drop-out.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "lmdrop/config.hpp"
#include "lmdrop/errors.hpp"
#include "lmdrop/inference.hpp"
#include "lmdrop/oracle.hpp"
#include "lmdrop/parallel.hpp"
#include "lmdrop/sim.hpp"

namespace fs = std::filesystem;
using namespace lmdrop;

namespace {

enum Exit { kOk = 0, kInput = 2, kFit = 3, kInference = 4 };

struct Common {
  std::string data;
  std::string model;
  std::string em;
  std::string out = "lmdrop_out";
  std::optional<std::uint64_t> seed;
  int threads = 0;  // 0: all available cores
  double fd_step = 1e-5;
};

EmConfig resolve_em(const Common& c) {
  EmConfig em = c.em.empty() ? EmConfig{} : em_config_from_json(read_json(c.em));
  if (c.seed) em.seed = *c.seed;
  return em;
}

Json header(const std::string& command, const Common& c, const ModelConfig& mc, const EmConfig& em) {
  Json cfg = {{"data", c.data},       {"model", to_json(mc)}, {"em", to_json(em)},
              {"fd_step", c.fd_step}, {"threads", max_threads()}};
  return {{"tool", "lmdrop"}, {"version", kToolVersion}, {"command", command}, {"config", cfg}};
}

Json data_summary(const LoadedModel& m) {
  Json drop = Json::array();
  for (const auto& [t, f] : dropout_summary(m.data)) drop.push_back({{"t", t}, {"fraction", f}});
  Json centering = Json::object();
  for (const auto& [name, mean] : m.centering.means) centering[name] = mean;
  return {{"n", m.data.n()}, {"s", m.data.s}, {"last_occasion", drop}, {"centering", centering}};
}

Json estimates_json(const std::vector<WaldRow>& rows) {
  Json a = Json::array();
  for (const auto& r : rows)
    a.push_back({{"name", r.name},
                 {"estimate", r.estimate},
                 {"se", r.se ? Json(*r.se) : Json(nullptr)},
                 {"t", r.t ? Json(*r.t) : Json(nullptr)}});
  return a;
}

std::string matrix_text(const std::string& title, const Eigen::MatrixXd& m) {
  std::ostringstream os;
  os << title << '\n';
  char buf[32];
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%9.4f", m(i, j));
      os << buf;
    }
    os << '\n';
  }
  return os.str();
}

std::string summary_line(const ModelSpec& spec, double loglik, int n) {
  KSelection one;
  one.rows.push_back({spec.k, true, loglik, num_params(spec), bic(loglik, spec, n), ""});
  one.chosen_k = spec.k;
  std::string t = format_k_table(one);
  return t.substr(0, t.rfind("selected"));
}

// Fit plus information; writes results.json, fit_log.json and tables.txt.
int run_fit(const Common& c) {
  const ModelConfig mc = model_config_from_json(read_json(c.model));
  const EmConfig em = resolve_em(c);
  const LoadedModel m = load_model(c.data, mc);
  const FitResult fit = multistart_fit(m.data, m.spec, em);

  Json res = header("fit", c, mc, em);
  res["data_summary"] = data_summary(m);
  res["loglik"] = fit.loglik;
  res["n_params"] = num_params(m.spec);
  res["bic"] = bic(fit.loglik, m.spec, m.data.n());
  res["converged"] = fit.converged;
  res["n_iter"] = fit.n_iter;
  res["best_start"] = fit.best_start;

  int code = kOk;
  InformationResult info;
  std::string info_error;
  try {
    info = oakes_information(m.data, fit.params, m.spec, c.fd_step);
  } catch (const SingularInformationError& ex) {
    info = ex.result();
    info_error = ex.what();
    code = kInference;
  }
  const std::vector<WaldRow> rows = wald_table(info);
  res["estimates"] = estimates_json(rows);
  res["params"] = to_json(fit.params);
  res["information"] = to_json(info);
  if (!info_error.empty()) res["information"]["error"] = info_error;

  fs::create_directories(c.out);
  write_text(fs::path(c.out) / "results.json", res.dump(2) + "\n");
  Json log = header("fit", c, mc, em);
  log["fit"] = to_json(fit, true);
  write_text(fs::path(c.out) / "fit_log.json", log.dump(2) + "\n");

  std::string tables = summary_line(m.spec, fit.loglik, m.data.n()) + "\n" + format_wald_table(rows) +
                       "\n" + matrix_text("initial probabilities", fit.params.pi.transpose()) + "\n" +
                       matrix_text("transition probabilities", fit.params.Pi);
  if (!info_error.empty()) tables += "\nstandard errors unavailable: " + info_error + "\n";
  write_text(fs::path(c.out) / "tables.txt", tables);
  std::cout << tables;
  return code;
}

std::vector<int> parse_k_range(const std::string& s) {
  std::vector<int> ks;
  const auto colon = s.find(':');
  if (colon != std::string::npos) {
    const int lo = std::stoi(s.substr(0, colon));
    const int hi = std::stoi(s.substr(colon + 1));
    for (int k = lo; k <= hi; ++k) ks.push_back(k);
  } else {
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, ',');) ks.push_back(std::stoi(item));
  }
  if (ks.empty()) throw DomainError("empty k range '" + s + "'");
  for (int k : ks)
    if (k < 1) throw DomainError("k must be >= 1");
  return ks;
}

int run_select_k(const Common& c, const std::string& k_range) {
  const ModelConfig mc = model_config_from_json(read_json(c.model));
  const EmConfig em = resolve_em(c);
  const std::vector<int> ks = parse_k_range(k_range);
  const LoadedModel m = load_model(c.data, mc);
  const KSelection sel = select_k(m.data, m.spec, ks, em);

  Json res = header("select-k", c, mc, em);
  res["config"]["k_range"] = ks;
  res["data_summary"] = data_summary(m);
  Json rows = Json::array();
  for (std::size_t i = 0; i < sel.rows.size(); ++i) {
    const auto& r = sel.rows[i];
    Json e = {{"k", r.k}, {"ok", r.ok}, {"n_params", r.n_params}};
    if (r.ok) {
      e["loglik"] = r.loglik;
      e["bic"] = r.bic;
      e["starts"] = to_json(sel.fits[i], false)["starts"];
    } else {
      e["error"] = r.error;
    }
    rows.push_back(e);
  }
  res["models"] = rows;
  res["chosen_k"] = sel.chosen_k;
  fs::create_directories(c.out);
  write_text(fs::path(c.out) / "results.json", res.dump(2) + "\n");
  const std::string table = format_k_table(sel);
  write_text(fs::path(c.out) / "tables.txt", table);
  std::cout << table;
  return kOk;
}

int run_lr_test(const Common& c) {
  const ModelConfig mc = model_config_from_json(read_json(c.model));
  const EmConfig em = resolve_em(c);
  const LoadedModel m = load_model(c.data, mc);
  ModelSpec free_spec = m.spec;
  free_spec.share_gamma = false;
  ModelSpec h0_spec = m.spec;
  h0_spec.share_gamma = true;

  const FitResult h0 = multistart_fit(m.data, h0_spec, em);
  // The constrained optimum is a point of the free model; starting there
  // guarantees the free fit does not end below it.
  ParamSet embedded = h0.params;
  embedded.gamma = Eigen::VectorXd::Constant(free_spec.k, h0.params.gamma(0));
  const FitResult free = multistart_fit(m.data, free_spec, em, {embedded});
  TestReport rep = lr_test_dropout(free, h0, free_spec);

  int code = kOk;
  try {
    rep.wald = wald_table(oakes_information(m.data, free.params, free_spec, c.fd_step));
  } catch (const SingularInformationError& ex) {
    rep.wald = wald_table(ex.result());
    code = kInference;
  }

  Json res = header("lr-test", c, mc, em);
  res["data_summary"] = data_summary(m);
  res["lr"] = rep.lr;
  res["df"] = rep.df;
  res["loglik_free"] = rep.loglik_free;
  res["loglik_h0"] = rep.loglik_h0;
  res["p_value"] = rep.p_value;
  res["caveat"] = rep.caveat;
  res["free"] = {{"fit", to_json(free, false)}, {"params", to_json(free.params)},
                 {"estimates", estimates_json(rep.wald)}};
  res["h0"] = {{"fit", to_json(h0, false)}, {"params", to_json(h0.params)}};
  fs::create_directories(c.out);
  write_text(fs::path(c.out) / "results.json", res.dump(2) + "\n");
  const std::string text = format_test_report(rep) + "\n" + format_wald_table(rep.wald);
  write_text(fs::path(c.out) / "tables.txt", text);
  std::cout << text;
  return code;
}

int run_simulate(const std::string& config, const Common& c) {
  SimConfig sc = sim_config_from_json(read_json(config));
  if (c.seed) sc.seed = *c.seed;
  const Simulation sim = simulate(sc);
  fs::create_directories(c.out);
  write_panel(sim.data, fs::path(c.out) / "panel.csv");
  write_text(fs::path(c.out) / "truth.json", to_json(sim.truth).dump(2) + "\n");
  Json cfg = {{"tool", "lmdrop"}, {"version", kToolVersion}, {"command", "simulate"},
              {"config", to_json(sc)}};
  write_text(fs::path(c.out) / "simulation.json", cfg.dump(2) + "\n");
  std::cout << "wrote " << sim.data.n() << " subjects to " << (fs::path(c.out) / "panel.csv").string()
            << '\n';
  return kOk;
}

int run_audit(const Common& c, const std::string& params_path) {
  const ModelConfig mc = model_config_from_json(read_json(c.model));
  const LoadedModel m = load_model(c.data, mc);
  const Json pj = read_json(params_path);
  const ParamSet params = params_from_json(pj.contains("params") ? pj.at("params") : pj, m.spec);
  const AuditReport rep = audit(m.data, params, m.spec);
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "subjects              %d\n"
                "loglik (recursions)   %.10f\n"
                "loglik (enumeration)  %.10f\n"
                "max |loglik diff|     %.3e\n"
                "max |posterior diff|  %.3e\n"
                "worst subject         %s\n",
                rep.n_subjects, rep.loglik_recursion, rep.loglik_oracle, rep.max_loglik_diff,
                rep.max_posterior_diff, rep.worst_subject.c_str());
  std::cout << buf;
  return kOk;
}

int classify(const std::exception& ex) {
  if (dynamic_cast<const SingularInformationError*>(&ex)) return kInference;
  if (dynamic_cast<const GapError*>(&ex) || dynamic_cast<const DomainError*>(&ex) ||
      dynamic_cast<const SchemaError*>(&ex) || dynamic_cast<const ShapeError*>(&ex) ||
      dynamic_cast<const ExplosionError*>(&ex) || dynamic_cast<const std::invalid_argument*>(&ex) ||
      dynamic_cast<const std::out_of_range*>(&ex) || dynamic_cast<const fs::filesystem_error*>(&ex))
    return kInput;
  return kFit;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent Markov models for panel data with informative drop-out"};
  app.require_subcommand(1);
  Common c;
  std::string k_range = "1:4";
  std::string sim_config;
  std::string params_path;

  const auto add_common = [&](CLI::App* sub, bool needs_data) {
    if (needs_data) {
      sub->add_option("--data", c.data, "Panel CSV, one row per subject and occasion")
          ->required()
          ->check(CLI::ExistingFile);
      sub->add_option("--model", c.model, "Model configuration (JSON)")
          ->required()
          ->check(CLI::ExistingFile);
    }
    sub->add_option("--out", c.out, "Output directory");
    sub->add_option("--seed", c.seed, "Overrides the seed of the EM or simulation config");
    sub->add_option("--threads", c.threads, "Worker threads (0 = all cores, 1 = serial)");
  };
  const auto add_em = [&](CLI::App* sub) {
    sub->add_option("--em", c.em, "EM configuration (JSON); defaults when absent")
        ->check(CLI::ExistingFile);
    sub->add_option("--fd-step", c.fd_step, "Relative step of the numerical score Jacobian")
        ->check(CLI::PositiveNumber);
  };

  auto* fit = app.add_subcommand("fit", "Multistart EM fit with standard errors");
  add_common(fit, true);
  add_em(fit);
  auto* sel = app.add_subcommand("select-k", "Fit a range of k and choose by BIC");
  add_common(sel, true);
  add_em(sel);
  sel->add_option("--k-range", k_range, "lo:hi or a comma list");
  auto* lr = app.add_subcommand("lr-test", "Likelihood-ratio test of equal drop-out intercepts");
  add_common(lr, true);
  add_em(lr);
  auto* sim = app.add_subcommand("simulate", "Simulate a panel from a fully specified model");
  add_common(sim, false);
  sim->add_option("--config", sim_config, "Simulation configuration (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  auto* aud = app.add_subcommand("audit", "Compare recursions with path enumeration");
  add_common(aud, true);
  aud->add_option("--params", params_path, "Parameter file or fit results.json")
      ->required()
      ->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInput;
  }

  set_threads(c.threads);
  try {
    if (*fit) return run_fit(c);
    if (*sel) return run_select_k(c, k_range);
    if (*lr) return run_lr_test(c);
    if (*sim) return run_simulate(sim_config, c);
    if (*aud) return run_audit(c, params_path);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return classify(ex);
  }
  return kOk;
}
