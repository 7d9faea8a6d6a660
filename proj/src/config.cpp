#include "lmdrop/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "lmdrop/errors.hpp"

namespace lmdrop {

namespace {

void check_keys(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw SchemaError(where + ": expected a JSON object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) throw SchemaError(where + ": unknown key '" + key + "'");
}

template <class T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& ex) {
    throw SchemaError(std::string("key '") + key + "': " + ex.what());
  }
}

Json vec(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Json mat(const Eigen::MatrixXd& m) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(vec(m.row(i).transpose()));
  return a;
}

Eigen::VectorXd read_vec(const Json& j, Eigen::Index n, const std::string& what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != n)
    throw ShapeError(what + ": expected an array of length " + std::to_string(n));
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = j[static_cast<std::size_t>(i)].get<double>();
  return v;
}

Eigen::MatrixXd read_mat(const Json& j, Eigen::Index rows, Eigen::Index cols, const std::string& what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
    throw ShapeError(what + ": expected " + std::to_string(rows) + " rows");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    m.row(i) = read_vec(j[static_cast<std::size_t>(i)], cols, what).transpose();
  return m;
}

std::vector<ChannelColumn> channels_from_json(const Json& j) {
  if (!j.is_array()) throw SchemaError("channels: expected an array");
  std::vector<ChannelColumn> out;
  for (const auto& c : j) {
    check_keys(c, {"name", "family", "covariates"}, "channel");
    if (!c.contains("name")) throw SchemaError("channel: missing name");
    out.push_back({c.at("name").get<std::string>(),
                   parse_family(get_or<std::string>(c, "family", "gaussian")),
                   get_or<std::vector<std::string>>(c, "covariates", {})});
  }
  return out;
}

Json channels_to_json(const std::vector<ChannelColumn>& cs) {
  Json a = Json::array();
  for (const auto& c : cs)
    a.push_back({{"name", c.name}, {"family", to_string(c.family)}, {"covariates", c.covariates}});
  return a;
}

}  // namespace

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& ex) {
    throw SchemaError(path.string() + ": " + ex.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SchemaError("cannot write " + path.string());
  out << text;
}

ModelConfig model_config_from_json(const Json& j) {
  check_keys(j,
             {"id_column", "occasion_column", "horizon", "channels", "hazard_covariates", "k",
              "hazard_link", "share_gamma", "center"},
             "model config");
  ModelConfig c;
  c.schema.id_column = get_or<std::string>(j, "id_column", "id");
  c.schema.occasion_column = get_or<std::string>(j, "occasion_column", "occasion");
  if (j.contains("horizon") && !j.at("horizon").is_null()) c.schema.horizon = j.at("horizon").get<int>();
  if (!j.contains("channels")) throw SchemaError("model config: missing channels");
  c.schema.channels = channels_from_json(j.at("channels"));
  c.schema.hazard_covariates = get_or<std::vector<std::string>>(j, "hazard_covariates", {});
  c.k = get_or<int>(j, "k", 1);
  c.hazard_link = parse_link(get_or<std::string>(j, "hazard_link", "logit"));
  c.share_gamma = get_or<bool>(j, "share_gamma", false);
  c.center = get_or<std::vector<std::string>>(j, "center", {});
  return c;
}

Json to_json(const ModelConfig& c) {
  Json j;
  j["id_column"] = c.schema.id_column;
  j["occasion_column"] = c.schema.occasion_column;
  j["horizon"] = c.schema.horizon ? Json(*c.schema.horizon) : Json(nullptr);
  j["channels"] = channels_to_json(c.schema.channels);
  j["hazard_covariates"] = c.schema.hazard_covariates;
  j["k"] = c.k;
  j["hazard_link"] = to_string(c.hazard_link);
  j["share_gamma"] = c.share_gamma;
  j["center"] = c.center;
  return j;
}

EmConfig em_config_from_json(const Json& j) {
  check_keys(j,
             {"tol_loglik", "tol_score", "max_iter", "n_random_starts", "perturbation_scale",
              "seed", "newton_max_iter", "newton_tol", "newton_max_halvings"},
             "EM config");
  EmConfig c;
  c.tol_loglik = get_or(j, "tol_loglik", c.tol_loglik);
  c.tol_score = get_or(j, "tol_score", c.tol_score);
  c.max_iter = get_or(j, "max_iter", c.max_iter);
  c.n_random_starts = get_or(j, "n_random_starts", c.n_random_starts);
  c.perturbation_scale = get_or(j, "perturbation_scale", c.perturbation_scale);
  c.seed = get_or(j, "seed", c.seed);
  c.newton.max_iter = get_or(j, "newton_max_iter", c.newton.max_iter);
  c.newton.tol = get_or(j, "newton_tol", c.newton.tol);
  c.newton.max_halvings = get_or(j, "newton_max_halvings", c.newton.max_halvings);
  c.validate();
  return c;
}

Json to_json(const EmConfig& c) {
  return {{"tol_loglik", c.tol_loglik},
          {"tol_score", c.tol_score},
          {"max_iter", c.max_iter},
          {"n_random_starts", c.n_random_starts},
          {"perturbation_scale", c.perturbation_scale},
          {"seed", c.seed},
          {"newton_max_iter", c.newton.max_iter},
          {"newton_tol", c.newton.tol},
          {"newton_max_halvings", c.newton.max_halvings}};
}

ParamSet params_from_json(const Json& j, const ModelSpec& spec) {
  check_keys(j, {"pi", "Pi", "alpha", "beta", "sigma2", "gamma", "delta"}, "parameters");
  for (const char* key : {"pi", "Pi", "alpha", "beta", "gamma"})
    if (!j.contains(key)) throw SchemaError(std::string("parameters: missing ") + key);
  const int k = spec.k;
  ParamSet p = zero_params(spec);
  p.pi = read_vec(j.at("pi"), k, "pi");
  p.Pi = read_mat(j.at("Pi"), k, k, "Pi");
  p.alpha = read_mat(j.at("alpha"), spec.r(), k, "alpha");
  const Json& beta = j.at("beta");
  if (!beta.is_array() || static_cast<int>(beta.size()) != spec.r())
    throw ShapeError("beta: expected one array per channel");
  for (int h = 0; h < spec.r(); ++h)
    p.beta[h] = read_vec(beta[static_cast<std::size_t>(h)], spec.channels[h].p, "beta");
  if (j.contains("sigma2")) p.sigma2 = read_vec(j.at("sigma2"), spec.r(), "sigma2");
  p.gamma = read_vec(j.at("gamma"), spec.n_gamma(), "gamma");
  p.delta = j.contains("delta") ? read_vec(j.at("delta"), spec.q, "delta") : Eigen::VectorXd::Zero(spec.q);
  validate_params(p, spec);
  return p;
}

Json to_json(const ParamSet& p) {
  Json beta = Json::array();
  for (const auto& b : p.beta) beta.push_back(vec(b));
  return {{"pi", vec(p.pi)},       {"Pi", mat(p.Pi)},         {"alpha", mat(p.alpha)},
          {"beta", beta},          {"sigma2", vec(p.sigma2)}, {"gamma", vec(p.gamma)},
          {"delta", vec(p.delta)}};
}

ModelSpec spec_from_json(const Json& j) {
  check_keys(j, {"channels", "hazard_covariates", "k", "hazard_link", "share_gamma"}, "model");
  if (!j.contains("channels")) throw SchemaError("model: missing channels");
  ModelSpec spec;
  for (const auto& c : channels_from_json(j.at("channels"))) {
    ChannelSpec cs;
    cs.name = c.name;
    cs.family = c.family;
    cs.link = c.family == Family::gaussian ? Link::identity : Link::logit;
    cs.p = static_cast<int>(c.covariates.size());
    cs.covariate_names = c.covariates;
    spec.channels.push_back(std::move(cs));
  }
  spec.hazard_covariate_names = get_or<std::vector<std::string>>(j, "hazard_covariates", {});
  spec.q = static_cast<int>(spec.hazard_covariate_names.size());
  spec.k = get_or<int>(j, "k", 1);
  spec.hazard_link = parse_link(get_or<std::string>(j, "hazard_link", "logit"));
  spec.share_gamma = get_or<bool>(j, "share_gamma", false);
  spec.validate();
  return spec;
}

Json to_json(const ModelSpec& spec) {
  std::vector<ChannelColumn> cs;
  for (const auto& c : spec.channels) cs.push_back({c.name, c.family, c.covariate_names});
  return {{"channels", channels_to_json(cs)},
          {"hazard_covariates", spec.hazard_covariate_names},
          {"k", spec.k},
          {"hazard_link", to_string(spec.hazard_link)},
          {"share_gamma", spec.share_gamma}};
}

SimConfig sim_config_from_json(const Json& j) {
  check_keys(j, {"n", "s", "seed", "model", "truth", "covariates"}, "simulation config");
  for (const char* key : {"model", "truth"})
    if (!j.contains(key)) throw SchemaError(std::string("simulation config: missing ") + key);
  SimConfig c;
  c.n = get_or(j, "n", c.n);
  c.s = get_or(j, "s", c.s);
  c.seed = get_or(j, "seed", c.seed);
  c.spec = spec_from_json(j.at("model"));
  c.truth = params_from_json(j.at("truth"), c.spec);
  if (j.contains("covariates")) {
    const Json& cov = j.at("covariates");
    if (!cov.is_object()) throw SchemaError("covariates: expected an object keyed by name");
    for (const auto& [name, e] : cov.items()) {
      check_keys(e, {"kind", "value", "lo", "hi", "prob", "coefficients", "per_subject"},
                 "covariate " + name);
      CovariateGenerator g;
      g.kind = parse_generator_kind(get_or<std::string>(e, "kind", "constant"));
      g.value = get_or(e, "value", g.value);
      g.lo = get_or(e, "lo", g.lo);
      g.hi = get_or(e, "hi", g.hi);
      g.prob = get_or(e, "prob", g.prob);
      g.coefficients = get_or<std::vector<double>>(e, "coefficients", {});
      g.per_subject = get_or(e, "per_subject", g.kind == CovariateGenerator::Kind::binary);
      c.covariates[name] = std::move(g);
    }
  }
  c.validate();
  return c;
}

Json to_json(const SimConfig& c) {
  Json cov = Json::object();
  for (const auto& [name, g] : c.covariates) {
    Json e = {{"kind", to_string(g.kind)}};
    switch (g.kind) {
      case CovariateGenerator::Kind::constant: e["value"] = g.value; break;
      case CovariateGenerator::Kind::uniform: e["lo"] = g.lo; e["hi"] = g.hi; break;
      case CovariateGenerator::Kind::binary: e["prob"] = g.prob; break;
      case CovariateGenerator::Kind::time_polynomial: e["coefficients"] = g.coefficients; break;
    }
    e["per_subject"] = g.per_subject;
    cov[name] = e;
  }
  return {{"n", c.n},          {"s", c.s},          {"seed", c.seed},
          {"model", to_json(c.spec)}, {"truth", to_json(c.truth)}, {"covariates", cov}};
}

Json to_json(const TruthRecord& t) {
  Json subjects = Json::array();
  for (std::size_t i = 0; i < t.ids.size(); ++i) {
    std::vector<int> one_based;
    for (int u : t.paths[i]) one_based.push_back(u + 1);
    subjects.push_back({{"id", t.ids[i]}, {"t", t.t[i]}, {"states", one_based}});
  }
  return {{"seed", t.seed}, {"subjects", subjects}};
}

LoadedModel load_model(const std::filesystem::path& data_path, const ModelConfig& config) {
  LoadedModel m;
  m.data = load_panel(data_path, config.schema);
  if (!config.center.empty()) {
    auto [centered, report] = center_continuous(m.data, config.center);
    m.data = std::move(centered);
    m.centering = std::move(report);
  }
  m.spec = spec_for(m.data, config.k, config.hazard_link, config.share_gamma);
  return m;
}

Json to_json(const FitResult& fit, bool with_trace) {
  Json starts = Json::array();
  for (const auto& s : fit.starts) {
    Json e = {{"index", s.index}, {"deterministic", s.deterministic}, {"ok", s.ok}};
    if (s.ok) {
      e["loglik"] = s.loglik;
      e["n_iter"] = s.n_iter;
      e["converged"] = s.converged;
    } else {
      e["error"] = s.error;
    }
    starts.push_back(e);
  }
  Json j = {{"loglik", fit.loglik},       {"n_iter", fit.n_iter},
            {"converged", fit.converged}, {"best_start", fit.best_start},
            {"starts", starts}};
  if (with_trace) {
    Json tr = Json::array();
    for (const auto& r : fit.trace)
      tr.push_back({{"loglik", r.loglik},
                    {"rel_change", r.rel_change},
                    {"max_score", r.max_score},
                    {"param_change", r.param_change}});
    j["trace"] = tr;
  }
  return j;
}

Json to_json(const InformationResult& info) {
  return {{"method", info.method},
          {"positive_definite", info.positive_definite},
          {"condition_number", info.condition_number},
          {"asymmetry", info.asymmetry}};
}

}  // namespace lmdrop
