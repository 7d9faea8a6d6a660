#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "lmdrop/em.hpp"
#include "lmdrop/inference.hpp"
#include "lmdrop/sim.hpp"

namespace lmdrop {

using Json = nlohmann::ordered_json;

inline constexpr const char* kToolVersion = "0.1.0";

/// Model configuration file: the CSV column mapping plus the model options.
struct ModelConfig {
  PanelSchema schema;
  int k = 1;
  Link hazard_link = Link::logit;
  bool share_gamma = false;
  std::vector<std::string> center;  // covariates to grand-mean center after loading
};

Json read_json(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

// Every from_json rejects unknown keys with SchemaError and fills absent keys
// with defaults; every to_json writes all fields.
ModelConfig model_config_from_json(const Json& j);
Json to_json(const ModelConfig& c);

EmConfig em_config_from_json(const Json& j);
Json to_json(const EmConfig& c);

ParamSet params_from_json(const Json& j, const ModelSpec& spec);
Json to_json(const ParamSet& p);

/// Model spec block of a simulation config: channels with covariate names.
ModelSpec spec_from_json(const Json& j);
Json to_json(const ModelSpec& spec);

SimConfig sim_config_from_json(const Json& j);
Json to_json(const SimConfig& c);

Json to_json(const TruthRecord& t);

/// Loads the panel, applies centering, and builds the matching spec.
struct LoadedModel {
  PanelDataset data;
  ModelSpec spec;
  CenteringReport centering;
};
LoadedModel load_model(const std::filesystem::path& data_path, const ModelConfig& config);

Json to_json(const FitResult& fit, bool with_trace);
Json to_json(const InformationResult& info);

}  // namespace lmdrop
