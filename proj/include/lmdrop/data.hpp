#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lmdrop/types.hpp"

namespace lmdrop {

/// Column mapping for the long (one row per subject-occasion) CSV format.
struct ChannelColumn {
  std::string name;  // outcome column
  Family family = Family::gaussian;
  std::vector<std::string> covariates;
};

struct PanelSchema {
  std::string id_column = "id";
  std::string occasion_column = "occasion";
  std::vector<ChannelColumn> channels;
  std::vector<std::string> hazard_covariates;
  // Scheduled horizon s. Inferred as the maximum observed occasion when unset.
  std::optional<int> horizon;
};

/// One subject's observed history. Row j of every matrix is occasion j+1.
struct SubjectRecord {
  std::string id;
  int t = 0;  // last observed occasion (drop-out right after it when t < s)
  RowMatrix y;                // t x r outcomes
  std::vector<RowMatrix> x;   // per channel, t x p_h
  RowMatrix z;                // t x q; the row for occasion s may hold NaN
};

struct PanelDataset {
  int s = 1;
  std::vector<SubjectRecord> subjects;
  std::vector<std::string> channel_names;
  std::vector<Family> channel_families;
  std::vector<std::vector<std::string>> channel_covariate_names;
  std::vector<std::string> hazard_covariate_names;
  std::string id_column = "id";
  std::string occasion_column = "occasion";

  int n() const { return static_cast<int>(subjects.size()); }
  int r() const { return static_cast<int>(channel_names.size()); }
  int q() const { return static_cast<int>(hazard_covariate_names.size()); }
  int max_t() const;
  PanelSchema schema() const;
};

struct CenteringReport {
  std::vector<std::pair<std::string, double>> means;
};

/// Throws GapError / DomainError / SchemaError on the first violated invariant.
void validate_panel(const PanelDataset& data);

PanelDataset load_panel(const std::filesystem::path& path, const PanelSchema& schema);
void write_panel(const PanelDataset& data, const std::filesystem::path& path);

/// Subtracts the grand mean over all observed rows from each named covariate,
/// wherever it appears (any channel design and the hazard design).
std::pair<PanelDataset, CenteringReport> center_continuous(
    const PanelDataset& data, const std::vector<std::string>& which);

/// Fraction of subjects with T_i = t for t = 1..s.
std::vector<std::pair<int, double>> dropout_summary(const PanelDataset& data);

}  // namespace lmdrop
