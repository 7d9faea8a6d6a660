#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lmdrop/em.hpp"
#include "lmdrop/errors.hpp"

namespace lmdrop {

struct InformationResult {
  Eigen::MatrixXd information;  // packed coordinates, symmetrized
  Eigen::MatrixXd j1;           // -Hessian of Q at frozen posteriors
  Eigen::MatrixXd j2;           // -Jacobian of the score through the posteriors
  Eigen::VectorXd se_packed;    // empty unless positive definite
  std::vector<std::string> packed_names;
  Eigen::VectorXd estimates_reported;
  std::vector<std::string> reported_names;
  Eigen::VectorXd se_reported;  // empty unless positive definite
  double condition_number = 0.0;
  double asymmetry = 0.0;       // max |I - I'| / max |I| before symmetrization
  bool positive_definite = false;
  std::string method;           // "oakes" or "numerical-hessian"
};

class SingularInformationError : public Error {
 public:
  SingularInformationError(const std::string& what, InformationResult result)
      : Error(what), result_(std::move(result)) {}
  const InformationResult& result() const { return result_; }

 private:
  InformationResult result_;
};

/// Observed information at params as the analytic Hessian of Q plus a central
/// difference Jacobian of the expected score through the posteriors. Columns of
/// the numerical part run in parallel under Execution::parallel.
/// Throws SingularInformationError (carrying the matrix) when not positive definite.
InformationResult oakes_information(const PanelDataset& data, const ParamSet& params,
                                    const ModelSpec& spec, double fd_step = 1e-5,
                                    Execution exec = Execution::parallel);

/// SEs, condition number and reporting-basis SEs for a given information matrix.
/// Never throws on indefiniteness; check positive_definite.
InformationResult information_from_matrix(const Eigen::MatrixXd& information,
                                          const ParamSet& params, const ModelSpec& spec,
                                          std::string method);

/// d reporting_vector / d packed coordinates.
Eigen::MatrixXd reporting_jacobian(const ParamSet& params, const ModelSpec& spec);

double bic(double loglik, int n_params, int n);
double bic(double loglik, const ModelSpec& spec, int n);

struct WaldRow {
  std::string name;
  double estimate = 0.0;
  std::optional<double> se;
  std::optional<double> t;  // absent for intercept means, variances and probabilities
};

/// Reporting-basis estimates with SEs and t = estimate / SE.
std::vector<WaldRow> wald_table(const Eigen::VectorXd& estimates, const Eigen::VectorXd& se,
                                const std::vector<std::string>& names);
std::vector<WaldRow> wald_table(const InformationResult& info);

struct TestReport {
  double lr = 0.0;
  int df = 0;
  double loglik_free = 0.0;
  double loglik_h0 = 0.0;
  double p_value = 1.0;  // chi-squared(df) reference
  std::string caveat;
  std::vector<WaldRow> wald;  // optional, from the free fit
};

/// LR = 2 (l_free - l_H0) for H0: equal drop-out intercepts, df = k - 1.
/// Throws NestingViolationError when l_free < l_H0 - 1e-6.
TestReport lr_test_dropout(double loglik_free, double loglik_h0, const ModelSpec& spec);
TestReport lr_test_dropout(const FitResult& fit_free, const FitResult& fit_h0,
                           const ModelSpec& spec);

struct KSelectionRow {
  int k = 0;
  bool ok = false;
  double loglik = 0.0;
  int n_params = 0;
  double bic = 0.0;
  std::string error;
};

struct KSelection {
  std::vector<KSelectionRow> rows;
  int chosen_k = 0;  // argmin BIC over successful fits; ties go to the smaller k
  std::vector<FitResult> fits;  // parallel to rows; default-constructed for failures
};

/// Fits every k in ks with base's channel and hazard design.
KSelection select_k(const PanelDataset& data, const ModelSpec& base, const std::vector<int>& ks,
                    const EmConfig& config);

/// Aligned text tables.
std::string format_k_table(const KSelection& sel);
std::string format_wald_table(const std::vector<WaldRow>& rows);
std::string format_test_report(const TestReport& report);

}  // namespace lmdrop
