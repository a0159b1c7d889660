#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ldaf/kvtext.hpp"

namespace ldaf {

/// A risk certificate for the 01 loss. `bound` is the PAC-Bayes-lambda
/// right-hand side evaluated at (risk_used, kl, m, epsilon, lambda_star).
struct Certificate {
  double bound = 0.0;
  double lambda_star = 0.0;
  double kl = 0.0;
  /// QMC expected empirical 01 risk and its randomized-replicate standard error.
  double emp_risk_01 = 0.0;
  double emp_risk_error = 0.0;
  /// emp_risk_01, plus emp_risk_error when padded.
  double risk_used = 0.0;
  bool padded = false;
  double epsilon = 0.0;
  long long m = 0;
  int n_points = 0;
  std::string loss = "01";
  /// Ordered provenance entries (config hash, seeds, model hash, ...).
  std::vector<std::pair<std::string, std::string>> provenance;

  [[nodiscard]] KvDocument to_document() const;
  static Certificate from_document(const KvDocument& doc);
};

/// Recomputes the bound from the stored fields; true when it reproduces
/// `bound` within `tol` and the invariants (01 loss, bound >= risk) hold.
bool verify_certificate(const Certificate& cert, double tol = 1e-12);

}  // namespace ldaf
