#include "ldaf/certificate.hpp"

#include <cmath>

#include "ldaf/error.hpp"
#include "ldaf/pacbayes.hpp"

namespace ldaf {

namespace {

constexpr const char* kProvenancePrefix = "provenance.";

}  // namespace

KvDocument Certificate::to_document() const {
  KvDocument doc;
  doc.set("format", "ldaf-certificate-1");
  doc.set("loss", loss);
  doc.set_double("bound", bound);
  doc.set_double("lambda_star", lambda_star);
  doc.set_double("kl", kl);
  doc.set_double("emp_risk_01", emp_risk_01);
  doc.set_double("emp_risk_error", emp_risk_error);
  doc.set_double("risk_used", risk_used);
  doc.set("padded", padded ? "true" : "false");
  doc.set_double("epsilon", epsilon);
  doc.set_int("m", m);
  doc.set_int("n_points", n_points);
  for (const auto& [k, v] : provenance) doc.set(kProvenancePrefix + k, v);
  return doc;
}

Certificate Certificate::from_document(const KvDocument& doc) {
  require(doc.has("format") && doc.get("format") == "ldaf-certificate-1", ErrorKind::Format,
          "certificate: unknown or missing format tag");
  Certificate c;
  c.loss = doc.get("loss");
  c.bound = doc.get_double("bound");
  c.lambda_star = doc.get_double("lambda_star");
  c.kl = doc.get_double("kl");
  c.emp_risk_01 = doc.get_double("emp_risk_01");
  c.emp_risk_error = doc.get_double("emp_risk_error");
  c.risk_used = doc.get_double("risk_used");
  const std::string& padded = doc.get("padded");
  require(padded == "true" || padded == "false", ErrorKind::Format,
          "certificate: padded must be true or false");
  c.padded = padded == "true";
  c.epsilon = doc.get_double("epsilon");
  c.m = doc.get_int("m");
  c.n_points = static_cast<int>(doc.get_int("n_points"));
  const std::string prefix = kProvenancePrefix;
  for (const auto& [k, v] : doc.entries()) {
    if (k.rfind(prefix, 0) == 0) c.provenance.emplace_back(k.substr(prefix.size()), v);
  }
  return c;
}

bool verify_certificate(const Certificate& cert, double tol) {
  if (cert.loss != "01") return false;
  const double expected_risk =
      cert.padded ? std::min(1.0, cert.emp_risk_01 + cert.emp_risk_error) : cert.emp_risk_01;
  if (cert.risk_used != expected_risk) return false;
  try {
    const double b = pacbayes::bound_eval(
        {cert.risk_used, cert.kl, cert.m, cert.epsilon, cert.lambda_star});
    return std::abs(b - cert.bound) <= tol && cert.bound >= cert.emp_risk_01;
  } catch (const Error&) {
    return false;
  }
}

}  // namespace ldaf
