#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ldaf/flow.hpp"
#include "ldaf/pushforward.hpp"

namespace ldaf {

using manifold::GraphShape;
using manifold::TangentField;

/// Affine feature map into T0: F(x) = P0 (W x + beta). The identity kind has
/// input dimension N and W = I, beta = 0 fixed.
struct FeatureMap {
  enum class Kind { Identity, Linear };

  Kind kind = Kind::Linear;
  Matrix weight;  // N x dim
  Vector bias;    // N

  static FeatureMap identity(const GraphShape& shape);
  static FeatureMap linear(const GraphShape& shape, int input_dim);

  [[nodiscard]] int input_dim() const noexcept { return static_cast<int>(weight.cols()); }
  [[nodiscard]] TangentField apply(const GraphShape& shape, const Vector& x) const;
};

struct ModelBundle {
  GraphShape shape;
  FeatureMap feature;
  flow::FlowParams flow;
  double horizon = 1.0;
  pushforward::LowRankCov prior;
  std::optional<pushforward::LowRankCov> posterior;
  /// Free-form ordered metadata: seeds, dataset digest, lambda, ...
  std::vector<std::pair<std::string, std::string>> metadata;

  /// Throws on inconsistent shapes or a non-symmetric Omega.
  void validate() const;
  /// Posterior when present, prior otherwise.
  [[nodiscard]] const pushforward::LowRankCov& active_cov() const;
  void set_metadata(const std::string& key, std::string value);
  [[nodiscard]] std::optional<std::string> find_metadata(const std::string& key) const;
};

struct Prediction {
  Vector logits;  // c, sums to zero
  int label = 0;
};

/// argmax with ties resolved to the lowest index.
int argmax(const Vector& logits);

/// logits = v(T)_I + F(x)_I with v the LDAF solution started at
/// s0 = exp_{1_W}(F(x)).
Prediction forward_deterministic(const ModelBundle& model, const Vector& x,
                                 const flow::SolverOptions& options = {});

/// Per-datum class-node operator of the stochastic classifier.
pushforward::ClassNodeOperator datum_operator(const ModelBundle& model, const Vector& x,
                                              const flow::SolverOptions& options = {});

/// Directory layout: manifest.txt plus one raw little-endian float64 file
/// per array, with shape and SHA-256 recorded in the manifest.
void save_model(const ModelBundle& model, const std::string& dir);
ModelBundle load_model(const std::string& dir);

/// Hex SHA-256 over the manifest text of a saved model.
std::string model_digest(const std::string& dir);

}  // namespace ldaf
