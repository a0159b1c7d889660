#include "ldaf/model.hpp"

#include <bit>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "ldaf/error.hpp"
#include "ldaf/hash.hpp"
#include "ldaf/kvtext.hpp"

namespace ldaf {

namespace fs = std::filesystem;

namespace {

constexpr const char* kFormat = "ldaf-model-1";

std::vector<std::uint8_t> encode_array(const Matrix& a) {
  std::vector<std::uint8_t> out;
  out.reserve(static_cast<std::size_t>(a.size()) * 8);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      const auto bits = std::bit_cast<std::uint64_t>(a(i, j));
      for (int b = 0; b < 8; ++b) out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
    }
  }
  return out;
}

void write_array(KvDocument& manifest, const fs::path& dir, const std::string& name,
                 const Matrix& a) {
  const std::vector<std::uint8_t> bytes = encode_array(a);
  const std::string file = name + ".f64";
  std::ofstream out(dir / file, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::Io, "cannot write '" + (dir / file).string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(out.good(), ErrorKind::Io, "write failed for '" + (dir / file).string() + "'");
  manifest.set("array." + name + ".file", file);
  manifest.set_int("array." + name + ".rows", a.rows());
  manifest.set_int("array." + name + ".cols", a.cols());
  manifest.set("array." + name + ".sha256", to_hex(sha256(bytes.data(), bytes.size())));
}

Matrix read_array(const KvDocument& manifest, const fs::path& dir, const std::string& name) {
  const std::string prefix = "array." + name + ".";
  require(manifest.has(prefix + "file"), ErrorKind::Format,
          "model: manifest does not declare array '" + name + "'");
  const fs::path path = dir / manifest.get(prefix + "file");
  const long long rows = manifest.get_int(prefix + "rows");
  const long long cols = manifest.get_int(prefix + "cols");
  require(rows >= 0 && cols >= 0, ErrorKind::Format, "model: negative array shape");
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::Io, "model: missing array file '" + path.string() + "'");
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in),
                                        std::istreambuf_iterator<char>()};
  require(bytes.size() == static_cast<std::size_t>(rows * cols * 8), ErrorKind::Format,
          "model: array '" + name + "' has the wrong size");
  require(to_hex(sha256(bytes.data(), bytes.size())) == manifest.get(prefix + "sha256"),
          ErrorKind::Format, "model: hash mismatch for array '" + name + "'");
  Matrix a(rows, cols);
  std::size_t pos = 0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[pos++]) << (8 * b);
      a(i, j) = std::bit_cast<double>(bits);
    }
  }
  return a;
}

Vector column(const Matrix& a, const std::string& name) {
  require(a.cols() == 1, ErrorKind::Format, "model: array '" + name + "' must be a column");
  return a.col(0);
}

}  // namespace

FeatureMap FeatureMap::identity(const GraphShape& shape) {
  return {Kind::Identity, Matrix::Identity(shape.dim(), shape.dim()), Vector::Zero(shape.dim())};
}

FeatureMap FeatureMap::linear(const GraphShape& shape, int input_dim) {
  require(input_dim >= 1, ErrorKind::InvalidArgument, "feature map: input dim must be positive");
  return {Kind::Linear, Matrix::Zero(shape.dim(), input_dim), Vector::Zero(shape.dim())};
}

TangentField FeatureMap::apply(const GraphShape& shape, const Vector& x) const {
  require(x.size() == input_dim(), ErrorKind::ShapeMismatch,
          "feature map: input has dimension " + std::to_string(x.size()) + ", expected " +
              std::to_string(input_dim()));
  if (kind == Kind::Identity) return manifold::project_tangent(x, shape);
  return manifold::project_tangent(weight * x + bias, shape);
}

void ModelBundle::validate() const {
  require(feature.weight.rows() == shape.dim() && feature.bias.size() == shape.dim(),
          ErrorKind::ShapeMismatch, "model: feature map output must have dimension N");
  require(flow.shape == shape, ErrorKind::ShapeMismatch, "model: flow shape mismatch");
  flow.validate();
  require(horizon > 0.0, ErrorKind::InvalidArgument, "model: horizon must be positive");
  require(prior.shape == shape, ErrorKind::ShapeMismatch, "model: prior shape mismatch");
  prior.validate();
  if (posterior) {
    require(posterior->shape == shape, ErrorKind::ShapeMismatch, "model: posterior shape mismatch");
    posterior->validate();
  }
}

const pushforward::LowRankCov& ModelBundle::active_cov() const {
  return posterior ? *posterior : prior;
}

void ModelBundle::set_metadata(const std::string& key, std::string value) {
  for (auto& [k, v] : metadata) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  metadata.emplace_back(key, std::move(value));
}

std::optional<std::string> ModelBundle::find_metadata(const std::string& key) const {
  for (const auto& [k, v] : metadata) {
    if (k == key) return v;
  }
  return std::nullopt;
}

int argmax(const Vector& logits) {
  Eigen::Index best = 0;
  for (Eigen::Index j = 1; j < logits.size(); ++j) {
    if (logits(j) > logits(best)) best = j;
  }
  return static_cast<int>(best);
}

Prediction forward_deterministic(const ModelBundle& model, const Vector& x,
                                 const flow::SolverOptions& options) {
  const int c = model.shape.classes();
  const TangentField v0 = model.feature.apply(model.shape, x);
  const auto s0 = manifold::lift_at_barycenter(v0);
  const TangentField v = flow::solve_ldaf(model.flow, s0, model.horizon, options);
  Prediction p;
  p.logits = v.values.head(c) + v0.values.head(c);
  p.label = argmax(p.logits);
  return p;
}

pushforward::ClassNodeOperator datum_operator(const ModelBundle& model, const Vector& x,
                                              const flow::SolverOptions& options) {
  const TangentField v0 = model.feature.apply(model.shape, x);
  return pushforward::class_node_operator(model.flow, manifold::lift_at_barycenter(v0),
                                          model.horizon, v0.values.head(model.shape.classes()),
                                          options);
}

void save_model(const ModelBundle& model, const std::string& dir) {
  model.validate();
  const fs::path root(dir);
  std::error_code ec;
  fs::create_directories(root, ec);
  require(!ec && fs::is_directory(root), ErrorKind::Io, "cannot create directory '" + dir + "'");
  KvDocument manifest;
  manifest.set("format", kFormat);
  manifest.set_int("shape.nodes", model.shape.nodes());
  manifest.set_int("shape.classes", model.shape.classes());
  manifest.set_double("horizon", model.horizon);
  manifest.set("feature.kind", model.feature.kind == FeatureMap::Kind::Identity ? "identity" : "linear");
  manifest.set_int("feature.input_dim", model.feature.input_dim());
  manifest.set("posterior", model.posterior ? "true" : "false");
  write_array(manifest, root, "omega", model.flow.omega);
  write_array(manifest, root, "feature_weight", model.feature.weight);
  write_array(manifest, root, "feature_bias", model.feature.bias);
  write_array(manifest, root, "prior_d", model.prior.d);
  write_array(manifest, root, "prior_q", model.prior.q);
  if (model.posterior) {
    write_array(manifest, root, "posterior_d", model.posterior->d);
    write_array(manifest, root, "posterior_q", model.posterior->q);
  } else {
    // A stale posterior from an earlier save must not be picked up again.
    fs::remove(root / "posterior_d.f64", ec);
    fs::remove(root / "posterior_q.f64", ec);
  }
  for (const auto& [k, v] : model.metadata) manifest.set("meta." + k, v);
  manifest.save((root / "manifest.txt").string());
}

ModelBundle load_model(const std::string& dir) {
  const fs::path root(dir);
  require(fs::exists(root / "manifest.txt"), ErrorKind::Io,
          "model: no manifest.txt in '" + dir + "'");
  const KvDocument manifest = KvDocument::load((root / "manifest.txt").string());
  require(manifest.has("format") && manifest.get("format") == kFormat, ErrorKind::Format,
          "model: unknown manifest format");
  ModelBundle m;
  m.shape = GraphShape(static_cast<int>(manifest.get_int("shape.nodes")),
                       static_cast<int>(manifest.get_int("shape.classes")));
  m.horizon = manifest.get_double("horizon");
  const std::string& kind = manifest.get("feature.kind");
  require(kind == "identity" || kind == "linear", ErrorKind::Format,
          "model: unknown feature kind '" + kind + "'");
  m.feature.kind = kind == "identity" ? FeatureMap::Kind::Identity : FeatureMap::Kind::Linear;
  m.feature.weight = read_array(manifest, root, "feature_weight");
  m.feature.bias = column(read_array(manifest, root, "feature_bias"), "feature_bias");
  require(m.feature.input_dim() == manifest.get_int("feature.input_dim"), ErrorKind::Format,
          "model: feature input dimension mismatch");
  m.flow = {m.shape, read_array(manifest, root, "omega")};
  m.prior = {m.shape, column(read_array(manifest, root, "prior_d"), "prior_d"),
             column(read_array(manifest, root, "prior_q"), "prior_q")};
  const std::string& has_post = manifest.get("posterior");
  require(has_post == "true" || has_post == "false", ErrorKind::Format,
          "model: posterior flag must be true or false");
  if (has_post == "true") {
    m.posterior = pushforward::LowRankCov{
        m.shape, column(read_array(manifest, root, "posterior_d"), "posterior_d"),
        column(read_array(manifest, root, "posterior_q"), "posterior_q")};
  }
  for (const auto& [k, v] : manifest.entries()) {
    if (k.rfind("meta.", 0) == 0) m.metadata.emplace_back(k.substr(5), v);
  }
  m.validate();
  return m;
}

std::string model_digest(const std::string& dir) {
  const KvDocument manifest = KvDocument::load((fs::path(dir) / "manifest.txt").string());
  return to_hex(sha256(manifest.str()));
}

}  // namespace ldaf
