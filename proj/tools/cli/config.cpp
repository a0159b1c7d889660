#include "config.hpp"

#include <functional>
#include <sstream>

#include "ldaf/dataset.hpp"
#include "ldaf/error.hpp"
#include "ldaf/hash.hpp"
#include "ldaf/quadrature.hpp"

namespace ldaf::cli {

namespace {

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

int to_int(const std::string& v, const std::string& key) {
  const long long x = parse_int(v, key);
  require(x >= std::numeric_limits<int>::min() && x <= std::numeric_limits<int>::max(),
          ErrorKind::Config, key + ": value out of range");
  return static_cast<int>(x);
}

std::uint64_t to_seed(const std::string& v, const std::string& key) {
  const long long x = parse_int(v, key);
  require(x >= 0, ErrorKind::Config, key + ": seeds must be non-negative");
  return static_cast<std::uint64_t>(x);
}

bool to_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail(ErrorKind::Config, key + ": expected true or false, got '" + v + "'");
}

template <typename T, typename Parse>
std::vector<T> to_list(const std::string& v, const std::string& key, Parse parse) {
  std::vector<T> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse(item, key));
  require(!out.empty(), ErrorKind::Config, key + ": empty list");
  return out;
}

template <typename T, typename Format>
std::string join(const std::vector<T>& xs, Format format) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    out += format(xs[i]);
  }
  return out;
}

std::string dstr(double x) { return format_double(x); }
template <typename T>
std::string istr(T x) { return std::to_string(x); }

#define LDAF_INT(name, member)                                                              \
  Field {                                                                                   \
    name, [](RunConfig& c, const std::string& v) { c.member = to_int(v, name); },           \
        [](const RunConfig& c) { return istr(c.member); }                                   \
  }
#define LDAF_LONG(name, member)                                                             \
  Field {                                                                                   \
    name, [](RunConfig& c, const std::string& v) { c.member = parse_int(v, name); },        \
        [](const RunConfig& c) { return istr(c.member); }                                   \
  }
#define LDAF_SEED(name, member)                                                             \
  Field {                                                                                   \
    name, [](RunConfig& c, const std::string& v) { c.member = to_seed(v, name); },          \
        [](const RunConfig& c) { return istr(c.member); }                                   \
  }
#define LDAF_DOUBLE(name, member)                                                           \
  Field {                                                                                   \
    name, [](RunConfig& c, const std::string& v) { c.member = parse_double(v, name); },     \
        [](const RunConfig& c) { return dstr(c.member); }                                   \
  }
#define LDAF_STRING(name, member)                                                           \
  Field {                                                                                   \
    name, [](RunConfig& c, const std::string& v) { c.member = v; },                         \
        [](const RunConfig& c) { return c.member; }                                         \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table{
      LDAF_STRING("dataset.kind", dataset.kind),
      LDAF_STRING("dataset.path", dataset.path),
      LDAF_INT("dataset.m", dataset.m),
      LDAF_INT("dataset.dim", dataset.dim),
      LDAF_INT("dataset.c", dataset.c),
      LDAF_SEED("dataset.seed", dataset.seed),
      LDAF_DOUBLE("dataset.val_fraction", dataset.val_fraction),
      LDAF_DOUBLE("dataset.test_fraction", dataset.test_fraction),
      LDAF_DOUBLE("dataset.separation", dataset.separation),
      LDAF_SEED("dataset.split_seed", dataset.split_seed),
      LDAF_INT("model.n_nodes", model.n_nodes),
      LDAF_DOUBLE("model.T", model.T),
      LDAF_INT("prior.steps", prior.steps),
      LDAF_DOUBLE("prior.lr", prior.lr),
      LDAF_DOUBLE("prior.momentum", prior.momentum),
      LDAF_DOUBLE("prior.weight_decay", prior.weight_decay),
      LDAF_SEED("prior.seed", prior.seed),
      LDAF_INT("prior.batch_size", prior.batch_size),
      LDAF_SEED("prior.cov_seed", prior.cov_seed),
      LDAF_INT("posterior.alternations", posterior.alternations),
      LDAF_INT("posterior.epochs", posterior.epochs),
      LDAF_DOUBLE("posterior.lr", posterior.lr),
      LDAF_INT("posterior.n_points", posterior.n_points),
      Field{"certify.epsilon",
            [](RunConfig& c, const std::string& v) {
              c.certify.epsilon = to_list<double>(v, "certify.epsilon", parse_double);
            },
            [](const RunConfig& c) { return join(c.certify.epsilon, dstr); }},
      LDAF_INT("certify.n_points", certify.n_points),
      Field{"certify.padding",
            [](RunConfig& c, const std::string& v) {
              c.certify.padding = to_bool(v, "certify.padding");
            },
            [](const RunConfig& c) { return std::string(c.certify.padding ? "true" : "false"); }},
      LDAF_INT("certify.replicates", certify.replicates),
      LDAF_SEED("certify.replicate_seed", certify.replicate_seed),
      Field{"bench.point_counts",
            [](RunConfig& c, const std::string& v) {
              c.bench.point_counts = to_list<int>(v, "bench.point_counts", to_int);
            },
            [](const RunConfig& c) { return join(c.bench.point_counts, istr<int>); }},
      LDAF_LONG("bench.mc_reference_points", bench.mc_reference_points),
      LDAF_SEED("bench.mc_seed", bench.mc_seed),
      LDAF_STRING("bench.loss", bench.loss),
      LDAF_INT("bench.max_data", bench.max_data),
  };
  return table;
}

#undef LDAF_INT
#undef LDAF_LONG
#undef LDAF_SEED
#undef LDAF_DOUBLE
#undef LDAF_STRING

void check(bool ok, const std::string& message) { require(ok, ErrorKind::Config, message); }

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const Field& f : fields()) {
    if (key == f.key) {
      try {
        f.set(*this, value);
      } catch (const Error& e) {
        fail(ErrorKind::Config, e.what());
      }
      return;
    }
  }
  fail(ErrorKind::Config, "unknown config key '" + key + "'");
}

void RunConfig::merge(const KvDocument& doc) {
  for (const auto& [k, v] : doc.entries()) set(k, v);
}

void RunConfig::validate() const {
  (void)parse_synthetic_kind(dataset.kind);
  check(dataset.m >= dataset.c, "dataset.m must be at least dataset.c");
  check(dataset.dim >= 1, "dataset.dim must be positive");
  check(dataset.c >= 2, "dataset.c must be at least 2");
  check(dataset.val_fraction >= 0.0 && dataset.test_fraction >= 0.0 &&
            dataset.val_fraction + dataset.test_fraction <= 1.0,
        "dataset.val_fraction and dataset.test_fraction must be non-negative and sum to at most 1");
  check(dataset.separation > 0.0, "dataset.separation must be positive");
  check(model.n_nodes >= 1, "model.n_nodes must be positive");
  check(model.T > 0.0, "model.T must be positive");
  check(prior.steps >= 0, "prior.steps must be non-negative");
  check(prior.lr >= 0.0, "prior.lr must be non-negative");
  check(prior.momentum >= 0.0 && prior.momentum < 1.0, "prior.momentum must lie in [0, 1)");
  check(prior.weight_decay >= 0.0, "prior.weight_decay must be non-negative");
  check(prior.batch_size >= 0, "prior.batch_size must be non-negative");
  check(posterior.alternations >= 0, "posterior.alternations must be non-negative");
  check(posterior.epochs >= 0, "posterior.epochs must be non-negative");
  check(posterior.lr >= 0.0, "posterior.lr must be non-negative");
  check(posterior.n_points >= 1, "posterior.n_points must be positive");
  for (double e : certify.epsilon) check(e > 0.0 && e < 1.0, "certify.epsilon must lie in (0, 1)");
  check(certify.n_points >= 1, "certify.n_points must be positive");
  check(certify.replicates >= 0, "certify.replicates must be non-negative");
  for (int n : bench.point_counts) check(n >= 1, "bench.point_counts must be positive");
  check(bench.mc_reference_points >= 1, "bench.mc_reference_points must be positive");
  check(bench.loss == "cross_entropy" || bench.loss == "01",
        "bench.loss must be cross_entropy or 01");
  check(bench.max_data >= 1, "bench.max_data must be positive");
}

RunConfig RunConfig::load(const std::string& path) {
  RunConfig cfg;
  cfg.merge(KvDocument::load(path));
  return cfg;
}

KvDocument RunConfig::to_document() const {
  KvDocument doc;
  for (const Field& f : fields()) doc.set(f.key, f.get(*this));
  return doc;
}

std::string RunConfig::digest() const { return to_hex(sha256(to_document().str())); }

}  // namespace ldaf::cli
