#include "ldaf/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>
#include <sstream>

#include "ldaf/error.hpp"
#include "ldaf/hash.hpp"
#include "ldaf/kvtext.hpp"

namespace ldaf {

namespace {

constexpr char kMagic[4] = {'L', 'D', 'A', 'F'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 4 + 4 + 8 + 8 + 4;
constexpr std::size_t kDigestBytes = 8;

class Writer {
 public:
  explicit Writer(std::vector<std::uint8_t>& out) : out_(out) {}
  template <class T>
  void put(T value) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    const U bits = std::bit_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }

 private:
  std::vector<std::uint8_t>& out_;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& in, std::size_t end) : in_(in), end_(end) {}
  template <class T>
  T get() {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    require(pos_ + sizeof(U) <= end_, ErrorKind::Format, "feature file: truncated");
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(in_[pos_ + i]) << (8 * i);
    pos_ += sizeof(U);
    return std::bit_cast<T>(bits);
  }

 private:
  const std::vector<std::uint8_t>& in_;
  std::size_t end_;
  std::size_t pos_ = 4;
};

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::Io, "cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Orthonormal basis of the zero-sum subspace of R^c, c x (c - 1) (Helmert).
Matrix helmert(int c) {
  Matrix h = Matrix::Zero(c, c - 1);
  for (int j = 0; j < c - 1; ++j) {
    const double norm = std::sqrt(static_cast<double>((j + 1) * (j + 2)));
    for (int i = 0; i <= j; ++i) h(i, j) = 1.0 / norm;
    h(j + 1, j) = -static_cast<double>(j + 1) / norm;
  }
  return h;
}

}  // namespace

void Dataset::validate() const {
  require(classes >= 2, ErrorKind::InvalidArgument, "dataset: at least two classes required");
  require(static_cast<int>(labels.size()) == rows() && static_cast<int>(splits.size()) == rows(),
          ErrorKind::ShapeMismatch, "dataset: labels and split tags must match the row count");
  for (int y : labels) {
    require(y >= 0 && y < classes, ErrorKind::Format,
            "dataset: label " + std::to_string(y) + " out of range");
  }
  require(features.allFinite(), ErrorKind::Format, "dataset: non-finite feature values");
}

std::vector<int> Dataset::indices(Split split) const {
  std::vector<int> out;
  for (int i = 0; i < rows(); ++i) {
    if (splits[i] == split) out.push_back(i);
  }
  return out;
}

Dataset Dataset::subset(Split split) const {
  const std::vector<int> idx = indices(split);
  Dataset out;
  out.classes = classes;
  out.features.resize(static_cast<Eigen::Index>(idx.size()), dim());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    out.features.row(static_cast<Eigen::Index>(r)) = features.row(idx[r]);
    out.labels.push_back(labels[idx[r]]);
  }
  out.splits.assign(idx.size(), split);
  return out;
}

SyntheticKind parse_synthetic_kind(const std::string& name) {
  if (name == "gaussian_blobs" || name == "blobs") return SyntheticKind::GaussianBlobs;
  if (name == "ring") return SyntheticKind::Ring;
  fail(ErrorKind::Config, "unknown synthetic dataset kind '" + name + "'");
}

Dataset gen_synthetic(SyntheticKind kind, int m, int dim, int classes, std::uint64_t seed,
                      double separation) {
  require(classes >= 2, ErrorKind::InvalidArgument, "gen_synthetic: at least two classes");
  require(m >= classes, ErrorKind::InvalidArgument, "gen_synthetic: need m >= c");
  require(separation > 0.0, ErrorKind::InvalidArgument, "gen_synthetic: separation must be positive");
  Matrix centers;  // classes x dim
  if (kind == SyntheticKind::GaussianBlobs) {
    require(dim >= classes - 1, ErrorKind::InvalidArgument,
            "gen_synthetic: blobs need dim >= c - 1");
    // Scaled simplex vertices: pairwise distance `separation`.
    const double scale = separation / std::numbers::sqrt2;
    centers = Matrix::Zero(classes, dim);
    if (dim >= classes) {
      centers.leftCols(classes) = scale * Matrix::Identity(classes, classes);
    } else {
      centers = scale * helmert(classes);
    }
  } else {
    require(dim >= 2, ErrorKind::InvalidArgument, "gen_synthetic: ring needs dim >= 2");
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);

  Dataset ds;
  ds.classes = classes;
  ds.labels.resize(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) ds.labels[i] = i % classes;
  std::shuffle(ds.labels.begin(), ds.labels.end(), rng);
  ds.features.resize(m, dim);
  for (int i = 0; i < m; ++i) {
    const int y = ds.labels[i];
    for (int j = 0; j < dim; ++j) ds.features(i, j) = normal(rng);
    if (kind == SyntheticKind::GaussianBlobs) {
      ds.features.row(i) += centers.row(y);
    } else {
      const double r = (y + 1) * separation;
      const double t = angle(rng);
      ds.features(i, 0) += r * std::cos(t);
      ds.features(i, 1) += r * std::sin(t);
    }
  }
  ds.splits.assign(static_cast<std::size_t>(m), Split::Train);
  return ds;
}

void assign_splits(Dataset& ds, double val_fraction, double test_fraction, std::uint64_t seed,
                   int max_validation) {
  require(val_fraction >= 0.0 && test_fraction >= 0.0 && val_fraction + test_fraction < 1.0,
          ErrorKind::InvalidArgument, "split fractions must be non-negative and sum below 1");
  const int m = ds.rows();
  const int n_val =
      std::min(max_validation, static_cast<int>(std::lround(val_fraction * static_cast<double>(m))));
  const int n_test = static_cast<int>(std::lround(test_fraction * static_cast<double>(m)));
  require(n_val + n_test < m, ErrorKind::InvalidArgument, "splits leave no training rows");
  std::vector<int> order(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  ds.splits.assign(static_cast<std::size_t>(m), Split::Train);
  for (int i = 0; i < n_val; ++i) ds.splits[order[i]] = Split::Validation;
  for (int i = n_val; i < n_val + n_test; ++i) ds.splits[order[i]] = Split::Test;
}

std::vector<std::uint8_t> encode_features(const Dataset& ds) {
  require(static_cast<int>(ds.labels.size()) == ds.rows(), ErrorKind::ShapeMismatch,
          "encode_features: one label per row required");
  for (int y : ds.labels) {
    require(y >= 0 && y < ds.classes, ErrorKind::InvalidArgument,
            "encode_features: label " + std::to_string(y) + " out of range");
  }
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + 8 * ds.features.size() + 4 * ds.labels.size() + kDigestBytes);
  out.insert(out.end(), kMagic, kMagic + 4);
  Writer w(out);
  w.put(kVersion);
  w.put(static_cast<std::uint64_t>(ds.rows()));
  w.put(static_cast<std::uint64_t>(ds.dim()));
  w.put(static_cast<std::uint32_t>(ds.classes));
  for (int i = 0; i < ds.rows(); ++i) {
    for (int j = 0; j < ds.dim(); ++j) w.put(ds.features(i, j));
  }
  for (int y : ds.labels) w.put(static_cast<std::uint32_t>(y));
  const Sha256Digest digest = sha256(out.data(), out.size());
  out.insert(out.end(), digest.begin(), digest.begin() + kDigestBytes);
  return out;
}

Dataset decode_features(const std::vector<std::uint8_t>& bytes) {
  require(bytes.size() >= kHeaderBytes + kDigestBytes, ErrorKind::Format, "feature file: truncated");
  require(std::memcmp(bytes.data(), kMagic, 4) == 0, ErrorKind::Format, "feature file: bad magic");
  const std::size_t body = bytes.size() - kDigestBytes;
  Reader r(bytes, body);
  const auto version = r.get<std::uint32_t>();
  require(version == kVersion, ErrorKind::Format,
          "feature file: unsupported version " + std::to_string(version));
  const auto rows = r.get<std::uint64_t>();
  const auto dim = r.get<std::uint64_t>();
  const auto classes = r.get<std::uint32_t>();
  require(rows < (1ull << 31) && dim < (1ull << 31) && rows * dim < (1ull << 40),
          ErrorKind::Format, "feature file: implausible dimensions");
  require(kHeaderBytes + 8 * rows * dim + 4 * rows == body, ErrorKind::Format,
          "feature file: size does not match the declared dimensions (truncated?)");
  const Sha256Digest digest = sha256(bytes.data(), body);
  require(std::equal(digest.begin(), digest.begin() + kDigestBytes, bytes.begin() + body),
          ErrorKind::Format, "feature file: checksum mismatch");
  Dataset ds;
  ds.classes = static_cast<int>(classes);
  ds.features.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < ds.features.rows(); ++i) {
    for (Eigen::Index j = 0; j < ds.features.cols(); ++j) ds.features(i, j) = r.get<double>();
  }
  ds.labels.resize(rows);
  for (auto& y : ds.labels) {
    const auto v = r.get<std::uint32_t>();
    require(v < classes, ErrorKind::Format, "feature file: label out of range");
    y = static_cast<int>(v);
  }
  ds.splits.assign(rows, Split::Train);
  ds.validate();
  return ds;
}

void save_features(const Dataset& ds, const std::string& path) {
  const std::vector<std::uint8_t> bytes = encode_features(ds);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::Io, "cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(out.good(), ErrorKind::Io, "write failed for '" + path + "'");
}

Dataset load_features(const std::string& path) {
  if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0) {
    return load_features_csv(path);
  }
  return decode_features(read_file(path));
}

void save_features_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::Io, "cannot write '" + path + "'");
  out << "label";
  for (int j = 0; j < ds.dim(); ++j) out << ",f" << (j + 1);
  out << '\n';
  for (int i = 0; i < ds.rows(); ++i) {
    out << ds.labels[i];
    for (int j = 0; j < ds.dim(); ++j) out << ',' << format_double(ds.features(i, j));
    out << '\n';
  }
  require(out.good(), ErrorKind::Io, "write failed for '" + path + "'");
}

Dataset load_features_csv(const std::string& path, int classes) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::Io, "cannot open '" + path + "'");
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::Format, "csv: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line.rfind("label", 0) == 0, ErrorKind::Format, "csv: header must start with 'label'");
  const int dim = static_cast<int>(std::count(line.begin(), line.end(), ','));
  std::vector<double> values;
  std::vector<int> labels;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    int col = 0;
    while (std::getline(ss, cell, ',')) {
      const std::string where = "csv line " + std::to_string(line_no);
      if (col == 0) {
        const long long y = parse_int(cell, where);
        require(y >= 0, ErrorKind::Format, where + ": negative label");
        labels.push_back(static_cast<int>(y));
      } else {
        values.push_back(parse_double(cell, where));
      }
      ++col;
    }
    require(col == dim + 1, ErrorKind::Format,
            "csv line " + std::to_string(line_no) + ": expected " + std::to_string(dim + 1) +
                " fields");
  }
  Dataset ds;
  const int rows = static_cast<int>(labels.size());
  ds.features = Eigen::Map<RowMatrix>(values.data(), rows, dim);
  ds.labels = std::move(labels);
  const int max_label = rows ? *std::max_element(ds.labels.begin(), ds.labels.end()) : 0;
  ds.classes = classes > 0 ? classes : std::max(2, max_label + 1);
  ds.splits.assign(static_cast<std::size_t>(rows), Split::Train);
  ds.validate();
  return ds;
}

std::string dataset_digest(const Dataset& ds) {
  const std::vector<std::uint8_t> bytes = encode_features(ds);
  return to_hex(sha256(bytes.data(), bytes.size()));
}

}  // namespace ldaf
