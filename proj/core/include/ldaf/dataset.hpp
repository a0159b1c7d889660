#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ldaf/types.hpp"

namespace ldaf {

enum class Split : std::uint8_t { Train, Validation, Test };

/// Feature rows with labels in [0, classes) and one split tag per row.
struct Dataset {
  RowMatrix features;
  std::vector<int> labels;
  int classes = 2;
  std::vector<Split> splits;

  [[nodiscard]] int rows() const noexcept { return static_cast<int>(features.rows()); }
  [[nodiscard]] int dim() const noexcept { return static_cast<int>(features.cols()); }

  /// Throws on inconsistent sizes or out-of-range labels.
  void validate() const;
  /// Rows tagged `split`, in their original order.
  [[nodiscard]] std::vector<int> indices(Split split) const;
  /// A dataset containing only the rows tagged `split` (all tagged `split`).
  [[nodiscard]] Dataset subset(Split split) const;
};

enum class SyntheticKind { GaussianBlobs, Ring };

SyntheticKind parse_synthetic_kind(const std::string& name);

/// Balanced synthetic classification data with unit-variance noise. Blob
/// centers are pairwise `separation` apart; ring classes are concentric
/// circles in the first two coordinates, radii `separation` apart.
/// All rows are tagged Train.
Dataset gen_synthetic(SyntheticKind kind, int m, int dim, int classes, std::uint64_t seed,
                      double separation = 4.0);

/// Seeded random partition: round(val_fraction * m) validation rows (capped
/// at `max_validation`), round(test_fraction * m) test rows, the rest train.
void assign_splits(Dataset& ds, double val_fraction, double test_fraction, std::uint64_t seed,
                   int max_validation = 10000);

/// Binary feature file: "LDAF", u32 version 1, u64 rows, u64 dim, u32 classes,
/// rows*dim float64 row-major, rows u32 labels, then the first 8 bytes of the
/// SHA-256 of everything before. All little-endian.
std::vector<std::uint8_t> encode_features(const Dataset& ds);
Dataset decode_features(const std::vector<std::uint8_t>& bytes);
void save_features(const Dataset& ds, const std::string& path);
/// Loads the binary format, or CSV when the path ends in ".csv".
Dataset load_features(const std::string& path);

/// CSV with header `label,f1,...,fd`. The class count is max label + 1
/// unless given.
void save_features_csv(const Dataset& ds, const std::string& path);
Dataset load_features_csv(const std::string& path, int classes = 0);

/// Hex SHA-256 of the binary encoding (features, labels, class count).
std::string dataset_digest(const Dataset& ds);

}  // namespace ldaf
