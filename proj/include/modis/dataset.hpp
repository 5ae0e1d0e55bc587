#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "modis/matrix.hpp"

namespace modis {

/// Marker for a record without a class label (stored as -1 on disk).
inline constexpr int kUnlabeled = -1;
/// Marker for a record whose paired ground truth is unknown.
inline constexpr std::int64_t kNoPair = -1;

/// Every modality observed on the same samples: row i of each matrix is one
/// underlying sample. Labels are 0-based class indices.
struct PairedDataset {
  std::vector<Matrix> modalities;
  std::vector<int> labels;
  std::size_t n_classes = 0;

  std::size_t n_samples() const noexcept { return labels.size(); }
  std::size_t n_modalities() const noexcept { return modalities.size(); }
  std::vector<std::size_t> dims() const;
  /// Throws DataError if row counts or labels are inconsistent.
  void validate() const;
};

/// All records observed in one modality.
struct ModalityBlock {
  Matrix x;
  std::vector<std::int64_t> sample_id;
  std::vector<int> label;             // kUnlabeled when unknown to training
  std::vector<std::int64_t> pair_id;  // evaluation-only ground truth index

  std::size_t size() const noexcept { return x.rows(); }
  /// Records at `rows`, in that order.
  ModalityBlock subset(const std::vector<std::size_t>& rows) const;
};

/// Records that each carry exactly one modality, grouped by modality.
struct UnpairedDataset {
  std::size_t n_classes = 0;
  std::vector<ModalityBlock> modalities;
  std::uint64_t seed = 0;
  /// Scenario steps applied to produce this dataset, oldest first.
  std::vector<std::string> provenance;

  std::size_t n_modalities() const noexcept { return modalities.size(); }
  std::size_t size() const noexcept;
  std::vector<std::size_t> dims() const;
  std::size_t labeled_count() const noexcept;
  /// Records in modality m whose observed label is `label` (may be kUnlabeled).
  std::vector<std::size_t> cell(int label, std::size_t m) const;
  std::size_t cell_count(int label, std::size_t m) const { return cell(label, m).size(); }
  void validate() const;
};

// On-disk layout: a directory with dataset.json and modality_<m>.csv for
// m = 0..M-1. CSV header: sample_id,pair_id,class,f0,...,f{p-1}.
void write_dataset(const std::filesystem::path& dir, const UnpairedDataset& ds);
UnpairedDataset read_dataset(const std::filesystem::path& dir);

/// Stores a paired dataset in the same layout (sample_id = pair_id = row).
void write_paired(const std::filesystem::path& dir, const PairedDataset& ds, std::uint64_t seed);
PairedDataset read_paired(const std::filesystem::path& dir);

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);
/// Parses a double; empty, "NA" and "nan" become NaN. Throws DataError otherwise.
double parse_double(std::string_view text);
/// Splits one CSV line on commas (no quoting support; ids must not contain commas).
std::vector<std::string_view> split_csv_line(std::string_view line);

}  // namespace modis
