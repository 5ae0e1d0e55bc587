#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "modis/matrix.hpp"

namespace modis::prep {

enum class Kind { beta_values, counts, continuous };

/// Samples × features. Missing entries are NaN.
struct FeatureMatrix {
  Matrix values;
  std::vector<std::string> row_ids;
  std::vector<std::string> col_ids;
  Kind kind = Kind::continuous;

  std::size_t rows() const noexcept { return values.rows(); }
  std::size_t cols() const noexcept { return values.cols(); }
  bool has_missing() const noexcept;
  /// Checks ids against the value shape and the kind's value range.
  void validate() const;
  FeatureMatrix select_columns(const std::vector<std::size_t>& keep) const;
};

/// Drops columns whose missing-or-zero fraction is >= max_missing_frac or
/// whose sample standard deviation (over present entries) is < min_sd.
FeatureMatrix filter_methylation(const FeatureMatrix& m, double max_missing_frac = 0.2, double min_sd = 0.1);

/// Replaces each missing entry with the mean of the present entries of its column.
FeatureMatrix impute_mean(const FeatureMatrix& m);

inline constexpr double kBetaClamp = 1e-6;

/// M = log2(beta / (1 - beta)) after clamping beta to [1e-6, 1 - 1e-6].
FeatureMatrix beta_to_m(const FeatureMatrix& m);
/// Inverse of beta_to_m on interior points: beta = 2^M / (1 + 2^M).
FeatureMatrix m_to_beta(const FeatureMatrix& m);

/// Drops columns whose fraction of entries that are missing or < min_count is
/// >= max_missing_frac.
FeatureMatrix filter_counts(const FeatureMatrix& m, double min_count = 5.0, double max_missing_frac = 0.9);

struct SizeFactorResult {
  FeatureMatrix normalized;
  std::vector<double> size_factors;  // one per row
};

/// Median-of-ratios normalization. Reference geometric means use only the
/// columns that are strictly positive in every row.
SizeFactorResult median_of_ratios(const FeatureMatrix& m);

/// Entrywise log2(x + 1); negative entries are rejected.
FeatureMatrix log2p1(const FeatureMatrix& m);

struct PcaResult {
  Matrix scores;                     // n × k
  std::vector<double> eigenvalues;   // top k, descending (variance along each direction)
  double explained_fraction = 0.0;   // sum(top k) / total variance
};

/// Principal component scores of already-centred data. Each component's sign
/// is fixed so its largest-magnitude score is positive.
PcaResult principal_components(const Matrix& centered, std::size_t n_components);

/// Standardizes columns (population sd; constant columns become 0) and
/// projects onto the top `n_components` principal directions.
PcaResult standardize_pca(const FeatureMatrix& m, std::size_t n_components);

Kind parse_kind(const std::string& name);
std::string kind_name(Kind kind);

/// CSV with header `sample_id,<feature ids>`; empty/NA cells are missing.
FeatureMatrix read_feature_csv(const std::filesystem::path& path, Kind kind);
void write_feature_csv(const std::filesystem::path& path, const FeatureMatrix& m);

}  // namespace modis::prep
