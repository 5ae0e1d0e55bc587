#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"
#include "modis/dataset.hpp"
#include "modis/matrix.hpp"
#include "modis/model.hpp"

namespace modis::eval {

/// Row-wise argmax; ties go to the smallest index.
std::vector<int> argmax_rows(const Matrix& logits);

/// Class prediction for every record: encode with the record's own modality
/// (mean path), then argmax of the class head. Records are returned
/// modality by modality, in dataset order.
std::vector<int> predict_class(const model::ModelParams& params, const UnpairedDataset& ds);

/// Mean over the classes present in y_true of the per-class recall.
double balanced_accuracy(std::span<const int> y_true, std::span<const int> y_pred);
/// Mutual information normalized by the arithmetic mean of the two entropies.
double nmi(std::span<const int> y_true, std::span<const int> y_pred);
/// Hubert-Arabie adjusted Rand index.
double ari(std::span<const int> y_true, std::span<const int> y_pred);
/// K × K counts; rows are true classes, columns predictions.
Matrix confusion_matrix(std::span<const int> y_true, std::span<const int> y_pred, std::size_t n_classes);

/// Mean over unordered pairs of ||x_i - x_j||^2 / p.
double mean_pairwise_mse(const Matrix& x);

struct MseTable {
  Matrix mse;                    // (source × target), per-feature squared error
  std::vector<double> baseline;  // per target modality: mean pairwise MSE of the ground truth
  std::vector<std::size_t> n;    // test records per source modality
};

/// Entry (m, m') averages ||translate(m -> m', x) - x^(m')||^2 / p_m' over the
/// records of modality m; ground truth rows come from `paired` via pair_id.
MseTable mse_matrix(const model::ModelParams& params, const UnpairedDataset& test, const PairedDataset& paired);

struct Projection {
  Matrix coords;                        // n × 2
  std::vector<double> variance_fraction;  // per component
  std::vector<int> modality;
  std::vector<int> label;
};

/// Top-2 principal component scores of the pooled latent means.
Projection latent_projection(const model::ModelParams& params, const UnpairedDataset& ds);

struct MetricsReport {
  double bacc = 0, nmi = 0, ari = 0;
  std::vector<double> bacc_per_modality;
  std::vector<double> recall_per_class;  // NaN for classes absent from the test labels
  Matrix confusion;
  std::vector<Matrix> confusion_per_modality;
  std::optional<MseTable> mse;
  std::size_t n_evaluated = 0;
};

MetricsReport evaluate(const model::ModelParams& params, const UnpairedDataset& test,
                       const PairedDataset* paired = nullptr);

nlohmann::json to_json(const MetricsReport& report);

/// Writes metrics.json, confusion_overall.csv, confusion_<m>.csv,
/// mse_matrix.csv (when available) and latent2d.csv into `dir`.
void write_evaluation(const std::filesystem::path& dir, const MetricsReport& report, const Projection& projection);

}  // namespace modis::eval
