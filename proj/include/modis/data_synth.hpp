#pragma once

#include <cstdint>
#include <utility>
#include <variant>
#include <vector>

#include "modis/dataset.hpp"

namespace modis::synth {

/// Parameters of the class-conditional latent factor generator.
///
/// Each class k owns a center in a `latent_factor_dim`-dimensional factor
/// space; centers are pairwise `class_separation` apart when the factor space
/// has at least as many dimensions as there are classes. A sample draws its
/// factor as center + N(0, noise_sd^2) and every modality observes a fixed
/// random affine image of that shared factor plus N(0, noise_sd^2) noise.
struct GeneratorConfig {
  std::size_t n_samples = 11500;
  std::size_t n_classes = 5;
  std::vector<std::size_t> modality_dims{367, 131, 160};
  double class_separation = 6.0;
  std::size_t latent_factor_dim = 8;
  double noise_sd = 1.0;
  /// Multiplies every generated feature value.
  double feature_scale = 1.0;
  std::uint64_t seed = 0;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

PairedDataset generate_paired(const GeneratorConfig& config);

/// Keeps one modality per sample, balanced within every class.
UnpairedDataset unpair(const PairedDataset& paired, std::uint64_t seed);

/// Stratified by (class, modality); each stratum sends floor(size * ratio)
/// records to the test side. Returns {train, test}.
std::pair<UnpairedDataset, UnpairedDataset> split_train_test(const UnpairedDataset& ds, double test_ratio,
                                                             std::uint64_t seed);

/// Keep labels on round(f * cell) records of every labeled (class, modality) cell.
struct LabelFraction {
  double fraction = 1.0;
};
/// Keep labels on exactly `count` records of every labeled (class, modality) cell.
struct LabelsPerPair {
  std::size_t count = 0;
};
using LabelMask = std::variant<LabelFraction, LabelsPerPair>;

UnpairedDataset mask_labels(const UnpairedDataset& ds, const LabelMask& mode, std::uint64_t seed);

/// Reduces `target_class` to exactly `per_modality` records in every modality.
UnpairedDataset subsample_class(const UnpairedDataset& ds, int target_class, std::size_t per_modality,
                                std::uint64_t seed);

struct ClassModality {
  int label = 0;
  std::size_t modality = 0;
};

/// Reduces each listed (class, modality) cell to exactly `keep` records.
UnpairedDataset drop_modality_class(const UnpairedDataset& ds, const std::vector<ClassModality>& cells,
                                    std::size_t keep, std::uint64_t seed);

}  // namespace modis::synth
