#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"
#include "modis/checkpoint.hpp"
#include "modis/dataset.hpp"
#include "modis/losses.hpp"
#include "modis/model.hpp"
#include "modis/optimizer.hpp"

namespace modis::train {

struct TrainConfig {
  std::size_t epochs = 300;
  std::size_t batch_size = 32;  // per modality
  double learning_rate = 1e-4;
  double beta = 1e-4;  // KL weight
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double gamma = 10.0;  // zero-centered gradient penalty weight
  std::size_t latent_dim = 16;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // epochs between checkpoints; 0 = final only
  std::size_t disc_steps = 1;        // discriminator steps per VAE step
  bool dry_run = false;              // return the initial parameters untouched

  std::vector<std::size_t> encoder_hidden{256, 64};
  std::vector<std::size_t> decoder_hidden{64, 256};
  std::vector<std::size_t> trunk{128, 64, 32};
  double leaky_slope = 0.2;

  /// Synthetic-data profile: 300 epochs, batch 32, lr 1e-4, beta 1e-4, beta1 0.5, gamma 10.
  static TrainConfig synthetic_profile();
  /// Real-data profile: 4000 epochs, beta 1e-6, gamma 160.
  static TrainConfig real_data_profile();

  /// Throws ConfigError naming the offending field.
  void validate() const;
  model::ArchitectureSpec architecture(const std::vector<std::size_t>& dims, std::size_t n_classes) const;
  AdamConfig adam() const { return {learning_rate, adam_beta1, adam_beta2, adam_eps}; }
};

/// Field names mirror TrainConfig; `lambda_r` is accepted for `gamma`.
/// Unknown fields and bad values raise ConfigError naming the field.
TrainConfig config_from_json(const nlohmann::json& j, const TrainConfig& base = {});
nlohmann::json to_json(const TrainConfig& cfg);

struct SubBatch {
  Matrix x;
  std::vector<int> labels;
  std::vector<std::size_t> rows;  // record indices in the modality block
};

/// One equally sized sub-batch per modality.
struct ModalBatch {
  std::vector<SubBatch> modalities;
  std::size_t size() const noexcept { return modalities.empty() ? 0 : modalities.front().rows.size(); }
};

/// ceil(largest modality / B).
std::size_t steps_per_epoch(const UnpairedDataset& ds, std::size_t batch_size);

/// Each modality is shuffled independently for (seed, epoch); modalities
/// shorter than the epoch wrap around.
std::vector<ModalBatch> make_batches(const UnpairedDataset& ds, std::size_t batch_size, std::uint64_t seed,
                                     std::uint64_t epoch);

/// A loss graph on a tape plus its itemized values.
struct Objective {
  ad::Var total;
  losses::LossReport report;
};

/// L_D on `batch`. Encoder outputs enter as constants and the sampled
/// latents as gradient leaves; `noise` holds one B × d block per modality.
/// The kernel bandwidth defaults to the median heuristic on h.
Objective discriminator_objective(const model::Network& net, const ModalBatch& batch, const TrainConfig& cfg,
                                  std::span<const Matrix> noise, std::optional<double> bandwidth = std::nullopt);
/// L_VAE on `batch`, same conventions.
Objective vae_objective(const model::Network& net, const ModalBatch& batch, const TrainConfig& cfg,
                        std::span<const Matrix> noise, std::optional<double> bandwidth = std::nullopt);

/// One Adam step on L_D touching only discriminator tensors. `step` selects
/// the reparameterization noise.
losses::LossReport train_step_discriminator(model::ModelParams& params, AdamState& state, const ModalBatch& batch,
                                            const TrainConfig& cfg, std::uint64_t step);

/// One Adam step on L_VAE touching only encoder/decoder tensors.
losses::LossReport train_step_vaes(model::ModelParams& params, AdamState& state, const ModalBatch& batch,
                                   const TrainConfig& cfg, std::uint64_t step);

struct StepRecord {
  std::uint64_t epoch = 0;
  std::uint64_t step = 0;
  losses::LossReport disc;
  losses::LossReport vae;
};

nlohmann::json to_json(const StepRecord& r);

struct FitOptions {
  /// When set: history.jsonl, ckpt/epoch_<n>/ and ckpt/final/ are written here.
  std::optional<std::filesystem::path> out_dir;
  std::optional<std::filesystem::path> resume_from;
  /// Assert after every step that the other group's tensors are bit-identical.
  bool verify_isolation = false;
  /// Keep every StepRecord in FitResult::history.
  bool keep_history = true;
  std::function<void(const StepRecord&)> on_step;
};

struct FitResult {
  model::ModelParams params;
  std::vector<StepRecord> history;
  TrainingState state;
};

/// Alternates discriminator and VAE steps over `epochs` epochs.
FitResult fit(const UnpairedDataset& train_set, const TrainConfig& cfg, const FitOptions& options = {});

struct GridSpec {
  std::vector<double> beta;
  std::vector<std::size_t> latent_dim;
  std::vector<double> learning_rate;
  std::vector<double> gamma;
  std::size_t folds = 5;
};

struct GridRow {
  TrainConfig config;
  std::vector<double> fold_bacc;
  std::vector<double> fold_mse;
  double mean_bacc = 0;
  double mean_mse = 0;
};

/// Fold index per record, stratified by (class, modality): within each
/// stratum records are shuffled and dealt round-robin.
std::vector<std::vector<std::size_t>> stratified_folds(const UnpairedDataset& ds, std::size_t k, std::uint64_t seed);

/// k-fold cross-validation of every grid point; rows sorted by mean
/// validation B-ACC (descending) then reconstruction MSE (ascending).
std::vector<GridRow> grid_search_cv(const UnpairedDataset& ds, const TrainConfig& base, const GridSpec& grid);

GridSpec grid_from_json(const nlohmann::json& j);
void write_grid_csv(const std::filesystem::path& path, const std::vector<GridRow>& rows);

}  // namespace modis::train
