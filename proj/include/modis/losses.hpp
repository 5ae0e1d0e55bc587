#pragma once

#include <span>
#include <vector>

#include "json.hpp"
#include "modis/autograd.hpp"
#include "modis/matrix.hpp"
#include "modis/model.hpp"

namespace modis::losses {

// Modality logit tables: entry j is the modality head evaluated on the
// modality-j latent sub-batch (B × M). s[i][j] denotes column i of entry j,
// i.e. the i-th modality logit on modality-j latents; s[i][i] is the "real"
// score of modality i.

/// (1/n) sum_i ||x_i - xhat_i||^2.
ad::Var recon_loss(const ad::Var& x, const ad::Var& xhat);
double recon_loss(const Matrix& x, const Matrix& xhat);

/// Mean over rows of 0.5 * sum_l (mu^2 + sigma^2 - 1 - ln sigma^2).
ad::Var kl_loss(const ad::Var& mu, const ad::Var& logvar);
/// Takes sigma (not log-variance); sigma must be positive.
double kl_loss(const Matrix& mu, const Matrix& sigma);

/// Per-row a = -sum_i ( s[i][i] - sum_{j != i} s[i][j] ), a B × 1 column.
ad::Var relativistic_disc_argument(std::span<const ad::Var> logits);
/// Per-row a' = -sum_i sum_{j != i} ( s[i][j] - s[i][i] ).
ad::Var relativistic_vae_argument(std::span<const ad::Var> logits);
/// mean softplus(a).
ad::Var relativistic_disc_loss(std::span<const ad::Var> logits);
/// mean softplus(a').
ad::Var relativistic_vae_loss(std::span<const ad::Var> logits);

/// (gamma / 2) sum_i mean_b ||d s[i][i]_b / d z^(i)_b||^2. `latents` must be
/// gradient leaves from which `logits` were computed. The result stays
/// differentiable with respect to the discriminator weights.
ad::Var gradient_penalty(std::span<const ad::Var> latents, std::span<const ad::Var> logits, double gamma);

/// Cross-entropy over rows with label >= 0; label kUnlabeled rows are skipped.
/// Returns 0 when no row is labeled.
ad::Var class_loss(const ad::Var& class_logits, std::span<const int> labels);
double class_loss(const Matrix& class_logits, std::span<const int> labels);

struct ClusteringTerms {
  ad::Var c1, c2, c3;
};

/// Kernel s_ij = exp(-||h_i - h_j||^2 / (2 sigma^2)); `alpha` holds n soft
/// assignments (rows on the simplex). c1 separates the per-class assignment
/// columns, c2 pushes assignments to simplex corners, c3 is the negative
/// entropy of the mean assignment.
ClusteringTerms clustering_loss(const ad::Var& h, const ad::Var& alpha, double sigma);

struct ClusteringValues {
  double c1 = 0, c2 = 0, c3 = 0;
};
ClusteringValues clustering_loss(const Matrix& h, const Matrix& alpha, double sigma);

/// Median of the pairwise Euclidean distances between rows of h. Falls back
/// to the mean positive distance when over half the pairs coincide; throws
/// NumericalError when every row is identical.
double median_bandwidth(const Matrix& h);

struct RelativisticValues {
  double rel_d = 0;
  double grad_penalty = 0;
};
/// rel_D from a logit table alone (no penalty).
double relativistic_disc_loss(std::span<const Matrix> logits);
double relativistic_vae_loss(std::span<const Matrix> logits);
/// rel_D and the gradient penalty of the discriminator in `params` on one
/// latent sub-batch per modality.
RelativisticValues relativistic_disc_loss(const model::ModelParams& params, std::span<const Matrix> latents,
                                          double gamma);

/// Every named term of one optimization step.
struct LossReport {
  std::vector<double> recon;
  std::vector<double> kl;
  double rel_d = 0;
  double rel_vae = 0;
  double grad_penalty = 0;
  double class_ce = 0;
  double c1 = 0, c2 = 0, c3 = 0;
  double total_d = 0;
  double total_vae = 0;
  double beta = 0;
  double gamma = 0;
  double sigma_kernel = 0;
  std::size_t labeled = 0;
};

/// rel_D + grad_penalty + class_ce + (c1 + c2 + c3). Throws NumericalError
/// if a part is not finite.
double total_disc_loss(const LossReport& parts);
/// sum_m (recon_m + beta kl_m) + rel_VAE + class_ce + (c1 + c2 + c3).
double total_vae_loss(const LossReport& parts, double beta);

nlohmann::json to_json(const LossReport& report);

}  // namespace modis::losses
