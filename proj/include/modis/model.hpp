#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "modis/autograd.hpp"
#include "modis/matrix.hpp"

namespace modis::model {

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;

/// Layer widths of the per-modality VAEs and the shared discriminator.
///
/// Encoder m maps p_m through `encoder_hidden[m]` to two d-wide heads (mean
/// and log-variance). Decoder m maps d through `decoder_hidden[m]` to p_m.
/// The discriminator trunk has three LeakyReLU layers ending in h, which feeds
/// a modality head (M logits) and a class head (K logits).
struct ArchitectureSpec {
  std::vector<std::size_t> modality_dims;
  std::size_t n_classes = 0;
  std::size_t latent_dim = 16;
  std::vector<std::vector<std::size_t>> encoder_hidden;
  std::vector<std::vector<std::size_t>> decoder_hidden;
  std::vector<std::size_t> trunk{128, 64, 32};
  double leaky_slope = 0.2;

  /// Encoders p_m -> 256 -> 64 -> (d, d), mirrored decoders.
  static ArchitectureSpec defaults(std::vector<std::size_t> modality_dims, std::size_t n_classes,
                                   std::size_t latent_dim = 16);

  std::size_t n_modalities() const noexcept { return modality_dims.size(); }
  /// Throws ConfigError naming the offending field.
  void validate() const;
  /// Sum over all layers of (in + 1) * out.
  std::size_t parameter_count() const;
};

enum class Group { vae, discriminator };

struct Tensor {
  std::string name;
  Matrix value;
  Group group = Group::vae;
};

/// Weight matrix (in × out) and bias (1 × out) positions in ModelParams::tensors.
struct Linear {
  std::size_t weight = 0;
  std::size_t bias = 0;
};

struct Layout {
  std::vector<std::vector<Linear>> encoder_hidden;
  std::vector<Linear> encoder_mu;
  std::vector<Linear> encoder_logvar;
  std::vector<std::vector<Linear>> decoder;  // hidden layers then the output layer
  std::vector<Linear> trunk;
  Linear modality_head;
  Linear class_head;
};

/// All weights of the model. Tensor names follow
/// `enc<m>.hidden<l>.{weight,bias}`, `enc<m>.{mu,logvar}.{weight,bias}`,
/// `dec<m>.layer<l>.{weight,bias}`, `disc.trunk<l>.{weight,bias}`,
/// `disc.{modality,class}.{weight,bias}`.
struct ModelParams {
  ArchitectureSpec spec;
  std::uint64_t seed = 0;
  std::vector<Tensor> tensors;
  Layout layout;

  std::size_t parameter_count() const noexcept;
  const Tensor& find(const std::string& name) const;
  bool all_finite() const noexcept;
};

/// Allocates zero-valued tensors for `spec`.
ModelParams zero_params(const ArchitectureSpec& spec);

/// Weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), rounded to
/// single precision so checkpoints round-trip exactly.
ModelParams init_params(const ArchitectureSpec& spec, std::uint64_t seed);

struct LatentGaussian {
  Matrix mu;
  Matrix logvar;
  Matrix sigma() const;
};

struct DiscriminatorOutput {
  Matrix modality_logits;
  Matrix class_logits;
  Matrix h;
};

/// ModelParams bound to a tape. Groups flagged trainable become gradient
/// leaves; the rest enter the tape as constants.
class Network {
 public:
  Network(ad::Tape& tape, const ModelParams& params, bool vae_trainable, bool disc_trainable);

  struct Encoded {
    ad::Var mu;
    ad::Var logvar;
  };
  struct Discriminated {
    ad::Var modality_logits;
    ad::Var class_logits;
    ad::Var h;
  };

  Encoded encode(std::size_t m, const ad::Var& x) const;
  ad::Var decode(std::size_t m, const ad::Var& z) const;
  Discriminated discriminate(const ad::Var& z) const;

  const ModelParams& params() const noexcept { return params_; }
  /// One Var per ModelParams tensor.
  std::span<const ad::Var> vars() const noexcept { return vars_; }

 private:
  ad::Var dense(const Linear& layer, const ad::Var& x) const;

  const ModelParams& params_;
  std::vector<ad::Var> vars_;
};

/// z = mu + exp(logvar / 2) * eps.
ad::Var sample_latent(const Network::Encoded& g, const ad::Var& eps);

// Plain-matrix forward passes; rows are samples.
LatentGaussian encode(const ModelParams& params, std::size_t m, const Matrix& x);
Matrix sample_latent(const LatentGaussian& g, const Matrix& eps);
Matrix decode(const ModelParams& params, std::size_t m, const Matrix& z);
/// decode(dst, encode(src, x).mu): the deterministic translation.
Matrix translate(const ModelParams& params, std::size_t src, std::size_t dst, const Matrix& x);
DiscriminatorOutput discriminate(const ModelParams& params, const Matrix& z);

/// Rounds every entry to the nearest single-precision value.
void round_to_float(Matrix& m) noexcept;

}  // namespace modis::model
