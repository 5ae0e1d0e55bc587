#include "modis/model.hpp"

#include <cmath>
#include <random>

#include "modis/error.hpp"
#include "modis/random.hpp"

namespace modis::model {

using ad::Var;

ArchitectureSpec ArchitectureSpec::defaults(std::vector<std::size_t> modality_dims, std::size_t n_classes,
                                            std::size_t latent_dim) {
  ArchitectureSpec spec;
  spec.n_classes = n_classes;
  spec.latent_dim = latent_dim;
  spec.encoder_hidden.assign(modality_dims.size(), {256, 64});
  spec.decoder_hidden.assign(modality_dims.size(), {64, 256});
  spec.modality_dims = std::move(modality_dims);
  return spec;
}

void ArchitectureSpec::validate() const {
  const std::size_t m = modality_dims.size();
  if (m == 0) throw ConfigError("modality_dims must be non-empty");
  for (auto p : modality_dims) {
    if (p == 0) throw ConfigError("modality_dims entries must be >= 1");
  }
  if (n_classes < 2) throw ConfigError("n_classes must be >= 2");
  if (latent_dim == 0) throw ConfigError("latent_dim must be >= 1");
  if (encoder_hidden.size() != m) throw ConfigError("encoder_hidden needs one width list per modality");
  if (decoder_hidden.size() != m) throw ConfigError("decoder_hidden needs one width list per modality");
  for (const auto& widths : {encoder_hidden, decoder_hidden}) {
    for (const auto& w : widths)
      for (auto v : w)
        if (v == 0) throw ConfigError("hidden widths must be >= 1");
  }
  if (trunk.size() != 3) throw ConfigError("trunk must have exactly 3 layers");
  for (auto v : trunk) {
    if (v == 0) throw ConfigError("trunk widths must be >= 1");
  }
  if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) throw ConfigError("leaky_slope must lie in [0, 1)");
}

std::size_t ArchitectureSpec::parameter_count() const {
  std::size_t total = 0;
  auto chain = [&total](std::size_t in, const std::vector<std::size_t>& widths) {
    for (auto w : widths) {
      total += (in + 1) * w;
      in = w;
    }
    return in;
  };
  for (std::size_t m = 0; m < modality_dims.size(); ++m) {
    const std::size_t last = chain(modality_dims[m], encoder_hidden[m]);
    total += 2 * (last + 1) * latent_dim;
    const std::size_t dec_last = chain(latent_dim, decoder_hidden[m]);
    total += (dec_last + 1) * modality_dims[m];
  }
  const std::size_t h = chain(latent_dim, trunk);
  total += (h + 1) * (modality_dims.size() + n_classes);
  return total;
}

std::size_t ModelParams::parameter_count() const noexcept {
  std::size_t total = 0;
  for (const auto& t : tensors) total += t.value.size();
  return total;
}

const Tensor& ModelParams::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t;
  }
  throw Error("no parameter tensor named " + name);
}

bool ModelParams::all_finite() const noexcept {
  for (const auto& t : tensors) {
    if (!t.value.all_finite()) return false;
  }
  return true;
}

ModelParams zero_params(const ArchitectureSpec& spec) {
  spec.validate();
  ModelParams p;
  p.spec = spec;
  auto add = [&p](const std::string& prefix, std::size_t in, std::size_t out, Group g) {
    Linear l;
    l.weight = p.tensors.size();
    p.tensors.push_back({prefix + ".weight", Matrix(in, out), g});
    l.bias = p.tensors.size();
    p.tensors.push_back({prefix + ".bias", Matrix(1, out), g});
    return l;
  };

  const std::size_t n_mod = spec.n_modalities();
  auto& lay = p.layout;
  lay.encoder_hidden.resize(n_mod);
  lay.decoder.resize(n_mod);
  for (std::size_t m = 0; m < n_mod; ++m) {
    const std::string enc = "enc" + std::to_string(m);
    std::size_t in = spec.modality_dims[m];
    for (std::size_t l = 0; l < spec.encoder_hidden[m].size(); ++l) {
      const std::size_t out = spec.encoder_hidden[m][l];
      lay.encoder_hidden[m].push_back(add(enc + ".hidden" + std::to_string(l), in, out, Group::vae));
      in = out;
    }
    lay.encoder_mu.push_back(add(enc + ".mu", in, spec.latent_dim, Group::vae));
    lay.encoder_logvar.push_back(add(enc + ".logvar", in, spec.latent_dim, Group::vae));

    const std::string dec = "dec" + std::to_string(m);
    in = spec.latent_dim;
    std::size_t l = 0;
    for (; l < spec.decoder_hidden[m].size(); ++l) {
      const std::size_t out = spec.decoder_hidden[m][l];
      lay.decoder[m].push_back(add(dec + ".layer" + std::to_string(l), in, out, Group::vae));
      in = out;
    }
    lay.decoder[m].push_back(add(dec + ".layer" + std::to_string(l), in, spec.modality_dims[m], Group::vae));
  }
  std::size_t in = spec.latent_dim;
  for (std::size_t l = 0; l < spec.trunk.size(); ++l) {
    lay.trunk.push_back(add("disc.trunk" + std::to_string(l), in, spec.trunk[l], Group::discriminator));
    in = spec.trunk[l];
  }
  lay.modality_head = add("disc.modality", in, n_mod, Group::discriminator);
  lay.class_head = add("disc.class", in, spec.n_classes, Group::discriminator);
  return p;
}

void round_to_float(Matrix& m) noexcept {
  for (double& v : m.values()) v = static_cast<double>(static_cast<float>(v));
}

ModelParams init_params(const ArchitectureSpec& spec, std::uint64_t seed) {
  ModelParams p = zero_params(spec);
  p.seed = seed;
  Rng rng = make_rng(seed, {stream::init});
  // Tensors come in (weight, bias) pairs; both use the weight's fan-in.
  for (std::size_t i = 0; i + 1 < p.tensors.size(); i += 2) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(p.tensors[i].value.rows()));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (std::size_t j = i; j <= i + 1; ++j) {
      for (double& v : p.tensors[j].value.values()) v = u(rng);
      round_to_float(p.tensors[j].value);
    }
  }
  return p;
}

Matrix LatentGaussian::sigma() const {
  Matrix out = logvar;
  for (double& v : out.values()) v = std::exp(0.5 * v);
  return out;
}

Network::Network(ad::Tape& tape, const ModelParams& params, bool vae_trainable, bool disc_trainable)
    : params_(params) {
  vars_.reserve(params.tensors.size());
  for (const auto& t : params.tensors) {
    const bool trainable = t.group == Group::vae ? vae_trainable : disc_trainable;
    vars_.push_back(trainable ? tape.variable(t.value) : tape.constant(t.value));
  }
}

Var Network::dense(const Linear& layer, const Var& x) const {
  return ad::add_bias(ad::matmul(x, vars_[layer.weight]), vars_[layer.bias]);
}

Network::Encoded Network::encode(std::size_t m, const Var& x) const {
  const auto& lay = params_.layout;
  if (m >= params_.spec.n_modalities()) throw ShapeError("encode: unknown modality " + std::to_string(m));
  if (x.cols() != params_.spec.modality_dims[m]) {
    throw ShapeError("encode: modality " + std::to_string(m) + " expects " +
                     std::to_string(params_.spec.modality_dims[m]) + " features, got " + std::to_string(x.cols()));
  }
  const double slope = params_.spec.leaky_slope;
  Var a = x;
  for (const auto& layer : lay.encoder_hidden[m]) a = ad::leaky_relu(dense(layer, a), slope);
  Var mu = dense(lay.encoder_mu[m], a);
  Var logvar = ad::clamp(dense(lay.encoder_logvar[m], a), kLogVarMin, kLogVarMax);
  return {mu, logvar};
}

Var Network::decode(std::size_t m, const Var& z) const {
  const auto& lay = params_.layout;
  if (m >= params_.spec.n_modalities()) throw ShapeError("decode: unknown modality " + std::to_string(m));
  if (z.cols() != params_.spec.latent_dim) throw ShapeError("decode: latent width mismatch");
  const double slope = params_.spec.leaky_slope;
  const auto& layers = lay.decoder[m];
  Var a = z;
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) a = ad::leaky_relu(dense(layers[l], a), slope);
  return dense(layers.back(), a);
}

Network::Discriminated Network::discriminate(const Var& z) const {
  const auto& lay = params_.layout;
  if (z.cols() != params_.spec.latent_dim) throw ShapeError("discriminate: latent width mismatch");
  const double slope = params_.spec.leaky_slope;
  Var h = z;
  for (const auto& layer : lay.trunk) h = ad::leaky_relu(dense(layer, h), slope);
  return {dense(lay.modality_head, h), dense(lay.class_head, h), h};
}

Var sample_latent(const Network::Encoded& g, const Var& eps) {
  return ad::add(g.mu, ad::mul(ad::exp(ad::scale(g.logvar, 0.5)), eps));
}

LatentGaussian encode(const ModelParams& params, std::size_t m, const Matrix& x) {
  ad::Tape tape;
  Network net(tape, params, false, false);
  auto e = net.encode(m, tape.constant(x));
  return {e.mu.value(), e.logvar.value()};
}

Matrix sample_latent(const LatentGaussian& g, const Matrix& eps) {
  if (!g.mu.same_shape(eps) || !g.mu.same_shape(g.logvar)) throw ShapeError("sample_latent: shape mismatch");
  Matrix z = g.mu;
  for (std::size_t i = 0; i < z.size(); ++i) z.data()[i] += std::exp(0.5 * g.logvar.data()[i]) * eps.data()[i];
  return z;
}

Matrix decode(const ModelParams& params, std::size_t m, const Matrix& z) {
  ad::Tape tape;
  Network net(tape, params, false, false);
  return net.decode(m, tape.constant(z)).value();
}

Matrix translate(const ModelParams& params, std::size_t src, std::size_t dst, const Matrix& x) {
  ad::Tape tape;
  Network net(tape, params, false, false);
  return net.decode(dst, net.encode(src, tape.constant(x)).mu).value();
}

DiscriminatorOutput discriminate(const ModelParams& params, const Matrix& z) {
  ad::Tape tape;
  Network net(tape, params, false, false);
  auto d = net.discriminate(tape.constant(z));
  return {d.modality_logits.value(), d.class_logits.value(), d.h.value()};
}

}  // namespace modis::model
