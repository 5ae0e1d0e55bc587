#include "modis/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "modis/error.hpp"
#include "modis/evalkit.hpp"
#include "modis/random.hpp"

namespace modis::train {

namespace fs = std::filesystem;
using ad::Var;
using losses::LossReport;
using nlohmann::json;

TrainConfig TrainConfig::synthetic_profile() { return TrainConfig{}; }

TrainConfig TrainConfig::real_data_profile() {
  TrainConfig cfg;
  cfg.epochs = 4000;
  cfg.beta = 1e-6;
  cfg.gamma = 160.0;
  return cfg;
}

void TrainConfig::validate() const {
  auto positive = [](double v, const char* field) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(field) + " must be positive");
  };
  auto non_negative = [](double v, const char* field) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(std::string(field) + " must be non-negative");
  };
  if (epochs < 1 && !dry_run) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  non_negative(learning_rate, "learning_rate");
  non_negative(beta, "beta");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw ConfigError("adam_beta1 must lie in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw ConfigError("adam_beta2 must lie in [0, 1)");
  positive(adam_eps, "adam_eps");
  non_negative(gamma, "gamma");
  if (latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
  if (disc_steps < 1) throw ConfigError("disc_steps must be >= 1");
  if (trunk.size() != 3) throw ConfigError("trunk must list exactly 3 widths");
  if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) throw ConfigError("leaky_slope must lie in [0, 1)");
}

model::ArchitectureSpec TrainConfig::architecture(const std::vector<std::size_t>& dims, std::size_t n_classes) const {
  model::ArchitectureSpec spec;
  spec.modality_dims = dims;
  spec.n_classes = n_classes;
  spec.latent_dim = latent_dim;
  spec.encoder_hidden.assign(dims.size(), encoder_hidden);
  spec.decoder_hidden.assign(dims.size(), decoder_hidden);
  spec.trunk = trunk;
  spec.leaky_slope = leaky_slope;
  spec.validate();
  return spec;
}

namespace {

template <class T>
T field(const json& value, const std::string& name) {
  try {
    return value.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(name + ": wrong type (" + value.dump() + ")");
  }
}

std::size_t count_field(const json& value, const std::string& name) {
  if (!value.is_number_integer() || value.get<long long>() < 0) {
    throw ConfigError(name + ": expected a non-negative integer, got " + value.dump());
  }
  return value.get<std::size_t>();
}

double number_field(const json& value, const std::string& name) {
  if (!value.is_number()) throw ConfigError(name + ": expected a number, got " + value.dump());
  return value.get<double>();
}

}  // namespace

TrainConfig config_from_json(const json& j, const TrainConfig& base) {
  if (!j.is_object()) throw ConfigError("training config must be a JSON object");
  TrainConfig cfg = base;
  for (const auto& [key, value] : j.items()) {
    if (key == "epochs") cfg.epochs = count_field(value, key);
    else if (key == "batch_size") cfg.batch_size = count_field(value, key);
    else if (key == "learning_rate") cfg.learning_rate = number_field(value, key);
    else if (key == "beta") cfg.beta = number_field(value, key);
    else if (key == "adam_beta1") cfg.adam_beta1 = number_field(value, key);
    else if (key == "adam_beta2") cfg.adam_beta2 = number_field(value, key);
    else if (key == "adam_eps") cfg.adam_eps = number_field(value, key);
    else if (key == "gamma" || key == "lambda_r") cfg.gamma = number_field(value, key);
    else if (key == "latent_dim") cfg.latent_dim = count_field(value, key);
    else if (key == "seed") cfg.seed = count_field(value, key);
    else if (key == "checkpoint_every") cfg.checkpoint_every = count_field(value, key);
    else if (key == "disc_steps") cfg.disc_steps = count_field(value, key);
    else if (key == "dry_run") cfg.dry_run = field<bool>(value, key);
    else if (key == "encoder_hidden") cfg.encoder_hidden = field<std::vector<std::size_t>>(value, key);
    else if (key == "decoder_hidden") cfg.decoder_hidden = field<std::vector<std::size_t>>(value, key);
    else if (key == "trunk") cfg.trunk = field<std::vector<std::size_t>>(value, key);
    else if (key == "leaky_slope") cfg.leaky_slope = number_field(value, key);
    else throw ConfigError("unknown config field '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"beta", c.beta},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_eps", c.adam_eps},
          {"gamma", c.gamma},
          {"latent_dim", c.latent_dim},
          {"seed", c.seed},
          {"checkpoint_every", c.checkpoint_every},
          {"disc_steps", c.disc_steps},
          {"dry_run", c.dry_run},
          {"encoder_hidden", c.encoder_hidden},
          {"decoder_hidden", c.decoder_hidden},
          {"trunk", c.trunk},
          {"leaky_slope", c.leaky_slope}};
}

std::size_t steps_per_epoch(const UnpairedDataset& ds, std::size_t batch_size) {
  std::size_t largest = 0;
  for (const auto& b : ds.modalities) largest = std::max(largest, b.size());
  return (largest + batch_size - 1) / batch_size;
}

std::vector<ModalBatch> make_batches(const UnpairedDataset& ds, std::size_t batch_size, std::uint64_t seed,
                                     std::uint64_t epoch) {
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  for (std::size_t m = 0; m < ds.n_modalities(); ++m) {
    if (ds.modalities[m].size() == 0) throw DataError("make_batches: modality " + std::to_string(m) + " is empty");
  }
  const std::size_t steps = steps_per_epoch(ds, batch_size);
  std::vector<std::vector<std::size_t>> order;
  for (std::size_t m = 0; m < ds.n_modalities(); ++m) {
    std::vector<std::size_t> perm(ds.modalities[m].size());
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng = make_rng(seed, {stream::batches, epoch, m});
    std::shuffle(perm.begin(), perm.end(), rng);
    order.push_back(std::move(perm));
  }
  std::vector<ModalBatch> out(steps);
  for (std::size_t s = 0; s < steps; ++s) {
    for (std::size_t m = 0; m < ds.n_modalities(); ++m) {
      const auto& block = ds.modalities[m];
      const auto& perm = order[m];
      SubBatch sub;
      for (std::size_t r = 0; r < batch_size; ++r) sub.rows.push_back(perm[(s * batch_size + r) % perm.size()]);
      sub.x = block.x.gather_rows(sub.rows);
      for (auto r : sub.rows) sub.labels.push_back(block.label[r]);
      out[s].modalities.push_back(std::move(sub));
    }
  }
  return out;
}

namespace {

Matrix standard_normal(std::size_t rows, std::size_t cols, Rng& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Matrix out(rows, cols);
  for (double& v : out.values()) v = nd(rng);
  return out;
}

void check_batch(const model::ModelParams& params, const ModalBatch& batch) {
  if (batch.modalities.size() != params.spec.n_modalities()) {
    throw ShapeError("batch has " + std::to_string(batch.modalities.size()) + " modalities, model expects " +
                     std::to_string(params.spec.n_modalities()));
  }
  for (const auto& sub : batch.modalities) {
    if (sub.rows.size() != batch.size() || sub.x.rows() != batch.size()) {
      throw ShapeError("modality sub-batches must have equal sizes");
    }
  }
}

// Discriminator on the pooled latents, plus the class and clustering terms
// shared by both steps.
struct PooledTerms {
  std::vector<Var> modality_logits;  // per modality sub-batch
  Var class_ce;
  losses::ClusteringTerms clustering;
  double sigma = 0;
  std::size_t labeled = 0;
};

PooledTerms pooled_terms(const model::Network& net, std::span<const Var> latents, const ModalBatch& batch,
                         std::optional<double> bandwidth) {
  PooledTerms out;
  const Var pooled = ad::vstack(latents);
  const auto d = net.discriminate(pooled);
  std::size_t offset = 0;
  std::vector<int> labels;
  for (std::size_t m = 0; m < latents.size(); ++m) {
    out.modality_logits.push_back(ad::slice_rows(d.modality_logits, offset, latents[m].rows()));
    offset += latents[m].rows();
    const auto& l = batch.modalities[m].labels;
    labels.insert(labels.end(), l.begin(), l.end());
  }
  for (int c : labels) out.labeled += c != kUnlabeled;
  out.class_ce = losses::class_loss(d.class_logits, labels);
  out.sigma = bandwidth ? *bandwidth : losses::median_bandwidth(d.h.value());
  out.clustering = losses::clustering_loss(d.h, ad::softmax_rows(d.class_logits), out.sigma);
  return out;
}

void check_noise(const ModalBatch& batch, std::span<const Matrix> noise, std::size_t latent_dim) {
  if (noise.size() != batch.modalities.size()) throw ShapeError("one noise block per modality required");
  for (const auto& e : noise) {
    if (e.rows() != batch.size() || e.cols() != latent_dim) throw ShapeError("noise block must be B x latent_dim");
  }
}

std::vector<Matrix> draw_noise(const ModalBatch& batch, std::size_t latent_dim, const TrainConfig& cfg,
                               std::uint64_t step, std::uint64_t phase) {
  Rng rng = make_rng(cfg.seed, {stream::noise, step, phase});
  std::vector<Matrix> out;
  for (std::size_t m = 0; m < batch.modalities.size(); ++m) out.push_back(standard_normal(batch.size(), latent_dim, rng));
  return out;
}

void fill_shared(LossReport& r, const PooledTerms& t, const TrainConfig& cfg) {
  r.class_ce = t.class_ce.scalar();
  r.c1 = t.clustering.c1.scalar();
  r.c2 = t.clustering.c2.scalar();
  r.c3 = t.clustering.c3.scalar();
  r.beta = cfg.beta;
  r.gamma = cfg.gamma;
  r.sigma_kernel = t.sigma;
  r.labeled = t.labeled;
}

Var clustering_sum(const PooledTerms& t) {
  return ad::add(ad::add(t.clustering.c1, t.clustering.c2), t.clustering.c3);
}

std::string diagnostic(const char* phase, const LossReport& r) {
  return std::string(phase) + " step produced a non-finite loss: " + losses::to_json(r).dump();
}

void apply_gradients(model::ModelParams& params, AdamState& state, const std::vector<Var>& grads,
                     const AdamConfig& adam) {
  std::vector<Matrix> g(params.tensors.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    if (!state.owns(i)) continue;
    g[i] = grads[k++].value();
    if (!g[i].all_finite()) throw NumericalError("non-finite gradient for " + params.tensors[i].name);
  }
  adam_step(params, state, g, adam);
}

std::vector<Var> owned_vars(const model::Network& net, const AdamState& state) {
  std::vector<Var> out;
  const auto vars = net.vars();
  for (std::size_t i = 0; i < vars.size(); ++i) {
    if (state.owns(i)) out.push_back(vars[i]);
  }
  return out;
}

}  // namespace

Objective discriminator_objective(const model::Network& net, const ModalBatch& batch, const TrainConfig& cfg,
                                  std::span<const Matrix> noise, std::optional<double> bandwidth) {
  const auto& params = net.params();
  check_batch(params, batch);
  check_noise(batch, noise, params.spec.latent_dim);
  ad::Tape& tape = net.vars().front().tape();

  // Encoder outputs are plain values here: the sampled latents become leaves
  // so the penalty can differentiate the discriminator with respect to them.
  std::vector<Var> latents;
  for (std::size_t m = 0; m < batch.modalities.size(); ++m) {
    const auto enc = net.encode(m, tape.constant(batch.modalities[m].x));
    latents.push_back(
        tape.variable(model::sample_latent(model::LatentGaussian{enc.mu.value(), enc.logvar.value()}, noise[m])));
  }
  const PooledTerms t = pooled_terms(net, latents, batch, bandwidth);
  const Var rel = losses::relativistic_disc_loss(t.modality_logits);
  const Var penalty = losses::gradient_penalty(latents, t.modality_logits, cfg.gamma);

  Objective out;
  out.total = ad::add(ad::add(ad::add(rel, penalty), t.class_ce), clustering_sum(t));
  out.report.rel_d = rel.scalar();
  out.report.grad_penalty = penalty.scalar();
  fill_shared(out.report, t, cfg);
  try {
    out.report.total_d = losses::total_disc_loss(out.report);
  } catch (const NumericalError&) {
    throw NumericalError(diagnostic("discriminator", out.report));
  }
  return out;
}

Objective vae_objective(const model::Network& net, const ModalBatch& batch, const TrainConfig& cfg,
                        std::span<const Matrix> noise, std::optional<double> bandwidth) {
  const auto& params = net.params();
  check_batch(params, batch);
  check_noise(batch, noise, params.spec.latent_dim);
  ad::Tape& tape = net.vars().front().tape();

  Objective out;
  std::vector<Var> latents;
  Var vae_terms;
  for (std::size_t m = 0; m < batch.modalities.size(); ++m) {
    const Var x = tape.constant(batch.modalities[m].x);
    const auto enc = net.encode(m, x);
    const Var z = model::sample_latent(enc, tape.constant(noise[m]));
    latents.push_back(z);
    const Var recon = losses::recon_loss(x, net.decode(m, z));
    const Var kl = losses::kl_loss(enc.mu, enc.logvar);
    out.report.recon.push_back(recon.scalar());
    out.report.kl.push_back(kl.scalar());
    const Var term = ad::add(recon, ad::scale(kl, cfg.beta));
    vae_terms = vae_terms.valid() ? ad::add(vae_terms, term) : term;
  }
  const PooledTerms t = pooled_terms(net, latents, batch, bandwidth);
  const Var rel = losses::relativistic_vae_loss(t.modality_logits);

  out.total = ad::add(ad::add(ad::add(vae_terms, rel), t.class_ce), clustering_sum(t));
  out.report.rel_vae = rel.scalar();
  fill_shared(out.report, t, cfg);
  try {
    out.report.total_vae = losses::total_vae_loss(out.report, cfg.beta);
  } catch (const NumericalError&) {
    throw NumericalError(diagnostic("VAE", out.report));
  }
  return out;
}

LossReport train_step_discriminator(model::ModelParams& params, AdamState& state, const ModalBatch& batch,
                                    const TrainConfig& cfg, std::uint64_t step) {
  ad::Tape tape;
  model::Network net(tape, params, /*vae_trainable=*/false, /*disc_trainable=*/true);
  const auto noise = draw_noise(batch, params.spec.latent_dim, cfg, step, 0);
  const Objective obj = discriminator_objective(net, batch, cfg, noise);
  const auto wrt = owned_vars(net, state);
  apply_gradients(params, state, tape.grad(obj.total, wrt), cfg.adam());
  return obj.report;
}

LossReport train_step_vaes(model::ModelParams& params, AdamState& state, const ModalBatch& batch,
                           const TrainConfig& cfg, std::uint64_t step) {
  ad::Tape tape;
  model::Network net(tape, params, /*vae_trainable=*/true, /*disc_trainable=*/false);
  const auto noise = draw_noise(batch, params.spec.latent_dim, cfg, step, 1);
  const Objective obj = vae_objective(net, batch, cfg, noise);
  const auto wrt = owned_vars(net, state);
  apply_gradients(params, state, tape.grad(obj.total, wrt), cfg.adam());
  return obj.report;
}

json to_json(const StepRecord& r) {
  return {{"epoch", r.epoch}, {"step", r.step}, {"disc", losses::to_json(r.disc)}, {"vae", losses::to_json(r.vae)}};
}

namespace {

std::vector<Matrix> snapshot(const model::ModelParams& params, model::Group group) {
  std::vector<Matrix> out;
  for (const auto& t : params.tensors) {
    if (t.group == group) out.push_back(t.value);
  }
  return out;
}

void require_unchanged(const model::ModelParams& params, model::Group group, const std::vector<Matrix>& before,
                       const char* phase) {
  std::size_t k = 0;
  for (const auto& t : params.tensors) {
    if (t.group != group) continue;
    if (!(t.value == before[k++])) throw Error(std::string(phase) + " step modified frozen tensor " + t.name);
  }
}

}  // namespace

FitResult fit(const UnpairedDataset& train_set, const TrainConfig& cfg, const FitOptions& options) {
  cfg.validate();
  train_set.validate();
  const auto spec = cfg.architecture(train_set.dims(), train_set.n_classes);

  FitResult result;
  if (options.resume_from) {
    Checkpoint ck = read_checkpoint(*options.resume_from);
    if (!ck.training) throw DataError("checkpoint " + options.resume_from->string() + " has no training state");
    if (spec_to_json(ck.params.spec) != spec_to_json(spec)) {
      throw ConfigError("resume: checkpoint architecture differs from the configured one");
    }
    result.params = std::move(ck.params);
    result.state = std::move(*ck.training);
  } else {
    result.params = model::init_params(spec, cfg.seed);
    result.state.adam_vae = AdamState::for_group(result.params, model::Group::vae);
    result.state.adam_disc = AdamState::for_group(result.params, model::Group::discriminator);
  }
  result.state.config = to_json(cfg);

  std::ofstream history;
  if (options.out_dir) {
    fs::create_directories(*options.out_dir);
    const auto mode = options.resume_from ? std::ios::app : std::ios::trunc;
    history.open(*options.out_dir / "history.jsonl", std::ios::out | mode);
    if (!history) throw IoError("cannot open history.jsonl in " + options.out_dir->string());
  }

  auto& params = result.params;
  auto& state = result.state;
  const std::uint64_t keys_per_step = cfg.disc_steps + 1;
  for (std::uint64_t epoch = state.epochs_done; epoch < cfg.epochs && !cfg.dry_run; ++epoch) {
    for (const auto& batch : make_batches(train_set, cfg.batch_size, cfg.seed, epoch)) {
      StepRecord rec;
      rec.epoch = epoch;
      rec.step = state.step;

      auto frozen = options.verify_isolation ? snapshot(params, model::Group::vae) : std::vector<Matrix>{};
      for (std::size_t d = 0; d < cfg.disc_steps; ++d) {
        rec.disc = train_step_discriminator(params, state.adam_disc, batch, cfg, state.step * keys_per_step + d);
      }
      if (options.verify_isolation) {
        require_unchanged(params, model::Group::vae, frozen, "discriminator");
        frozen = snapshot(params, model::Group::discriminator);
      }
      rec.vae = train_step_vaes(params, state.adam_vae, batch, cfg, state.step * keys_per_step + cfg.disc_steps);
      if (options.verify_isolation) require_unchanged(params, model::Group::discriminator, frozen, "VAE");
      if (!params.all_finite()) throw NumericalError("parameters became non-finite at step " + std::to_string(state.step));

      ++state.step;
      if (history.is_open()) history << to_json(rec).dump() << '\n';
      if (options.on_step) options.on_step(rec);
      if (options.keep_history) result.history.push_back(std::move(rec));
    }
    state.epochs_done = epoch + 1;
    if (options.out_dir && cfg.checkpoint_every > 0 && state.epochs_done % cfg.checkpoint_every == 0) {
      write_checkpoint(*options.out_dir / "ckpt" / ("epoch_" + std::to_string(state.epochs_done)), params, &state);
    }
  }
  if (options.out_dir) write_checkpoint(*options.out_dir / "ckpt" / "final", params, &state);
  return result;
}

std::vector<std::vector<std::size_t>> stratified_folds(const UnpairedDataset& ds, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("folds must be >= 2");
  Rng rng = make_rng(seed, {stream::folds});
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t m = 0; m < ds.n_modalities(); ++m) {
    const auto& b = ds.modalities[m];
    std::vector<std::size_t> fold(b.size(), 0);
    std::set<int> labels(b.label.begin(), b.label.end());
    std::size_t start = 0;
    for (int label : labels) {
      auto cell = ds.cell(label, m);
      std::shuffle(cell.begin(), cell.end(), rng);
      // Continuing the round-robin across strata keeps fold sizes even.
      for (std::size_t j = 0; j < cell.size(); ++j) fold[cell[j]] = (start + j) % k;
      start = (start + cell.size()) % k;
    }
    out.push_back(std::move(fold));
  }
  return out;
}

namespace {

UnpairedDataset fold_part(const UnpairedDataset& ds, const std::vector<std::vector<std::size_t>>& folds,
                          std::size_t f, bool validation) {
  UnpairedDataset out;
  out.n_classes = ds.n_classes;
  out.seed = ds.seed;
  out.provenance = ds.provenance;
  out.provenance.push_back(std::string(validation ? "fold_validation(" : "fold_train(") + std::to_string(f) + ")");
  for (std::size_t m = 0; m < ds.n_modalities(); ++m) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < folds[m].size(); ++i) {
      if ((folds[m][i] == f) == validation) rows.push_back(i);
    }
    out.modalities.push_back(ds.modalities[m].subset(rows));
  }
  return out;
}

double validation_recon_mse(const model::ModelParams& params, const UnpairedDataset& val) {
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t m = 0; m < val.n_modalities(); ++m) {
    const auto& b = val.modalities[m];
    if (b.size() == 0) continue;
    const Matrix pred = model::translate(params, m, m, b.x);
    for (std::size_t i = 0; i < b.size(); ++i) {
      double s = 0.0;
      for (std::size_t f = 0; f < b.x.cols(); ++f) {
        const double d = pred(i, f) - b.x(i, f);
        s += d * d;
      }
      total += s / static_cast<double>(b.x.cols());
      ++n;
    }
  }
  return n ? total / static_cast<double>(n) : 0.0;
}

double validation_bacc(const model::ModelParams& params, const UnpairedDataset& val) {
  const auto pred = eval::predict_class(params, val);
  std::vector<int> t, p;
  std::size_t k = 0;
  for (const auto& b : val.modalities) {
    for (std::size_t i = 0; i < b.size(); ++i, ++k) {
      if (b.label[i] == kUnlabeled) continue;
      t.push_back(b.label[i]);
      p.push_back(pred[k]);
    }
  }
  if (t.empty()) throw DataError("grid search: a validation fold has no labeled records");
  return eval::balanced_accuracy(t, p);
}

}  // namespace

std::vector<GridRow> grid_search_cv(const UnpairedDataset& ds, const TrainConfig& base, const GridSpec& grid) {
  auto values_or = [](const auto& v, auto fallback) {
    using T = typename std::decay_t<decltype(v)>::value_type;
    return v.empty() ? std::vector<T>{static_cast<T>(fallback)} : v;
  };
  const auto betas = values_or(grid.beta, base.beta);
  const auto dims = values_or(grid.latent_dim, base.latent_dim);
  const auto rates = values_or(grid.learning_rate, base.learning_rate);
  const auto gammas = values_or(grid.gamma, base.gamma);

  const auto folds = stratified_folds(ds, grid.folds, base.seed);
  std::set<int> classes;
  for (const auto& b : ds.modalities)
    for (int c : b.label)
      if (c != kUnlabeled) classes.insert(c);
  for (std::size_t f = 0; f < grid.folds; ++f) {
    const auto val = fold_part(ds, folds, f, true);
    for (int c : classes) {
      bool found = false;
      for (std::size_t m = 0; m < val.n_modalities() && !found; ++m) found = val.cell_count(c, m) > 0;
      if (!found) {
        throw DataError("grid search: fold " + std::to_string(f) + " has no records of class " + std::to_string(c));
      }
    }
  }

  std::vector<GridRow> rows;
  for (double beta : betas)
    for (auto d : dims)
      for (double lr : rates)
        for (double gamma : gammas) {
          GridRow row;
          row.config = base;
          row.config.beta = beta;
          row.config.latent_dim = d;
          row.config.learning_rate = lr;
          row.config.gamma = gamma;
          row.config.validate();
          for (std::size_t f = 0; f < grid.folds; ++f) {
            const auto train_part = fold_part(ds, folds, f, false);
            const auto val = fold_part(ds, folds, f, true);
            FitOptions opts;
            opts.keep_history = false;
            const auto fitted = fit(train_part, row.config, opts);
            row.fold_bacc.push_back(validation_bacc(fitted.params, val));
            row.fold_mse.push_back(validation_recon_mse(fitted.params, val));
          }
          row.mean_bacc = std::accumulate(row.fold_bacc.begin(), row.fold_bacc.end(), 0.0) /
                          static_cast<double>(row.fold_bacc.size());
          row.mean_mse = std::accumulate(row.fold_mse.begin(), row.fold_mse.end(), 0.0) /
                         static_cast<double>(row.fold_mse.size());
          rows.push_back(std::move(row));
        }
  std::stable_sort(rows.begin(), rows.end(), [](const GridRow& a, const GridRow& b) {
    if (a.mean_bacc != b.mean_bacc) return a.mean_bacc > b.mean_bacc;
    return a.mean_mse < b.mean_mse;
  });
  return rows;
}

GridSpec grid_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("grid must be a JSON object");
  GridSpec g;
  for (const auto& [key, value] : j.items()) {
    if (key == "beta") g.beta = field<std::vector<double>>(value, key);
    else if (key == "latent_dim") g.latent_dim = field<std::vector<std::size_t>>(value, key);
    else if (key == "learning_rate") g.learning_rate = field<std::vector<double>>(value, key);
    else if (key == "gamma" || key == "lambda_r") g.gamma = field<std::vector<double>>(value, key);
    else if (key == "folds") g.folds = count_field(value, key);
    else throw ConfigError("unknown grid field '" + key + "'");
    if (value.is_array() && value.empty()) throw ConfigError(key + ": grid values must be non-empty");
  }
  if (g.folds < 2) throw ConfigError("folds must be >= 2");
  return g;
}

void write_grid_csv(const fs::path& path, const std::vector<GridRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  const std::size_t k = rows.empty() ? 0 : rows.front().fold_bacc.size();
  out << "rank,beta,latent_dim,learning_rate,gamma";
  for (std::size_t f = 0; f < k; ++f) out << ",bacc_fold" << f;
  for (std::size_t f = 0; f < k; ++f) out << ",mse_fold" << f;
  out << ",mean_bacc,mean_mse\n";
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    out << r + 1 << ',' << format_double(row.config.beta) << ',' << row.config.latent_dim << ','
        << format_double(row.config.learning_rate) << ',' << format_double(row.config.gamma);
    for (double v : row.fold_bacc) out << ',' << format_double(v);
    for (double v : row.fold_mse) out << ',' << format_double(v);
    out << ',' << format_double(row.mean_bacc) << ',' << format_double(row.mean_mse) << '\n';
  }
}

}  // namespace modis::train
