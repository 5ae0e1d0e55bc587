#include "modis/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "modis/error.hpp"
#include "modis/kernels.hpp"

namespace modis::losses {

using ad::Var;
using kernels::Transpose;

Var recon_loss(const Var& x, const Var& xhat) {
  if (!x.value().same_shape(xhat.value())) {
    throw ShapeError("recon_loss: " + shape_string(x.value()) + " vs " + shape_string(xhat.value()));
  }
  if (x.rows() == 0) throw ShapeError("recon_loss: empty batch");
  Var d = ad::sub(x, xhat);
  return ad::scale(ad::sum(ad::mul(d, d)), 1.0 / static_cast<double>(x.rows()));
}

double recon_loss(const Matrix& x, const Matrix& xhat) {
  ad::Tape t;
  return recon_loss(t.constant(x), t.constant(xhat)).scalar();
}

Var kl_loss(const Var& mu, const Var& logvar) {
  if (!mu.value().same_shape(logvar.value())) throw ShapeError("kl_loss: mu and log-variance shapes differ");
  if (mu.rows() == 0) throw ShapeError("kl_loss: empty batch");
  Var terms = ad::sub(ad::add(ad::mul(mu, mu), ad::exp(logvar)), ad::add_scalar(logvar, 1.0));
  return ad::scale(ad::sum(terms), 0.5 / static_cast<double>(mu.rows()));
}

double kl_loss(const Matrix& mu, const Matrix& sigma) {
  if (!mu.same_shape(sigma)) throw ShapeError("kl_loss: mu and sigma shapes differ");
  Matrix logvar = sigma;
  for (double& v : logvar.values()) {
    if (!(v > 0.0)) throw DataError("kl_loss: sigma must be positive");
    v = 2.0 * std::log(v);
  }
  ad::Tape t;
  return kl_loss(t.constant(mu), t.constant(logvar)).scalar();
}

namespace {

void check_table(std::span<const Var> logits) {
  const std::size_t m = logits.size();
  if (m == 0) throw ShapeError("relativistic loss: no modalities");
  const std::size_t b = logits.front().rows();
  for (const auto& l : logits) {
    if (l.rows() != b) throw ShapeError("relativistic loss: modality sub-batches have unequal sizes");
    if (l.cols() != m) throw ShapeError("relativistic loss: logit width differs from the modality count");
  }
}

// Sum over i of s[i][i], and sum over i != j of s[i][j]; both B × 1.
std::pair<Var, Var> own_and_cross(std::span<const Var> logits) {
  check_table(logits);
  const std::size_t m = logits.size();
  Var own, cross;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      Var s = ad::column(logits[j], i);
      Var& acc = i == j ? own : cross;
      acc = acc.valid() ? ad::add(acc, s) : s;
    }
  }
  if (!cross.valid()) cross = ad::scale(own, 0.0);
  return {own, cross};
}

std::vector<Var> constants(ad::Tape& t, std::span<const Matrix> ms) {
  std::vector<Var> out;
  for (const auto& m : ms) out.push_back(t.constant(m));
  return out;
}

}  // namespace

Var relativistic_disc_argument(std::span<const Var> logits) {
  auto [own, cross] = own_and_cross(logits);
  return ad::neg(ad::sub(own, cross));
}

Var relativistic_vae_argument(std::span<const Var> logits) {
  auto [own, cross] = own_and_cross(logits);
  const double others = static_cast<double>(logits.size() - 1);
  return ad::neg(ad::sub(cross, ad::scale(own, others)));
}

Var relativistic_disc_loss(std::span<const Var> logits) {
  return ad::mean(ad::softplus(relativistic_disc_argument(logits)));
}

Var relativistic_vae_loss(std::span<const Var> logits) {
  return ad::mean(ad::softplus(relativistic_vae_argument(logits)));
}

Var gradient_penalty(std::span<const Var> latents, std::span<const Var> logits, double gamma) {
  check_table(logits);
  if (latents.size() != logits.size()) throw ShapeError("gradient_penalty: one latent block per modality required");
  // Row b of s[i][i] depends only on row b of z^(i), so one backward pass of
  // the summed own-scores yields every per-row input gradient.
  Var own_total;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    Var s = ad::sum(ad::column(logits[i], i));
    own_total = own_total.valid() ? ad::add(own_total, s) : s;
  }
  ad::Tape& tape = own_total.tape();
  const std::vector<Var> grads = tape.grad(own_total, latents);
  Var penalty;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    const Var& g = grads[i];
    Var term = ad::scale(ad::sum(ad::mul(g, g)), 1.0 / static_cast<double>(latents[i].rows()));
    penalty = penalty.valid() ? ad::add(penalty, term) : term;
  }
  return ad::scale(penalty, 0.5 * gamma);
}

Var class_loss(const Var& class_logits, std::span<const int> labels) {
  const std::size_t n = class_logits.rows(), k = class_logits.cols();
  if (labels.size() != n) throw ShapeError("class_loss: label count differs from logit rows");
  Matrix onehot(n, k);
  std::size_t labeled = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0) continue;
    if (static_cast<std::size_t>(labels[i]) >= k) {
      throw DataError("class_loss: label " + std::to_string(labels[i]) + " out of range for " + std::to_string(k) +
                      " classes");
    }
    onehot(i, static_cast<std::size_t>(labels[i])) = 1.0;
    ++labeled;
  }
  ad::Tape& tape = class_logits.tape();
  if (labeled == 0) return tape.constant(0.0);
  Var picked = ad::sum(ad::mul_const(ad::log_softmax_rows(class_logits), onehot));
  return ad::scale(picked, -1.0 / static_cast<double>(labeled));
}

double class_loss(const Matrix& class_logits, std::span<const int> labels) {
  ad::Tape t;
  return class_loss(t.constant(class_logits), labels).scalar();
}

namespace {

// sum over i < j of G_ij / sqrt(G_ii G_jj), divided by the number of pairs.
Var pair_quotient(const Var& columns, const Var& kernel) {
  const std::size_t k = columns.cols();
  Var gram = ad::matmul(columns, ad::matmul(kernel, columns), Transpose::yes, Transpose::no);
  Var diag = ad::sum_cols(ad::mul_const(gram, Matrix::identity(k)));
  Var norms = ad::sqrt(ad::matmul(diag, diag, Transpose::no, Transpose::yes));
  Matrix upper(k, k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j) upper(i, j) = 1.0;
  const double pairs = static_cast<double>(k * (k - 1) / 2);
  return ad::scale(ad::sum(ad::mul_const(ad::div(gram, norms), upper)), 1.0 / pairs);
}

}  // namespace

ClusteringTerms clustering_loss(const Var& h, const Var& alpha, double sigma) {
  const std::size_t n = h.rows(), k = alpha.cols();
  if (alpha.rows() != n) throw ShapeError("clustering_loss: h and alpha row counts differ");
  if (k < 2) throw ShapeError("clustering_loss: need at least 2 classes");
  if (n < 2) throw ShapeError("clustering_loss: need at least 2 samples");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw NumericalError("clustering_loss: kernel bandwidth must be positive and finite");
  }

  Var sq = ad::sum_cols(ad::mul(h, h));
  Var sq_rows = ad::broadcast_cols(sq, n);
  Var dist = ad::sub(ad::add(sq_rows, ad::transpose(sq_rows)),
                     ad::scale(ad::matmul(h, h, Transpose::no, Transpose::yes), 2.0));
  Var kernel = ad::exp(ad::scale(dist, -1.0 / (2.0 * sigma * sigma)));

  Var alpha_sq = ad::broadcast_cols(ad::sum_cols(ad::mul(alpha, alpha)), k);
  // ||alpha_j - e_k||^2 = ||alpha_j||^2 - 2 alpha_jk + 1
  Var corner_dist = ad::add_scalar(ad::sub(alpha_sq, ad::scale(alpha, 2.0)), 1.0);
  Var corners = ad::exp(ad::neg(corner_dist));

  Var mean_alpha = ad::scale(ad::sum_rows(alpha), 1.0 / static_cast<double>(n));
  Var c3 = ad::sum(ad::mul(mean_alpha, ad::log(mean_alpha)));
  return {pair_quotient(alpha, kernel), pair_quotient(corners, kernel), c3};
}

ClusteringValues clustering_loss(const Matrix& h, const Matrix& alpha, double sigma) {
  for (std::size_t i = 0; i < alpha.rows(); ++i) {
    double s = 0.0;
    for (double v : alpha.row(i)) {
      if (v < 0.0) throw DataError("clustering_loss: soft assignments must be non-negative");
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-9) throw DataError("clustering_loss: soft assignment rows must sum to 1");
  }
  ad::Tape t;
  auto terms = clustering_loss(t.constant(h), t.constant(alpha), sigma);
  return {terms.c1.scalar(), terms.c2.scalar(), terms.c3.scalar()};
}

double median_bandwidth(const Matrix& h) {
  const std::size_t n = h.rows();
  if (n < 2) throw NumericalError("median_bandwidth: need at least 2 rows");
  const Matrix sq = kernels::pairwise_sq_dists(h);
  std::vector<double> d;
  d.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) d.push_back(std::sqrt(sq(i, j)));
  const auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  double med = *mid;
  if (d.size() % 2 == 0) med = 0.5 * (med + *std::max_element(d.begin(), mid));
  if (med > 0.0) return med;
  double s = 0.0;
  std::size_t positive = 0;
  for (double v : d) {
    if (v > 0.0) {
      s += v;
      ++positive;
    }
  }
  if (positive == 0) throw NumericalError("median_bandwidth: all rows of h are identical; kernel is degenerate");
  return s / static_cast<double>(positive);
}

double relativistic_disc_loss(std::span<const Matrix> logits) {
  ad::Tape t;
  auto vars = constants(t, logits);
  return relativistic_disc_loss(vars).scalar();
}

double relativistic_vae_loss(std::span<const Matrix> logits) {
  ad::Tape t;
  auto vars = constants(t, logits);
  return relativistic_vae_loss(vars).scalar();
}

RelativisticValues relativistic_disc_loss(const model::ModelParams& params, std::span<const Matrix> latents,
                                          double gamma) {
  ad::Tape t;
  model::Network net(t, params, false, false);
  std::vector<Var> z, logits;
  for (const auto& m : latents) {
    z.push_back(t.variable(m));
    logits.push_back(net.discriminate(z.back()).modality_logits);
  }
  return {relativistic_disc_loss(logits).scalar(), gradient_penalty(z, logits, gamma).scalar()};
}

namespace {

void require_finite(double v, const char* name) {
  if (!std::isfinite(v)) throw NumericalError(std::string("loss term ") + name + " is not finite");
}

}  // namespace

double total_disc_loss(const LossReport& p) {
  require_finite(p.rel_d, "rel_D");
  require_finite(p.grad_penalty, "grad_penalty");
  require_finite(p.class_ce, "class_ce");
  require_finite(p.c1, "c1");
  require_finite(p.c2, "c2");
  require_finite(p.c3, "c3");
  return p.rel_d + p.grad_penalty + p.class_ce + (p.c1 + p.c2 + p.c3);
}

double total_vae_loss(const LossReport& p, double beta) {
  if (p.recon.size() != p.kl.size()) throw ShapeError("total_vae_loss: recon/kl modality counts differ");
  double vae = 0.0;
  for (std::size_t m = 0; m < p.recon.size(); ++m) {
    require_finite(p.recon[m], "recon");
    require_finite(p.kl[m], "kl");
    vae += p.recon[m] + beta * p.kl[m];
  }
  require_finite(p.rel_vae, "rel_VAE");
  require_finite(p.class_ce, "class_ce");
  require_finite(p.c1, "c1");
  require_finite(p.c2, "c2");
  require_finite(p.c3, "c3");
  return vae + p.rel_vae + p.class_ce + (p.c1 + p.c2 + p.c3);
}

nlohmann::json to_json(const LossReport& r) {
  return {{"recon", r.recon},   {"kl", r.kl},       {"rel_D", r.rel_d},     {"rel_VAE", r.rel_vae},
          {"grad_penalty", r.grad_penalty},         {"class_ce", r.class_ce},
          {"c1", r.c1},         {"c2", r.c2},       {"c3", r.c3},           {"L_D", r.total_d},
          {"L_VAE", r.total_vae},                   {"beta", r.beta},       {"gamma", r.gamma},
          {"sigma_kernel", r.sigma_kernel},         {"labeled", r.labeled}};
}

}  // namespace modis::losses
