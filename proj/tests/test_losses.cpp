#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "modis/error.hpp"
#include "modis/losses.hpp"
#include "modis/trainer.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace modis;
using testing::random_matrix;

namespace {

std::vector<Matrix> random_table(std::size_t m, std::size_t b, std::mt19937_64& rng) {
  std::vector<Matrix> t;
  for (std::size_t j = 0; j < m; ++j) t.push_back(random_matrix(b, m, rng, 2.0));
  return t;
}

Matrix arg_of(std::span<const Matrix> table, bool disc) {
  ad::Tape tape;
  std::vector<ad::Var> v;
  for (const auto& t : table) v.push_back(tape.constant(t));
  return (disc ? losses::relativistic_disc_argument(v) : losses::relativistic_vae_argument(v)).value();
}

// Tiny two-modality model for model-level gradient checks.
struct Toy {
  model::ModelParams params;
  train::ModalBatch batch;
  train::TrainConfig cfg;
  std::vector<Matrix> noise;
};

Toy make_toy(std::uint64_t seed) {
  Toy t;
  t.cfg.latent_dim = 2;
  t.cfg.encoder_hidden = {4};
  t.cfg.decoder_hidden = {4};
  t.cfg.trunk = {5, 4, 3};
  t.cfg.beta = 0.3;
  t.cfg.gamma = 2.0;
  t.params = model::init_params(t.cfg.architecture({3, 2}, 2), seed);
  std::mt19937_64 rng(seed);
  const std::size_t b = 4;
  for (std::size_t m = 0; m < 2; ++m) {
    train::SubBatch sub;
    sub.x = random_matrix(b, m == 0 ? 3 : 2, rng);
    sub.labels = {0, 1, kUnlabeled, 1};
    sub.rows = {0, 1, 2, 3};
    t.batch.modalities.push_back(sub);
    t.noise.push_back(random_matrix(b, 2, rng));
  }
  return t;
}

// Relative error of the tape gradient of an objective against central
// differences over every tensor of one group.
template <class Build>
double objective_gradient_error(Toy& toy, model::Group group, Build build) {
  const bool vae = group == model::Group::vae;
  std::vector<Matrix> analytic;
  {
    ad::Tape tape;
    model::Network net(tape, toy.params, vae, !vae);
    const auto obj = build(net);
    std::vector<ad::Var> wrt;
    for (std::size_t i = 0; i < toy.params.tensors.size(); ++i)
      if (toy.params.tensors[i].group == group) wrt.push_back(net.vars()[i]);
    for (const auto& g : tape.grad(obj.total, wrt)) analytic.push_back(g.value());
  }
  auto eval = [&] {
    ad::Tape tape;
    model::Network net(tape, toy.params, vae, !vae);
    return build(net).total.scalar();
  };
  // Normalized by the largest gradient entry of the group: some entries
  // (the modality biases for M=2) are exactly zero.
  const double h = 1e-6;
  double diff = 0, scale = 1e-8;
  std::size_t k = 0;
  for (auto& tensor : toy.params.tensors) {
    if (tensor.group != group) continue;
    for (std::size_t i = 0; i < tensor.value.size(); ++i) {
      double& w = tensor.value.data()[i];
      const double w0 = w;
      w = w0 + h;
      const double up = eval();
      w = w0 - h;
      const double down = eval();
      w = w0;
      const double num = (up - down) / (2 * h);
      scale = std::max(scale, std::abs(num));
      diff = std::max(diff, std::abs(num - analytic[k].data()[i]));
    }
    ++k;
  }
  const double worst = diff / scale;
  return worst;
}

}  // namespace

TEST_CASE("recon loss: examples and loop oracle") {
  const Matrix x = Matrix::from_rows({{1, 2}, {3, 4}});
  CHECK(losses::recon_loss(x, x) == 0.0);
  CHECK(losses::recon_loss(Matrix(1, 1, 0.0), Matrix(1, 1, 2.0)) == doctest::Approx(4.0));
  std::mt19937_64 rng(1);
  const Matrix a = random_matrix(7, 5, rng), b = random_matrix(7, 5, rng);
  double s = 0;
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t f = 0; f < 5; ++f) s += (a(i, f) - b(i, f)) * (a(i, f) - b(i, f));
  CHECK(losses::recon_loss(a, b) == doctest::Approx(s / 7).epsilon(1e-12));
  CHECK_THROWS_AS(losses::recon_loss(a, Matrix(7, 4)), ShapeError);
}

TEST_CASE("kl loss: examples and quadrature") {
  CHECK(losses::kl_loss(Matrix(3, 2, 0.0), Matrix(3, 2, 1.0)) == doctest::Approx(0.0));
  CHECK(losses::kl_loss(Matrix(1, 1, 1.0), Matrix(1, 1, 1.0)) == doctest::Approx(0.5));
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.3, 2.0), n(-2, 2);
  for (int t = 0; t < 5; ++t) {
    const double mu = n(rng), s = u(rng);
    CHECK(losses::kl_loss(Matrix(1, 1, mu), Matrix(1, 1, s)) == doctest::Approx(oracle::kl_quadrature(mu, s)).epsilon(1e-3));
  }
  CHECK_THROWS_AS(losses::kl_loss(Matrix(1, 1, 0.0), Matrix(1, 1, 0.0)), Error);
  // The tape version takes log-variance.
  ad::Tape tape;
  const auto v = losses::kl_loss(tape.constant(Matrix(1, 1, 1.0)), tape.constant(Matrix(1, 1, 0.0)));
  CHECK(v.scalar() == doctest::Approx(0.5));
}

TEST_CASE("relativistic losses: hand examples") {
  const std::vector<Matrix> zeros(3, Matrix(4, 3, 0.0));
  CHECK(losses::relativistic_disc_loss(zeros) == doctest::Approx(std::log(2.0)));
  CHECK(losses::relativistic_vae_loss(zeros) == doctest::Approx(std::log(2.0)));

  // Modality-0 latents: s[0][0]=2, s[1][0]=0; modality-1 latents: s[0][1]=0, s[1][1]=2.
  const std::vector<Matrix> m2{Matrix::from_rows({{2, 0}}), Matrix::from_rows({{0, 2}})};
  CHECK(arg_of(m2, true)(0, 0) == doctest::Approx(-4.0));
  CHECK(losses::relativistic_disc_loss(m2) == doctest::Approx(std::log1p(std::exp(-4.0))).epsilon(1e-12));
  CHECK(losses::relativistic_vae_loss(m2) == doctest::Approx(std::log1p(std::exp(4.0))).epsilon(1e-12));
  CHECK(losses::relativistic_vae_loss(m2) == doctest::Approx(4.01815).epsilon(1e-5));
  CHECK(losses::relativistic_disc_loss(m2) == doctest::Approx(0.01815).epsilon(1e-3));

  const std::vector<Matrix> bad{Matrix(2, 2), Matrix(3, 2)};
  CHECK_THROWS_AS(losses::relativistic_disc_loss(bad), ShapeError);
}

TEST_CASE("relativistic losses: sign flip for two modalities on random tables") {
  std::mt19937_64 rng(3);
  double worst = 0;
  for (int t = 0; t < 100; ++t) {
    const auto table = random_table(2, 6, rng);
    const Matrix a = arg_of(table, true), b = arg_of(table, false);
    for (std::size_t r = 0; r < a.rows(); ++r) worst = std::max(worst, std::abs(a(r, 0) + b(r, 0)));
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("relativistic losses: three modalities follow a' = -a + (M-2) * sum of own logits") {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 20; ++t) {
    const auto table = random_table(3, 5, rng);
    const Matrix a = arg_of(table, true), b = arg_of(table, false);
    for (std::size_t r = 0; r < 5; ++r) {
      double own = 0;
      for (std::size_t i = 0; i < 3; ++i) own += table[i](r, i);
      CHECK(b(r, 0) == doctest::Approx(-a(r, 0) + own).epsilon(1e-12));
    }
  }
}

TEST_CASE("gradient penalty: constant discriminator and finite differences") {
  // A discriminator with zero weights except biases ignores its input.
  auto spec = model::ArchitectureSpec::defaults({3, 2}, 2, 2);
  spec.encoder_hidden = {{4}, {4}};
  spec.decoder_hidden = {{4}, {4}};
  spec.trunk = {5, 4, 3};
  model::ModelParams p = model::init_params(spec, 5);
  for (auto& t : p.tensors)
    if (t.group == model::Group::discriminator && t.name.find("weight") != std::string::npos)
      t.value = Matrix(t.value.rows(), t.value.cols(), 0.0);
  std::mt19937_64 rng(6);
  const std::vector<Matrix> z{random_matrix(4, 2, rng), random_matrix(4, 2, rng)};
  CHECK(losses::relativistic_disc_loss(p, z, 10.0).grad_penalty == 0.0);

  // Penalty on a fixed two-layer critic against finite differences of its own logit.
  const Matrix w1 = random_matrix(2, 3, rng), w2 = random_matrix(3, 2, rng);
  auto critic = [&](const ad::Var& z) {
    const auto h = ad::softplus(ad::matmul(z, z.tape().constant(w1)));
    return ad::matmul(h, z.tape().constant(w2));  // B × 2, column m is "own"
  };
  ad::Tape tape;
  std::vector<ad::Var> leaves{tape.variable(z[0]), tape.variable(z[1])};
  std::vector<ad::Var> logits{critic(leaves[0]), critic(leaves[1])};
  const double gamma = 3.0;
  const double got = losses::gradient_penalty(leaves, logits, gamma).scalar();
  double expect = 0;
  const double h = 1e-6;
  for (std::size_t m = 0; m < 2; ++m) {
    double acc = 0;
    for (std::size_t b = 0; b < 4; ++b) {
      for (std::size_t l = 0; l < 2; ++l) {
        auto f = [&](double delta) {
          ad::Tape t2;
          Matrix zz = z[m];
          zz(b, l) += delta;
          return critic(t2.constant(zz)).value()(b, m);
        };
        const double g = (f(h) - f(-h)) / (2 * h);
        acc += g * g;
      }
    }
    expect += acc / 4;
  }
  expect *= gamma / 2;
  CHECK(got == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("class loss: examples, masking and order invariance") {
  const int labels[] = {0, 2};
  Matrix sharp = Matrix::from_rows({{60, 0, 0}, {0, 0, 60}});
  CHECK(losses::class_loss(sharp, labels) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(losses::class_loss(Matrix(4, 5, 0.0), std::vector<int>{0, 1, 2, 3}) == doctest::Approx(std::log(5.0)));
  CHECK(losses::class_loss(Matrix(2, 5, 1.0), std::vector<int>{kUnlabeled, kUnlabeled}) == 0.0);
  CHECK_THROWS_AS(losses::class_loss(Matrix(1, 3), std::vector<int>{3}), Error);

  std::mt19937_64 rng(7);
  const Matrix logits = random_matrix(8, 4, rng);
  std::vector<int> y{0, 1, 2, 3, kUnlabeled, 1, 2, 0};
  std::vector<std::size_t> perm(8);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<int> y2;
  for (auto i : perm) y2.push_back(y[i]);
  CHECK(std::abs(losses::class_loss(logits, y) - losses::class_loss(logits.gather_rows(perm), y2)) <= 1e-12);
}

TEST_CASE("clustering loss: examples, loop oracle and bounds") {
  // Two far-apart points with orthogonal assignments: kernel ~ identity, c1 = 0.
  const Matrix h = Matrix::from_rows({{0, 0}, {100, 0}});
  const Matrix alpha = Matrix::from_rows({{1, 0}, {0, 1}});
  CHECK(losses::clustering_loss(h, alpha, 1.0).c1 == doctest::Approx(0.0));

  std::mt19937_64 rng(8);
  const Matrix hu = random_matrix(6, 3, rng);
  CHECK(losses::clustering_loss(hu, Matrix(6, 4, 0.25), 1.0).c3 == doctest::Approx(-std::log(4.0)));

  const Matrix h3 = random_matrix(3, 2, rng);
  const auto near = Matrix::from_rows({{1 - 2e-9, 1e-9, 1e-9}, {1 - 2e-9, 1e-9, 1e-9}, {1 - 2e-9, 1e-9, 1e-9}});
  const auto v = losses::clustering_loss(h3, near, 0.8);
  const auto o = oracle::clustering_loops(h3, near, 0.8);
  CHECK(v.c1 == doctest::Approx(o.c1).epsilon(1e-9));
  CHECK(v.c2 == doctest::Approx(o.c2).epsilon(1e-9));
  CHECK(v.c3 == doctest::Approx(o.c3).epsilon(1e-9));
  CHECK(v.c3 <= 0.0);
  CHECK(v.c3 > -1e-6);

  for (int t = 0; t < 20; ++t) {
    const Matrix hh = random_matrix(7, 3, rng);
    Matrix a = random_matrix(7, 4, rng);
    for (std::size_t r = 0; r < 7; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < 4; ++c) s += (a(r, c) = std::exp(a(r, c)));
      for (std::size_t c = 0; c < 4; ++c) a(r, c) /= s;
    }
    const double sigma = losses::median_bandwidth(hh);
    const auto got = losses::clustering_loss(hh, a, sigma);
    const auto ref = oracle::clustering_loops(hh, a, sigma);
    CHECK(got.c1 == doctest::Approx(ref.c1).epsilon(1e-9));
    CHECK(got.c2 == doctest::Approx(ref.c2).epsilon(1e-9));
    CHECK(got.c3 == doctest::Approx(ref.c3).epsilon(1e-9));
    CHECK(got.c1 >= 0.0);
    CHECK(got.c1 <= 1.0);
    CHECK(got.c2 >= 0.0);
    CHECK(got.c2 <= 1.0);
    CHECK(got.c3 >= -std::log(4.0) - 1e-12);
    CHECK(got.c3 <= 0.0);
  }
  CHECK_THROWS_AS(losses::median_bandwidth(Matrix(4, 2, 1.0)), NumericalError);
}

TEST_CASE("loss totals") {
  losses::LossReport zero;
  zero.recon = {0, 0};
  zero.kl = {0, 0};
  CHECK(losses::total_disc_loss(zero) == 0.0);
  CHECK(losses::total_vae_loss(zero, 0.5) == 0.0);

  losses::LossReport r;
  r.recon = {1.5, 2.5};
  r.kl = {10, 20};
  r.rel_d = 0.7;
  r.rel_vae = 0.9;
  r.grad_penalty = 0.3;
  r.class_ce = 1.1;
  r.c1 = 0.2;
  r.c2 = 0.4;
  r.c3 = -0.6;
  CHECK(losses::total_disc_loss(r) == doctest::Approx(0.7 + 0.3 + 1.1 + 0.0).epsilon(1e-12));
  CHECK(losses::total_vae_loss(r, 0.0) == doctest::Approx(4.0 + 0.9 + 1.1).epsilon(1e-12));
  CHECK(losses::total_vae_loss(r, 0.01) == doctest::Approx(4.0 + 0.3 + 0.9 + 1.1).epsilon(1e-12));
  r.c2 = std::nan("");
  CHECK_THROWS_AS(losses::total_disc_loss(r), NumericalError);
}

TEST_CASE("model-level gradients of both objectives match finite differences") {
  Toy toy = make_toy(9);
  const double sigma = 0.7;
  const double disc = objective_gradient_error(toy, model::Group::discriminator, [&](const model::Network& net) {
    return train::discriminator_objective(net, toy.batch, toy.cfg, toy.noise, sigma);
  });
  const double vae = objective_gradient_error(toy, model::Group::vae, [&](const model::Network& net) {
    return train::vae_objective(net, toy.batch, toy.cfg, toy.noise, sigma);
  });
  CHECK(disc <= 1e-3);
  CHECK(vae <= 1e-3);

  // The penalty on its own, so a second-order error cannot hide behind other terms.
  const double pen = objective_gradient_error(toy, model::Group::discriminator, [&](const model::Network& net) {
    auto obj = train::discriminator_objective(net, toy.batch, toy.cfg, toy.noise, sigma);
    ad::Tape& tape = net.vars().front().tape();
    std::vector<ad::Var> z;
    for (std::size_t m = 0; m < 2; ++m) {
      const auto enc = model::encode(toy.params, m, toy.batch.modalities[m].x);
      z.push_back(tape.variable(model::sample_latent(enc, toy.noise[m])));
    }
    const auto d = net.discriminate(ad::vstack(z));
    std::vector<ad::Var> logits{ad::slice_rows(d.modality_logits, 0, 4), ad::slice_rows(d.modality_logits, 4, 4)};
    obj.total = losses::gradient_penalty(z, logits, toy.cfg.gamma);
    return obj;
  });
  CHECK(pen <= 1e-3);
}

TEST_CASE("objective reports satisfy the total invariants") {
  Toy toy = make_toy(10);
  ad::Tape tape;
  model::Network net(tape, toy.params, true, true);
  const auto d = train::discriminator_objective(net, toy.batch, toy.cfg, toy.noise);
  const auto v = train::vae_objective(net, toy.batch, toy.cfg, toy.noise);
  CHECK(d.total.scalar() == doctest::Approx(d.report.total_d).epsilon(1e-9));
  CHECK(v.total.scalar() == doctest::Approx(v.report.total_vae).epsilon(1e-9));
  CHECK(d.report.labeled == 6);
  CHECK(d.report.sigma_kernel > 0);
  const auto j = losses::to_json(v.report);
  CHECK(j.contains("rel_VAE"));
  CHECK(j.contains("c3"));
}
