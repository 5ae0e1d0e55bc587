#include <algorithm>
#include <random>

#include "doctest.h"
#include "modis/error.hpp"
#include "modis/evalkit.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace modis;
using testing::random_matrix;

namespace {

std::vector<int> random_labels(std::size_t n, int k, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> u(0, k - 1);
  std::vector<int> out(n);
  for (int& v : out) v = u(rng);
  return out;
}

// Two modalities of width 2 with identity encoders/decoders and a trunk that
// passes non-negative latents through unchanged.
model::ModelParams identity_model() {
  model::ArchitectureSpec spec;
  spec.modality_dims = {2, 2};
  spec.n_classes = 2;
  spec.latent_dim = 2;
  spec.encoder_hidden = {{}, {}};
  spec.decoder_hidden = {{}, {}};
  spec.trunk = {2, 2, 2};
  model::ModelParams p = model::zero_params(spec);
  for (auto& t : p.tensors) {
    const bool weight = t.name.find("weight") != std::string::npos;
    const bool square = t.value.rows() == 2 && t.value.cols() == 2;
    if (weight && square && t.name.find("logvar") == std::string::npos) t.value = Matrix::identity(2);
  }
  return p;
}

ModalityBlock block(const Matrix& x, std::vector<int> labels, std::vector<std::int64_t> pair) {
  ModalityBlock b;
  b.x = x;
  b.label = std::move(labels);
  b.pair_id = pair;
  b.sample_id = pair;
  return b;
}

}  // namespace

TEST_CASE("balanced accuracy: examples and invariances") {
  const std::vector<int> y{0, 1, 2, 2, 1};
  CHECK(eval::balanced_accuracy(y, y) == 1.0);
  // Confusion [[9,1],[4,6]].
  std::vector<int> t, p;
  for (int i = 0; i < 9; ++i) t.push_back(0), p.push_back(0);
  t.push_back(0), p.push_back(1);
  for (int i = 0; i < 4; ++i) t.push_back(1), p.push_back(0);
  for (int i = 0; i < 6; ++i) t.push_back(1), p.push_back(1);
  CHECK(eval::balanced_accuracy(t, p) == doctest::Approx(0.75));

  std::mt19937_64 rng(1);
  const auto truth = random_labels(20000, 5, rng), guess = random_labels(20000, 5, rng);
  CHECK(eval::balanced_accuracy(truth, guess) == doctest::Approx(0.2).epsilon(0.05));

  // Joint relabeling leaves B-ACC unchanged.
  const int perm[] = {3, 0, 4, 1, 2};
  auto small_t = random_labels(60, 5, rng), small_p = random_labels(60, 5, rng);
  std::vector<int> rt, rp;
  for (int v : small_t) rt.push_back(perm[v]);
  for (int v : small_p) rp.push_back(perm[v]);
  CHECK(eval::balanced_accuracy(small_t, small_p) == doctest::Approx(eval::balanced_accuracy(rt, rp)).epsilon(1e-12));

  CHECK_THROWS_AS(eval::balanced_accuracy(std::vector<int>{}, std::vector<int>{}), DataError);
  CHECK_THROWS_AS(eval::balanced_accuracy(std::vector<int>{1}, std::vector<int>{1, 2}), DataError);
}

TEST_CASE("metrics match brute-force oracles on random small labelings") {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> len(2, 30), kk(1, 5);
  for (int t = 0; t < 50; ++t) {
    const auto n = static_cast<std::size_t>(len(rng));
    const auto a = random_labels(n, kk(rng), rng), b = random_labels(n, kk(rng), rng);
    CHECK(eval::balanced_accuracy(a, b) == doctest::Approx(oracle::bacc_bruteforce(a, b)).epsilon(1e-9));
    CHECK(std::abs(eval::nmi(a, b) - oracle::nmi_bruteforce(a, b)) <= 1e-9);
    CHECK(std::abs(eval::ari(a, b) - oracle::ari_pairs(a, b)) <= 1e-9);
  }
}

TEST_CASE("nmi and ari: examples and label-permutation invariance") {
  const std::vector<int> a{0, 0, 1, 1}, b{0, 1, 0, 1};
  CHECK(eval::nmi(a, a) == doctest::Approx(1.0));
  CHECK(eval::ari(a, a) == doctest::Approx(1.0));
  CHECK(std::abs(eval::ari(a, b) - oracle::ari_pairs(a, b)) <= 1e-12);
  CHECK(std::abs(eval::nmi(a, b) - oracle::nmi_bruteforce(a, b)) <= 1e-12);
  CHECK(eval::nmi(a, b) == doctest::Approx(0.0));
  CHECK(eval::ari(a, b) == doctest::Approx(-0.5));

  std::mt19937_64 rng(3);
  const auto x = random_labels(10000, 5, rng), y = random_labels(10000, 5, rng);
  CHECK(std::abs(eval::ari(x, y)) < 0.05);

  const auto s = random_labels(40, 4, rng), u = random_labels(40, 3, rng);
  std::vector<int> s2;
  for (int v : s) s2.push_back(10 - v);
  CHECK(eval::ari(s, u) == doctest::Approx(eval::ari(s2, u)).epsilon(1e-12));
  CHECK(eval::nmi(s, u) == doctest::Approx(eval::nmi(u, s2)).epsilon(1e-12));
}

TEST_CASE("argmax ties go to the smallest index; zero model predicts class 0") {
  CHECK(eval::argmax_rows(Matrix::from_rows({{1, 3, 3}, {0, 0, 0}})) == std::vector<int>{1, 0});

  auto spec = model::ArchitectureSpec::defaults({4, 3}, 3, 2);
  const auto zero = model::zero_params(spec);
  UnpairedDataset ds;
  ds.n_classes = 3;
  std::mt19937_64 rng(4);
  ds.modalities.push_back(block(random_matrix(5, 4, rng), {0, 1, 2, 0, 1}, {0, 1, 2, 3, 4}));
  ds.modalities.push_back(block(random_matrix(3, 3, rng), {2, 2, 1}, {5, 6, 7}));
  CHECK(eval::predict_class(zero, ds) == std::vector<int>(8, 0));

  const auto trained = model::init_params(spec, 9);
  CHECK(eval::predict_class(trained, ds) == eval::predict_class(trained, ds));
}

TEST_CASE("aligned linear toy model recovers every label") {
  const auto p = identity_model();
  UnpairedDataset ds;
  ds.n_classes = 2;
  ds.modalities.push_back(block(Matrix::from_rows({{5, 1}, {1, 5}, {6, 0.5}}), {0, 1, 0}, {0, 1, 2}));
  ds.modalities.push_back(block(Matrix::from_rows({{0.2, 4}, {3, 0.1}}), {1, 0}, {3, 4}));
  CHECK(eval::predict_class(p, ds) == std::vector<int>{0, 1, 0, 1, 0});
  const auto r = eval::evaluate(p, ds);
  CHECK(r.bacc == 1.0);
  CHECK(r.n_evaluated == 5);
}

TEST_CASE("mse matrix: identity diagonal and pairwise baseline") {
  const auto p = identity_model();
  std::mt19937_64 rng(5);
  PairedDataset paired;
  paired.n_classes = 2;
  paired.modalities = {random_matrix(10, 2, rng), random_matrix(10, 2, rng)};
  paired.labels = {0, 1, 0, 1, 0, 1, 0, 1, 0, 1};
  UnpairedDataset test;
  test.n_classes = 2;
  const std::vector<std::int64_t> ids0{0, 2, 4, 6, 8}, ids1{1, 3, 5, 7, 9};
  auto rows = [](const std::vector<std::int64_t>& ids) { return std::vector<std::size_t>(ids.begin(), ids.end()); };
  test.modalities.push_back(block(paired.modalities[0].gather_rows(rows(ids0)), {0, 0, 0, 0, 0}, ids0));
  test.modalities.push_back(block(paired.modalities[1].gather_rows(rows(ids1)), {1, 1, 1, 1, 1}, ids1));

  const auto t = eval::mse_matrix(p, test, paired);
  CHECK(t.mse(0, 0) == doctest::Approx(0.0));
  CHECK(t.mse(1, 1) == doctest::Approx(0.0));
  double off = 0;
  for (auto i : ids0) {
    for (std::size_t f = 0; f < 2; ++f) {
      const double d = paired.modalities[0](i, f) - paired.modalities[1](i, f);
      off += d * d / 2;
    }
  }
  CHECK(t.mse(0, 1) == doctest::Approx(off / 5).epsilon(1e-12));
  CHECK(t.baseline[0] == doctest::Approx(oracle::pairwise_mse_loop(paired.modalities[0])).epsilon(1e-12));
  CHECK(eval::mean_pairwise_mse(paired.modalities[1]) ==
        doctest::Approx(oracle::pairwise_mse_loop(paired.modalities[1])).epsilon(1e-12));
  CHECK(t.n == std::vector<std::size_t>{5, 5});

  test.modalities[0].pair_id[0] = kNoPair;
  CHECK_THROWS_AS(eval::mse_matrix(p, test, paired), DataError);
}

TEST_CASE("evaluation report: confusion sums and projection") {
  auto spec = model::ArchitectureSpec::defaults({4, 3}, 3, 2);
  const auto params = model::init_params(spec, 11);
  std::mt19937_64 rng(6);
  UnpairedDataset ds;
  ds.n_classes = 3;
  ds.modalities.push_back(block(random_matrix(9, 4, rng), {0, 1, 2, 0, 1, 2, 0, 1, 2}, {0, 1, 2, 3, 4, 5, 6, 7, 8}));
  ds.modalities.push_back(block(random_matrix(6, 3, rng), {2, 2, 1, 0, 0, 1}, {9, 10, 11, 12, 13, 14}));
  const auto r = eval::evaluate(params, ds);
  Matrix sum(3, 3, 0.0);
  for (const auto& c : r.confusion_per_modality)
    for (std::size_t i = 0; i < 9; ++i) sum.data()[i] += c.data()[i];
  CHECK(sum == r.confusion);
  for (std::size_t k = 0; k < 3; ++k) {
    double row = 0;
    for (std::size_t j = 0; j < 3; ++j) row += r.confusion(k, j);
    CHECK(row == 5.0);
  }
  CHECK(r.bacc >= 0.0);
  CHECK(r.bacc <= 1.0);
  CHECK(r.ari >= -1.0);
  CHECK(r.ari <= 1.0);

  const auto proj = eval::latent_projection(params, ds);
  CHECK(proj.coords.rows() == 15);
  CHECK(proj.coords.cols() == 2);
  CHECK(proj.variance_fraction[0] >= proj.variance_fraction[1]);

  UnpairedDataset tiny;
  tiny.n_classes = 3;
  tiny.modalities.push_back(block(random_matrix(2, 4, rng), {0, 1}, {0, 1}));
  tiny.modalities.push_back(block(Matrix(0, 3), {}, {}));
  CHECK_THROWS_AS(eval::latent_projection(params, tiny), DataError);
}
