#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "modis/data_synth.hpp"
#include "modis/error.hpp"
#include "modis/trainer.hpp"

using namespace modis;
namespace fs = std::filesystem;

namespace {

UnpairedDataset toy_dataset(std::size_t n, std::vector<std::size_t> dims, std::size_t classes, std::uint64_t seed) {
  synth::GeneratorConfig g;
  g.n_samples = n;
  g.n_classes = classes;
  g.modality_dims = std::move(dims);
  g.latent_factor_dim = 4;
  g.seed = seed;
  return synth::unpair(synth::generate_paired(g), seed);
}

train::TrainConfig small_config() {
  train::TrainConfig c;
  c.epochs = 1;
  c.batch_size = 8;
  c.latent_dim = 3;
  c.encoder_hidden = {8};
  c.decoder_hidden = {8};
  c.trunk = {8, 6, 4};
  c.learning_rate = 1e-3;
  return c;
}

bool group_equal(const model::ModelParams& a, const model::ModelParams& b, model::Group g) {
  for (std::size_t i = 0; i < a.tensors.size(); ++i)
    if (a.tensors[i].group == g && a.tensors[i].value != b.tensors[i].value) return false;
  return true;
}

}  // namespace

TEST_CASE("make_batches: step counts, coverage and determinism") {
  auto ds = toy_dataset(300, {4, 3, 5}, 2, 1);
  CHECK(ds.modalities[0].size() == 100);
  CHECK(train::steps_per_epoch(ds, 32) == 4);
  const auto b0 = train::make_batches(ds, 32, 7, 0);
  CHECK(b0.size() == 4);
  for (const auto& b : b0) {
    CHECK(b.size() == 32);
    CHECK(b.modalities.size() == 3);
  }
  // First ceil(n / B) * B rows cover every record of each modality.
  for (std::size_t m = 0; m < 3; ++m) {
    std::set<std::size_t> seen;
    for (const auto& b : b0) seen.insert(b.modalities[m].rows.begin(), b.modalities[m].rows.end());
    CHECK(seen.size() == 100);
  }
  const auto again = train::make_batches(ds, 32, 7, 0);
  const auto next = train::make_batches(ds, 32, 7, 1);
  CHECK(again[0].modalities[1].rows == b0[0].modalities[1].rows);
  CHECK(next[0].modalities[1].rows != b0[0].modalities[1].rows);
  CHECK(b0[0].modalities[0].x == ds.modalities[0].x.gather_rows(b0[0].modalities[0].rows));

  auto single = toy_dataset(16, {4}, 2, 2);
  const auto one = train::make_batches(single, 16, 3, 0);
  REQUIRE(one.size() == 1);
  CHECK(std::set<std::size_t>(one[0].modalities[0].rows.begin(), one[0].modalities[0].rows.end()).size() == 16);

  ds.modalities[1] = ds.modalities[1].subset({});
  CHECK_THROWS_WITH_AS(train::make_batches(ds, 32, 7, 0), doctest::Contains("modality 1"), DataError);
}

TEST_CASE("train steps: zero learning rate, isolation and loss decrease") {
  const auto ds = toy_dataset(240, {6, 5}, 2, 3);
  auto cfg = small_config();
  auto params = model::init_params(cfg.architecture(ds.dims(), 2), 4);
  auto disc = AdamState::for_group(params, model::Group::discriminator);
  auto vae = AdamState::for_group(params, model::Group::vae);
  const auto batches = train::make_batches(ds, 8, 5, 0);

  auto frozen = cfg;
  frozen.learning_rate = 0;
  const auto before = params;
  train::train_step_discriminator(params, disc, batches[0], frozen, 0);
  train::train_step_vaes(params, vae, batches[0], frozen, 0);
  CHECK(group_equal(params, before, model::Group::vae));
  CHECK(group_equal(params, before, model::Group::discriminator));

  const auto r = train::train_step_discriminator(params, disc, batches[0], cfg, 1);
  CHECK(group_equal(params, before, model::Group::vae));
  CHECK_FALSE(group_equal(params, before, model::Group::discriminator));
  CHECK(r.total_d == doctest::Approx(r.rel_d + r.grad_penalty + r.class_ce + r.c1 + r.c2 + r.c3).epsilon(1e-12));
  const auto mid = params;
  const auto v = train::train_step_vaes(params, vae, batches[0], cfg, 1);
  CHECK(group_equal(params, mid, model::Group::discriminator));
  CHECK_FALSE(group_equal(params, mid, model::Group::vae));
  CHECK(v.recon.size() == 2);

  // 200 steps on one fixed batch: both objectives end below their first value.
  auto p2 = model::init_params(cfg.architecture(ds.dims(), 2), 6);
  auto d2 = AdamState::for_group(p2, model::Group::discriminator);
  auto v2 = AdamState::for_group(p2, model::Group::vae);
  auto p3 = p2;
  auto v3 = v2;
  const double d_first = train::train_step_discriminator(p2, d2, batches[1], cfg, 0).total_d;
  double d_last = d_first;
  for (std::uint64_t s = 1; s < 200; ++s) d_last = train::train_step_discriminator(p2, d2, batches[1], cfg, 0).total_d;
  CHECK(d_last < d_first);
  const double v_first = train::train_step_vaes(p3, v3, batches[1], cfg, 0).total_vae;
  double v_last = v_first;
  for (std::uint64_t s = 1; s < 200; ++s) v_last = train::train_step_vaes(p3, v3, batches[1], cfg, 0).total_vae;
  CHECK(v_last < v_first);
}

TEST_CASE("fit: dry run, isolation checks, history, determinism and resume") {
  const auto ds = toy_dataset(120, {6, 5}, 2, 7);
  auto cfg = small_config();
  cfg.epochs = 2;
  cfg.seed = 9;
  cfg.checkpoint_every = 1;

  auto dry = cfg;
  dry.dry_run = true;
  const auto init = model::init_params(cfg.architecture(ds.dims(), 2), cfg.seed);
  const auto d = train::fit(ds, dry);
  CHECK(group_equal(d.params, init, model::Group::vae));
  CHECK(group_equal(d.params, init, model::Group::discriminator));
  CHECK(d.history.empty());

  const auto dir = fs::temp_directory_path() / "modis_fit_test";
  fs::remove_all(dir);
  train::FitOptions opt;
  opt.out_dir = dir;
  opt.verify_isolation = true;
  const auto a = train::fit(ds, cfg, opt);
  CHECK(a.history.size() == 2 * train::steps_per_epoch(ds, cfg.batch_size));
  CHECK(fs::exists(dir / "ckpt" / "epoch_1" / "manifest.json"));
  CHECK(fs::exists(dir / "ckpt" / "final" / "manifest.json"));
  std::ifstream hist(dir / "history.jsonl");
  std::size_t lines = 0;
  for (std::string line; std::getline(hist, line); ++lines) {
    const auto j = nlohmann::json::parse(line);
    const auto& dj = j.at("disc");
    CHECK(dj.at("L_D").get<double>() ==
          doctest::Approx(dj.at("rel_D").get<double>() + dj.at("grad_penalty").get<double>() +
                          dj.at("class_ce").get<double>() + dj.at("c1").get<double>() + dj.at("c2").get<double>() +
                          dj.at("c3").get<double>())
              .epsilon(1e-9));
  }
  CHECK(lines == a.history.size());

  const auto b = train::fit(ds, cfg);
  for (std::size_t i = 0; i < a.params.tensors.size(); ++i) CHECK(a.params.tensors[i].value == b.params.tensors[i].value);

  // One epoch, then resume for the second: same weights as the straight run.
  auto first = cfg;
  first.epochs = 1;
  const auto dir2 = fs::temp_directory_path() / "modis_fit_resume";
  fs::remove_all(dir2);
  train::FitOptions o1;
  o1.out_dir = dir2;
  train::fit(ds, first, o1);
  train::FitOptions o2;
  o2.out_dir = dir2;
  o2.resume_from = dir2 / "ckpt" / "final";
  const auto resumed = train::fit(ds, cfg, o2);
  for (std::size_t i = 0; i < a.params.tensors.size(); ++i)
    CHECK(resumed.params.tensors[i].value == a.params.tensors[i].value);
  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST_CASE("config parsing and validation") {
  const auto c = train::config_from_json({{"epochs", 5}, {"lambda_r", 160.0}, {"beta", 1e-6}});
  CHECK(c.epochs == 5);
  CHECK(c.gamma == 160.0);
  CHECK(c.beta == 1e-6);
  CHECK_THROWS_WITH_AS(train::config_from_json({{"epoch", 5}}), doctest::Contains("epoch"), ConfigError);
  CHECK_THROWS_WITH_AS(train::config_from_json({{"batch_size", 0}}), doctest::Contains("batch_size"), ConfigError);
  CHECK_THROWS_WITH_AS(train::config_from_json({{"learning_rate", "x"}}), doctest::Contains("learning_rate"),
                       ConfigError);
  CHECK_THROWS_AS(train::config_from_json({{"gamma", -1.0}}), ConfigError);
  const auto round = train::config_from_json(train::to_json(c));
  CHECK(train::to_json(round) == train::to_json(c));

  const auto syn = train::TrainConfig::synthetic_profile();
  CHECK(syn.epochs == 300);
  CHECK(syn.batch_size == 32);
  CHECK(syn.learning_rate == 1e-4);
  CHECK(syn.beta == 1e-4);
  CHECK(syn.adam_beta1 == 0.5);
  CHECK(syn.gamma == 10.0);
  CHECK(train::TrainConfig::real_data_profile().gamma == 160.0);
}

TEST_CASE("stratified folds partition every stratum") {
  const auto ds = toy_dataset(150, {4, 3, 5}, 3, 11);
  const auto folds = train::stratified_folds(ds, 5, 2);
  REQUIRE(folds.size() == 3);
  for (std::size_t m = 0; m < 3; ++m) {
    REQUIRE(folds[m].size() == ds.modalities[m].size());
    for (int k = 0; k < 3; ++k) {
      std::vector<std::size_t> per(5, 0);
      for (auto r : ds.cell(k, m)) per[folds[m][r]] += 1;
      const auto [lo, hi] = std::minmax_element(per.begin(), per.end());
      CHECK(*hi - *lo <= 1);
    }
  }
}

TEST_CASE("grid search: single point, ranking and missing classes") {
  const auto ds = toy_dataset(150, {4, 3}, 2, 12);
  auto base = small_config();
  base.epochs = 2;
  train::GridSpec one;
  one.beta = {1e-4};
  one.latent_dim = {3};
  one.learning_rate = {1e-3};
  one.gamma = {10};
  one.folds = 3;
  const auto rows = train::grid_search_cv(ds, base, one);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].fold_bacc.size() == 3);
  CHECK(rows[0].fold_mse.size() == 3);
  CHECK(rows[0].mean_bacc == doctest::Approx((rows[0].fold_bacc[0] + rows[0].fold_bacc[1] + rows[0].fold_bacc[2]) / 3));

  auto two = one;
  two.learning_rate = {0.0, 3e-3};
  base.epochs = 6;
  const auto ranked = train::grid_search_cv(ds, base, two);
  REQUIRE(ranked.size() == 2);
  CHECK(ranked[0].config.learning_rate == 3e-3);
  CHECK(ranked[0].mean_bacc >= ranked[1].mean_bacc);

  const auto dir = fs::temp_directory_path() / "modis_grid_csv";
  fs::create_directories(dir);
  train::write_grid_csv(dir / "g.csv", ranked);
  std::ifstream in(dir / "g.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header.rfind("rank,beta,latent_dim,learning_rate,gamma,bacc_fold0", 0) == 0);
  fs::remove_all(dir);

  // Two class-0 records cannot reach three validation folds.
  const auto sparse = synth::drop_modality_class(ds, {{0, 0}, {0, 1}}, 1, 3);
  CHECK_THROWS_AS(train::grid_search_cv(sparse, base, one), DataError);

  CHECK_THROWS_AS(train::grid_from_json({{"beta", nlohmann::json::array()}}), ConfigError);
}
