// modislab: simulate, preprocess, train, evaluate, gridsearch, scenario, plot.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "modis/checkpoint.hpp"
#include "modis/data_synth.hpp"
#include "modis/error.hpp"
#include "modis/evalkit.hpp"
#include "modis/plot.hpp"
#include "modis/preprocess.hpp"
#include "modis/scenario.hpp"
#include "modis/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace modis;

namespace {

constexpr const char* kVersion = "0.1.0";

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// A simulate bundle holds train/, test/ and paired/; a bare dataset
// directory holds dataset.json.
fs::path train_dir(const fs::path& data) { return fs::exists(data / "train" / "dataset.json") ? data / "train" : data; }

// --- simulate ---------------------------------------------------------------

struct SimulateConfig {
  synth::GeneratorConfig generator;
  double test_ratio = 0.2;
  std::optional<synth::LabelMask> labels;
  std::optional<std::pair<int, std::size_t>> imbalance;  // (class, per modality)
  std::vector<synth::ClassModality> missing_cells;
  std::size_t missing_keep = 0;
};

SimulateConfig simulate_config(const json& j) {
  if (!j.is_object()) throw ConfigError("simulate config must be a JSON object");
  SimulateConfig c;
  c.generator.n_samples = 3750;
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "n_samples") c.generator.n_samples = v.get<std::size_t>();
      else if (key == "n_classes") c.generator.n_classes = v.get<std::size_t>();
      else if (key == "modality_dims") c.generator.modality_dims = v.get<std::vector<std::size_t>>();
      else if (key == "class_separation") c.generator.class_separation = v.get<double>();
      else if (key == "latent_factor_dim") c.generator.latent_factor_dim = v.get<std::size_t>();
      else if (key == "noise_sd") c.generator.noise_sd = v.get<double>();
      else if (key == "feature_scale") c.generator.feature_scale = v.get<double>();
      else if (key == "seed") c.generator.seed = v.get<std::uint64_t>();
      else if (key == "test_ratio") c.test_ratio = v.get<double>();
      else if (key == "label_fraction") c.labels = synth::LabelFraction{v.get<double>()};
      else if (key == "labels_per_pair") c.labels = synth::LabelsPerPair{v.get<std::size_t>()};
      else if (key == "imbalance") c.imbalance = {v.at("target_class").get<int>(), v.at("per_modality").get<std::size_t>()};
      else if (key == "missing_pairs") {
        c.missing_keep = v.value("keep", std::size_t{0});
        for (const auto& cell : v.at("cells")) {
          c.missing_cells.push_back({cell.at(0).get<int>(), cell.at(1).get<std::size_t>()});
        }
      } else throw ConfigError("unknown config field '" + key + "'");
    } catch (const json::exception&) {
      throw ConfigError(key + ": wrong type or shape (" + v.dump() + ")");
    }
  }
  if (!(c.test_ratio > 0 && c.test_ratio < 1)) throw ConfigError("test_ratio must lie in (0, 1)");
  c.generator.validate();
  return c;
}

int cmd_simulate(const fs::path& config, const fs::path& out, std::optional<std::uint64_t> seed) {
  SimulateConfig c = simulate_config(config.empty() ? json::object() : read_json(config));
  if (seed) c.generator.seed = *seed;
  const std::uint64_t s = c.generator.seed;
  const auto paired = synth::generate_paired(c.generator);
  auto [train, test] = synth::split_train_test(synth::unpair(paired, s), c.test_ratio, s);
  if (c.imbalance) train = synth::subsample_class(train, c.imbalance->first, c.imbalance->second, s);
  if (!c.missing_cells.empty()) train = synth::drop_modality_class(train, c.missing_cells, c.missing_keep, s);
  if (c.labels) train = synth::mask_labels(train, *c.labels, s);

  fs::create_directories(out);
  write_dataset(out / "train", train);
  write_dataset(out / "test", test);
  write_paired(out / "paired", paired, s);
  write_json(out / "manifest.json", {{"kind", "modislab-simulation"},
                                     {"seed", s},
                                     {"n_samples", c.generator.n_samples},
                                     {"n_classes", c.generator.n_classes},
                                     {"modality_dims", c.generator.modality_dims},
                                     {"class_separation", c.generator.class_separation},
                                     {"test_ratio", c.test_ratio},
                                     {"train_records", train.size()},
                                     {"train_labeled", train.labeled_count()},
                                     {"test_records", test.size()},
                                     {"provenance", train.provenance}});
  std::cout << "wrote " << out.string() << " (" << train.size() << " train, " << test.size() << " test records)\n";
  return 0;
}

// --- preprocess -------------------------------------------------------------

int cmd_preprocess(const fs::path& config, const fs::path& in, const fs::path& out) {
  const json j = read_json(config);
  if (!j.is_object() || !j.contains("kind") || !j.contains("steps")) {
    throw ConfigError("preprocess config needs 'kind' and 'steps'");
  }
  for (const auto& [key, v] : j.items()) {
    if (key != "kind" && key != "steps") throw ConfigError("unknown config field '" + key + "'");
  }
  prep::FeatureMatrix m = prep::read_feature_csv(in, prep::parse_kind(j["kind"].get<std::string>()));
  fs::create_directories(out);
  json log = json::array();
  for (const auto& step : j["steps"]) {
    const std::string op = step.at("op").get<std::string>();
    json entry{{"op", op}, {"cols_before", m.cols()}};
    if (op == "filter_methylation") {
      m = prep::filter_methylation(m, step.value("max_missing_frac", 0.2), step.value("min_sd", 0.1));
    } else if (op == "impute_mean") {
      m = prep::impute_mean(m);
    } else if (op == "beta_to_m") {
      m = prep::beta_to_m(m);
    } else if (op == "filter_counts") {
      m = prep::filter_counts(m, step.value("min_count", 5.0), step.value("max_missing_frac", 0.9));
    } else if (op == "median_of_ratios") {
      auto r = prep::median_of_ratios(m);
      m = std::move(r.normalized);
      entry["size_factors"] = r.size_factors;
    } else if (op == "log2p1") {
      m = prep::log2p1(m);
    } else if (op == "standardize_pca") {
      const auto k = step.at("n_components").get<std::size_t>();
      const auto r = prep::standardize_pca(m, k);
      prep::FeatureMatrix scores;
      scores.values = r.scores;
      scores.row_ids = m.row_ids;
      for (std::size_t c = 0; c < r.scores.cols(); ++c) scores.col_ids.push_back("pc" + std::to_string(c + 1));
      entry["explained_fraction"] = r.explained_fraction;
      m = std::move(scores);
    } else {
      throw ConfigError("steps: unknown op '" + op + "'");
    }
    entry["cols_after"] = m.cols();
    log.push_back(entry);
  }
  write_feature_csv(out / "features.csv", m);
  write_json(out / "preprocess.json", {{"input", in.string()}, {"steps", log}});
  return 0;
}

// --- train / evaluate -------------------------------------------------------

int cmd_train(const fs::path& config, const fs::path& data, const fs::path& out, const std::optional<fs::path>& resume,
              std::optional<std::uint64_t> seed) {
  train::TrainConfig cfg = train::config_from_json(config.empty() ? json::object() : read_json(config));
  if (seed) cfg.seed = *seed;
  const auto ds = read_dataset(train_dir(data));
  fs::create_directories(out);
  write_json(out / "run.json", {{"data", fs::absolute(data).string()}, {"config", train::to_json(cfg)}});
  train::FitOptions opts;
  opts.out_dir = out;
  opts.resume_from = resume;
  opts.keep_history = false;
  std::size_t steps = 0;
  opts.on_step = [&](const train::StepRecord&) { ++steps; };
  const auto result = train::fit(ds, cfg, opts);
  std::cout << "trained " << steps << " steps; checkpoint at " << (out / "ckpt" / "final").string() << '\n';
  return 0;
}

int cmd_evaluate(const fs::path& out, std::optional<fs::path> data, std::optional<fs::path> ckpt) {
  if (!data) {
    if (!fs::exists(out / "run.json")) throw ConfigError("--data is required when run.json is absent");
    data = fs::path(read_json(out / "run.json").at("data").get<std::string>());
  }
  if (!ckpt) ckpt = out / "ckpt" / "final";
  const auto params = read_checkpoint(*ckpt).params;
  const fs::path test_dir = fs::exists(*data / "test" / "dataset.json") ? *data / "test" : *data;
  const auto test = read_dataset(test_dir);
  std::optional<PairedDataset> paired;
  if (fs::exists(*data / "paired")) paired = read_paired(*data / "paired");
  const auto report = eval::evaluate(params, test, paired ? &*paired : nullptr);
  eval::write_evaluation(out, report, eval::latent_projection(params, test));
  std::cout << "bacc " << report.bacc << "  nmi " << report.nmi << "  ari " << report.ari << '\n';
  return 0;
}

// --- gridsearch / scenario / plot -------------------------------------------

int cmd_gridsearch(const fs::path& grid_config, const fs::path& train_config, const fs::path& data, const fs::path& out,
                   std::optional<std::uint64_t> seed) {
  const json g = read_json(grid_config);
  train::TrainConfig base;
  if (!train_config.empty()) base = train::config_from_json(read_json(train_config));
  if (seed) base.seed = *seed;
  const auto grid = train::grid_from_json(g);
  const auto rows = train::grid_search_cv(read_dataset(train_dir(data)), base, grid);
  fs::create_directories(out);
  train::write_grid_csv(out / "gridsearch.csv", rows);
  if (!rows.empty()) write_json(out / "best_config.json", train::to_json(rows.front().config));
  return 0;
}

int cmd_scenario(const fs::path& config, const fs::path& out, std::optional<std::uint64_t> seed) {
  auto spec = scenario::spec_from_json(read_json(config));
  if (seed) spec.base_seed = *seed;
  const auto cells = scenario::run_scenario(spec, out, scenario::workers_from_env());
  std::size_t failed = 0;
  for (const auto& c : cells) failed += !c.ok;
  std::cout << cells.size() - failed << " cells ok, " << failed << " failed; summary at "
            << (out / "summary.csv").string() << '\n';
  return 0;
}

int cmd_plot(const fs::path& in, const fs::path& out) {
  for (const auto& p : plot::render_directory(in, out)) std::cout << p.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"modislab: coupled VAEs with adversarial latent alignment"};
  app.set_version_flag("--version", json{{"name", "modislab"}, {"version", kVersion}}.dump());
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed;
  fs::path config, data, out, in, train_config;
  std::optional<fs::path> resume, ckpt, data_opt;

  auto* sim = app.add_subcommand("simulate", "generate a synthetic train/test/paired bundle");
  sim->add_option("--config", config, "generator JSON")->check(CLI::ExistingFile);
  sim->add_option("--out", out, "output directory")->required();
  sim->add_option("--seed", seed, "random seed");

  auto* pre = app.add_subcommand("preprocess", "run a preprocessing recipe on a feature CSV");
  pre->add_option("--config", config, "recipe JSON")->required()->check(CLI::ExistingFile);
  pre->add_option("--in", in, "input feature CSV")->required()->check(CLI::ExistingFile);
  pre->add_option("--out", out, "output directory")->required();

  auto* tr = app.add_subcommand("train", "fit a model");
  tr->add_option("--config", config, "training JSON")->check(CLI::ExistingFile);
  tr->add_option("--data", data, "dataset or simulate bundle")->required()->check(CLI::ExistingDirectory);
  tr->add_option("--out", out, "run directory")->required();
  tr->add_option("--resume", resume, "checkpoint directory to resume from");
  tr->add_option("--seed", seed, "random seed");

  auto* ev = app.add_subcommand("evaluate", "evaluate a trained run");
  ev->add_option("--out", out, "run directory")->required();
  ev->add_option("--data", data_opt, "dataset or simulate bundle (default: from run.json)");
  ev->add_option("--ckpt", ckpt, "checkpoint directory (default: <out>/ckpt/final)");

  auto* gs = app.add_subcommand("gridsearch", "k-fold grid search");
  gs->add_option("--config", config, "grid JSON")->required()->check(CLI::ExistingFile);
  gs->add_option("--train-config", train_config, "base training JSON")->check(CLI::ExistingFile);
  gs->add_option("--data", data, "dataset or simulate bundle")->required()->check(CLI::ExistingDirectory);
  gs->add_option("--out", out, "output directory")->required();
  gs->add_option("--seed", seed, "random seed");

  auto* sc = app.add_subcommand("scenario", "run a replicated experiment grid");
  sc->add_option("--config", config, "scenario JSON")->required()->check(CLI::ExistingFile);
  sc->add_option("--out", out, "results directory")->required();
  sc->add_option("--seed", seed, "base seed");

  auto* pl = app.add_subcommand("plot", "render SVG figures from evaluation files");
  pl->add_option("--in", in, "evaluation directory")->required()->check(CLI::ExistingDirectory);
  pl->add_option("--out", out, "figure directory (default: <in>/figures)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 2;
  }

  try {
    if (sim->parsed()) return cmd_simulate(config, out, seed);
    if (pre->parsed()) return cmd_preprocess(config, in, out);
    if (tr->parsed()) return cmd_train(config, data, out, resume, seed);
    if (ev->parsed()) return cmd_evaluate(out, data_opt, ckpt);
    if (gs->parsed()) return cmd_gridsearch(config, train_config, data, out, seed);
    if (sc->parsed()) return cmd_scenario(config, out, seed);
    if (pl->parsed()) return cmd_plot(in, out.empty() ? in / "figures" : out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
