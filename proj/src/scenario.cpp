#include "modis/scenario.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include "modis/error.hpp"
#include "modis/kernels.hpp"

namespace modis::scenario {

namespace fs = std::filesystem;
using nlohmann::json;

Kind parse_kind(const std::string& name) {
  if (name == "supervision_sweep") return Kind::supervision_sweep;
  if (name == "label_fraction_sweep") return Kind::label_fraction_sweep;
  if (name == "imbalance_sweep") return Kind::imbalance_sweep;
  if (name == "missing_pairs") return Kind::missing_pairs;
  throw ConfigError("kind: unknown scenario kind '" + name + "'");
}

std::string kind_name(Kind kind) {
  switch (kind) {
    case Kind::supervision_sweep: return "supervision_sweep";
    case Kind::label_fraction_sweep: return "label_fraction_sweep";
    case Kind::imbalance_sweep: return "imbalance_sweep";
    case Kind::missing_pairs: return "missing_pairs";
  }
  return "?";
}

void ScenarioSpec::validate() const {
  if (parameters.empty()) throw ConfigError("parameters: at least one value is required");
  if (replicates < 1) throw ConfigError("replicates must be >= 1");
  if (!(test_ratio > 0.0 && test_ratio < 1.0)) throw ConfigError("test_ratio must lie in (0, 1)");
  generator.validate();
  training.validate();
  for (double p : parameters) {
    if (!std::isfinite(p) || p < 0.0) throw ConfigError("parameters: values must be finite and non-negative");
    if (kind == Kind::supervision_sweep && p > 1.0) throw ConfigError("parameters: label fractions must be <= 1");
    if (kind != Kind::supervision_sweep && p != std::floor(p)) {
      throw ConfigError("parameters: " + kind_name(kind) + " takes integer counts");
    }
  }
  if (target_class < 0 || static_cast<std::size_t>(target_class) >= generator.n_classes) {
    throw ConfigError("target_class out of range");
  }
  if (kind == Kind::missing_pairs && cells.empty()) throw ConfigError("cells: missing_pairs needs at least one cell");
  for (const auto& c : cells) {
    if (c.label < 0 || static_cast<std::size_t>(c.label) >= generator.n_classes ||
        c.modality >= generator.modality_dims.size()) {
      throw ConfigError("cells: (" + std::to_string(c.label) + ", " + std::to_string(c.modality) + ") out of range");
    }
  }
  if (label_fraction && !(*label_fraction >= 0.0 && *label_fraction <= 1.0)) {
    throw ConfigError("label_fraction must lie in [0, 1]");
  }
}

namespace {

synth::GeneratorConfig generator_from_json(const json& j, synth::GeneratorConfig g) {
  if (!j.is_object()) throw ConfigError("generator must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "n_samples") g.n_samples = v.get<std::size_t>();
      else if (key == "n_classes") g.n_classes = v.get<std::size_t>();
      else if (key == "modality_dims") g.modality_dims = v.get<std::vector<std::size_t>>();
      else if (key == "class_separation") g.class_separation = v.get<double>();
      else if (key == "latent_factor_dim") g.latent_factor_dim = v.get<std::size_t>();
      else if (key == "noise_sd") g.noise_sd = v.get<double>();
      else if (key == "feature_scale") g.feature_scale = v.get<double>();
      else if (key == "seed") g.seed = v.get<std::uint64_t>();
      else throw ConfigError("generator: unknown field '" + key + "'");
    } catch (const json::exception&) {
      throw ConfigError("generator." + key + ": wrong type (" + v.dump() + ")");
    }
  }
  return g;
}

}  // namespace

ScenarioSpec spec_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("scenario spec must be a JSON object");
  ScenarioSpec s;
  s.generator.n_samples = 3750;
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "kind") s.kind = parse_kind(v.get<std::string>());
      else if (key == "parameters") s.parameters = v.get<std::vector<double>>();
      else if (key == "replicates") s.replicates = v.get<std::size_t>();
      else if (key == "base_seed") s.base_seed = v.get<std::uint64_t>();
      else if (key == "generator") s.generator = generator_from_json(v, s.generator);
      else if (key == "test_ratio") s.test_ratio = v.get<double>();
      else if (key == "training") s.training = train::config_from_json(v, s.training);
      else if (key == "target_class") s.target_class = v.get<int>();
      else if (key == "label_fraction") s.label_fraction = v.get<double>();
      else if (key == "cells") {
        s.cells.clear();
        for (const auto& c : v) {
          const auto pair = c.get<std::vector<long long>>();
          if (pair.size() != 2 || pair[1] < 0) throw ConfigError("cells: entries are [class, modality]");
          s.cells.push_back({static_cast<int>(pair[0]), static_cast<std::size_t>(pair[1])});
        }
      } else throw ConfigError("unknown scenario field '" + key + "'");
    } catch (const json::exception&) {
      throw ConfigError(key + ": wrong type (" + v.dump() + ")");
    }
  }
  s.validate();
  return s;
}

CellData build_cell(const ScenarioSpec& spec, double parameter, std::uint64_t seed) {
  synth::GeneratorConfig gen = spec.generator;
  gen.seed = seed;
  CellData d;
  d.paired = synth::generate_paired(gen);
  auto [train, test] = synth::split_train_test(synth::unpair(d.paired, seed), spec.test_ratio, seed);
  const auto count = static_cast<std::size_t>(parameter);
  switch (spec.kind) {
    case Kind::supervision_sweep:
      train = synth::mask_labels(train, synth::LabelFraction{parameter}, seed);
      break;
    case Kind::label_fraction_sweep:
      train = synth::mask_labels(train, synth::LabelsPerPair{count}, seed);
      break;
    case Kind::imbalance_sweep:
      train = synth::subsample_class(train, spec.target_class, count, seed);
      break;
    case Kind::missing_pairs:
      train = synth::drop_modality_class(train, spec.cells, count, seed);
      break;
  }
  if (spec.label_fraction && spec.kind != Kind::supervision_sweep) {
    train = synth::mask_labels(train, synth::LabelFraction{*spec.label_fraction}, seed);
  }
  d.train = std::move(train);
  d.test = std::move(test);
  return d;
}

namespace {

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? std::nan("") : s / static_cast<double>(v.size());
}

// Scalars that summary.csv aggregates, beyond bacc/nmi/ari.
json derived_metrics(const ScenarioSpec& spec, const eval::MetricsReport& r) {
  json d;
  if (r.mse) {
    std::vector<double> diag, off;
    for (std::size_t s = 0; s < r.mse->mse.rows(); ++s)
      for (std::size_t t = 0; t < r.mse->mse.cols(); ++t) (s == t ? diag : off).push_back(r.mse->mse(s, t));
    d["mse_diag_mean"] = mean_of(diag);
    d["mse_offdiag_mean"] = mean_of(off);
  }
  if (spec.kind == Kind::imbalance_sweep) d["target_recall"] = r.recall_per_class[spec.target_class];
  if (spec.kind == Kind::missing_pairs) {
    std::vector<double> recalls;
    for (const auto& c : spec.cells) {
      const Matrix& conf = r.confusion_per_modality[c.modality];
      double total = 0;
      for (std::size_t k = 0; k < conf.cols(); ++k) total += conf(c.label, k);
      if (total > 0) recalls.push_back(conf(c.label, c.label) / total);
    }
    d["missing_cell_recall"] = mean_of(recalls);
  }
  return d;
}

std::string cell_name(std::size_t p, std::size_t r) { return "p" + std::to_string(p) + "_r" + std::to_string(r); }

}  // namespace

CellResult run_cell(const ScenarioSpec& spec, std::size_t parameter_index, std::size_t replicate, const fs::path& dir) {
  CellResult res;
  res.parameter_index = parameter_index;
  res.parameter = spec.parameters.at(parameter_index);
  res.replicate = replicate;
  res.seed = spec.base_seed + replicate;
  fs::create_directories(dir);
  try {
    const CellData data = build_cell(spec, res.parameter, res.seed);
    train::TrainConfig cfg = spec.training;
    cfg.seed = res.seed;
    train::FitOptions opts;
    opts.keep_history = false;
    opts.out_dir = dir;
    const auto fitted = train::fit(data.train, cfg, opts);
    const auto report = eval::evaluate(fitted.params, data.test, &data.paired);
    eval::write_evaluation(dir, report, eval::latent_projection(fitted.params, data.test));
    res.metrics = eval::to_json(report);
    res.metrics["derived"] = derived_metrics(spec, report);
    std::ofstream(dir / "cell.json") << json{{"parameter", res.parameter},
                                             {"replicate", replicate},
                                             {"seed", res.seed},
                                             {"derived", res.metrics["derived"]}}
                                            .dump(2)
                                     << '\n';
    res.ok = true;
    fs::remove(dir / "error.txt");
  } catch (const std::exception& e) {
    res.error = e.what();
    std::ofstream(dir / "error.txt") << res.error << '\n';
  }
  return res;
}

std::size_t workers_from_env() {
  const char* v = std::getenv("MODISLAB_THREADS");
  if (!v || !*v) return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1) throw ConfigError("MODISLAB_THREADS must be a positive integer");
  return static_cast<std::size_t>(n);
}

namespace {

std::optional<CellResult> load_completed(const ScenarioSpec& spec, std::size_t p, std::size_t r, const fs::path& dir) {
  if (!fs::exists(dir / "cell.json") || !fs::exists(dir / "metrics.json")) return std::nullopt;
  CellResult res;
  res.parameter_index = p;
  res.parameter = spec.parameters[p];
  res.replicate = r;
  res.seed = spec.base_seed + r;
  std::ifstream in(dir / "metrics.json");
  res.metrics = json::parse(in);
  std::ifstream cell(dir / "cell.json");
  res.metrics["derived"] = json::parse(cell).at("derived");
  res.ok = true;
  return res;
}

}  // namespace

std::vector<CellResult> run_scenario(const ScenarioSpec& spec, const fs::path& out, std::size_t workers) {
  spec.validate();
  fs::create_directories(out / "cells");
  std::ofstream(out / "scenario.json") << json{{"kind", kind_name(spec.kind)},
                                                {"parameters", spec.parameters},
                                                {"replicates", spec.replicates},
                                                {"base_seed", spec.base_seed},
                                                {"training", train::to_json(spec.training)}}
                                               .dump(2)
                                        << '\n';

  const std::size_t total = spec.parameters.size() * spec.replicates;
  std::vector<CellResult> results(total);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < total; i = next++) {
      const std::size_t p = i / spec.replicates, r = i % spec.replicates;
      const fs::path dir = out / "cells" / cell_name(p, r);
      auto done = load_completed(spec, p, r, dir);
      results[i] = done ? std::move(*done) : run_cell(spec, p, r, dir);
    }
  };
  workers = std::max<std::size_t>(1, std::min(workers, total));
  if (workers == 1) {
    work();
  } else {
    // Cells run concurrently; each stays single-threaded.
    const bool was_parallel = kernels::parallel_enabled();
    kernels::set_parallel(false);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
    kernels::set_parallel(was_parallel);
  }
  write_raw_csv(out / "raw.csv", spec, results);
  write_summary_csv(out / "summary.csv", spec, results);
  return results;
}

std::vector<std::string> summary_metrics(const ScenarioSpec& spec) {
  std::vector<std::string> names{"bacc", "nmi", "ari", "mse_diag_mean", "mse_offdiag_mean"};
  if (spec.kind == Kind::imbalance_sweep) names.push_back("target_recall");
  if (spec.kind == Kind::missing_pairs) names.push_back("missing_cell_recall");
  return names;
}

namespace {

double metric_value(const CellResult& c, const std::string& name) {
  const json* j = &c.metrics;
  if (!j->contains(name)) j = &c.metrics.at("derived");
  if (!j->contains(name) || !(*j)[name].is_number()) return std::nan("");
  return (*j)[name].get<double>();
}

std::string cell_text(double v) { return std::isnan(v) ? "" : format_double(v); }

}  // namespace

void write_raw_csv(const fs::path& path, const ScenarioSpec& spec, const std::vector<CellResult>& cells) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  const auto names = summary_metrics(spec);
  out << "parameter,replicate,seed,status";
  for (const auto& n : names) out << ',' << n;
  out << ",error\n";
  for (const auto& c : cells) {
    out << format_double(c.parameter) << ',' << c.replicate << ',' << c.seed << ',' << (c.ok ? "ok" : "failed");
    for (const auto& n : names) out << ',' << (c.ok ? cell_text(metric_value(c, n)) : "");
    std::string err = c.error;
    for (char& ch : err)
      if (ch == ',' || ch == '\n' || ch == '"') ch = ' ';
    out << ',' << err << '\n';
  }
}

void write_summary_csv(const fs::path& path, const ScenarioSpec& spec, const std::vector<CellResult>& cells) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  const auto names = summary_metrics(spec);
  out << "parameter,n_ok,n_failed";
  for (const auto& n : names) out << ',' << n << "_mean," << n << "_sd";
  out << '\n';
  for (std::size_t p = 0; p < spec.parameters.size(); ++p) {
    std::size_t ok = 0, failed = 0;
    std::map<std::string, std::vector<double>> values;
    for (const auto& c : cells) {
      if (c.parameter_index != p) continue;
      if (!c.ok) {
        ++failed;
        continue;
      }
      ++ok;
      for (const auto& n : names) {
        const double v = metric_value(c, n);
        if (!std::isnan(v)) values[n].push_back(v);
      }
    }
    out << format_double(spec.parameters[p]) << ',' << ok << ',' << failed;
    for (const auto& n : names) {
      const auto& v = values[n];
      const double mean = mean_of(v);
      double sd = std::nan("");
      if (v.size() > 1) {
        double ss = 0;
        for (double x : v) ss += (x - mean) * (x - mean);
        sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
      }
      out << ',' << cell_text(mean) << ',' << cell_text(sd);
    }
    out << '\n';
  }
}

}  // namespace modis::scenario
