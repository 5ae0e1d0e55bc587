#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "modis/data_synth.hpp"
#include "modis/evalkit.hpp"
#include "modis/trainer.hpp"

namespace modis::scenario {

enum class Kind {
  supervision_sweep,     // parameter = fraction of labels kept per cell
  label_fraction_sweep,  // parameter = labeled records per (class, modality) cell
  imbalance_sweep,       // parameter = records of the target class per modality
  missing_pairs,         // parameter = records kept in each listed cell
};

Kind parse_kind(const std::string& name);
std::string kind_name(Kind kind);

struct ScenarioSpec {
  Kind kind = Kind::supervision_sweep;
  std::vector<double> parameters;
  std::size_t replicates = 1;
  std::uint64_t base_seed = 0;
  synth::GeneratorConfig generator;
  double test_ratio = 0.2;
  train::TrainConfig training;
  int target_class = 0;                       // imbalance_sweep
  std::vector<synth::ClassModality> cells;    // missing_pairs
  std::optional<double> label_fraction;       // extra masking for imbalance / missing-pair runs

  void validate() const;
};

/// Keys: kind, parameters, replicates, base_seed, generator{...},
/// test_ratio, training{...}, target_class, cells[[class, modality], ...],
/// label_fraction.
ScenarioSpec spec_from_json(const nlohmann::json& j);

struct CellData {
  UnpairedDataset train;
  UnpairedDataset test;
  PairedDataset paired;
};

/// Generate, unpair, split, then apply the scenario operation to the
/// training side. All randomness derives from `seed`.
CellData build_cell(const ScenarioSpec& spec, double parameter, std::uint64_t seed);

struct CellResult {
  std::size_t parameter_index = 0;
  double parameter = 0;
  std::size_t replicate = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  nlohmann::json metrics;  // metrics.json content when ok
};

/// Trains and evaluates one cell, writing metrics.json (or error.txt) into `dir`.
CellResult run_cell(const ScenarioSpec& spec, std::size_t parameter_index, std::size_t replicate,
                    const std::filesystem::path& dir);

/// Runs every parameter × replicate cell under `out/cells/p<i>_r<r>/`,
/// skipping cells that already hold metrics.json, then writes raw.csv and
/// summary.csv. At most `workers` cells run at once.
std::vector<CellResult> run_scenario(const ScenarioSpec& spec, const std::filesystem::path& out,
                                     std::size_t workers = 1);

/// Worker cap from MODISLAB_THREADS (default 1).
std::size_t workers_from_env();

/// Metric columns aggregated in summary.csv.
std::vector<std::string> summary_metrics(const ScenarioSpec& spec);

void write_raw_csv(const std::filesystem::path& path, const ScenarioSpec& spec, const std::vector<CellResult>& cells);
void write_summary_csv(const std::filesystem::path& path, const ScenarioSpec& spec,
                       const std::vector<CellResult>& cells);

}  // namespace modis::scenario
