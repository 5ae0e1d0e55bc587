#include "modis/data_synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "modis/error.hpp"
#include "modis/random.hpp"

namespace modis::synth {

void GeneratorConfig::validate() const {
  if (n_classes < 2) throw ConfigError("n_classes must be >= 2");
  if (modality_dims.empty()) throw ConfigError("modality_dims must list at least one modality");
  for (auto p : modality_dims) {
    if (p < 1) throw ConfigError("modality_dims entries must be >= 1");
  }
  if (n_samples < n_classes) throw ConfigError("n_samples must be >= n_classes");
  if (!(class_separation >= 0.0) || !std::isfinite(class_separation)) {
    throw ConfigError("class_separation must be a finite non-negative number");
  }
  if (latent_factor_dim < 1) throw ConfigError("latent_factor_dim must be >= 1");
  if (!(noise_sd > 0.0) || !std::isfinite(noise_sd)) throw ConfigError("noise_sd must be positive");
  if (!(feature_scale > 0.0) || !std::isfinite(feature_scale)) throw ConfigError("feature_scale must be positive");
}

PairedDataset generate_paired(const GeneratorConfig& config) {
  config.validate();
  const std::size_t n = config.n_samples, k_classes = config.n_classes, f_dim = config.latent_factor_dim;
  Rng rng = make_rng(config.seed, {stream::generate});
  std::normal_distribution<double> std_normal(0.0, 1.0);

  // Class centers: scaled one-hot directions are exactly `class_separation`
  // apart; with fewer factor dimensions than classes, random unit directions.
  Matrix centers(k_classes, f_dim);
  const double radius = config.class_separation / std::sqrt(2.0);
  for (std::size_t k = 0; k < k_classes; ++k) {
    if (f_dim >= k_classes) {
      centers(k, k) = radius;
    } else {
      double norm = 0.0;
      for (std::size_t j = 0; j < f_dim; ++j) {
        centers(k, j) = std_normal(rng);
        norm += centers(k, j) * centers(k, j);
      }
      norm = std::sqrt(norm);
      for (std::size_t j = 0; j < f_dim; ++j) centers(k, j) *= norm > 0 ? radius / norm : 0.0;
    }
  }

  // One random affine map per modality.
  std::vector<Matrix> maps, offsets;
  const double map_sd = 1.0 / std::sqrt(static_cast<double>(f_dim));
  for (auto p : config.modality_dims) {
    Matrix a(f_dim, p), b(1, p);
    for (double& v : a.values()) v = map_sd * std_normal(rng);
    for (double& v : b.values()) v = std_normal(rng);
    maps.push_back(std::move(a));
    offsets.push_back(std::move(b));
  }

  PairedDataset out;
  out.n_classes = k_classes;
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.labels[i] = static_cast<int>(i % k_classes);
  for (auto p : config.modality_dims) out.modalities.emplace_back(n, p);

  std::vector<double> factor(f_dim);
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(out.labels[i]);
    for (std::size_t j = 0; j < f_dim; ++j) factor[j] = centers(k, j) + config.noise_sd * std_normal(rng);
    for (std::size_t m = 0; m < maps.size(); ++m) {
      auto row = out.modalities[m].row(i);
      const Matrix& a = maps[m];
      for (std::size_t f = 0; f < row.size(); ++f) {
        double v = offsets[m](0, f);
        for (std::size_t j = 0; j < f_dim; ++j) v += factor[j] * a(j, f);
        row[f] = config.feature_scale * (v + config.noise_sd * std_normal(rng));
      }
    }
  }
  return out;
}

UnpairedDataset unpair(const PairedDataset& paired, std::uint64_t seed) {
  paired.validate();
  if (paired.n_samples() == 0 || paired.n_modalities() == 0) throw DataError("unpair: empty paired dataset");
  const std::size_t n_mod = paired.n_modalities();
  Rng rng = make_rng(seed, {stream::unpair});

  std::vector<std::size_t> assignment(paired.n_samples());
  for (std::size_t k = 0; k < paired.n_classes; ++k) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < paired.n_samples(); ++i) {
      if (static_cast<std::size_t>(paired.labels[i]) == k) members.push_back(i);
    }
    std::shuffle(members.begin(), members.end(), rng);
    // Rotating the start per class keeps modality totals balanced as well.
    for (std::size_t j = 0; j < members.size(); ++j) assignment[members[j]] = (j + k) % n_mod;
  }

  UnpairedDataset out;
  out.n_classes = paired.n_classes;
  out.seed = seed;
  out.provenance = {"unpair(seed=" + std::to_string(seed) + ")"};
  for (std::size_t m = 0; m < n_mod; ++m) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < paired.n_samples(); ++i) {
      if (assignment[i] == m) rows.push_back(i);
    }
    ModalityBlock b;
    b.x = paired.modalities[m].gather_rows(rows);
    for (std::size_t i : rows) {
      b.sample_id.push_back(static_cast<std::int64_t>(i));
      b.pair_id.push_back(static_cast<std::int64_t>(i));
      b.label.push_back(paired.labels[i]);
    }
    out.modalities.push_back(std::move(b));
  }
  return out;
}

namespace {

std::string stratum_name(int label, std::size_t m) {
  return "(class " + std::to_string(label) + ", modality " + std::to_string(m) + ")";
}

// Distinct observed labels of a modality, ascending (kUnlabeled first).
std::vector<int> labels_in(const ModalityBlock& b) {
  std::vector<int> out(b.label.begin(), b.label.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// Keeps rows flagged in `keep`, preserving order.
ModalityBlock filter(const ModalityBlock& b, const std::vector<bool>& keep) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (keep[i]) rows.push_back(i);
  }
  return b.subset(rows);
}

// `count` distinct members of `cell`, chosen uniformly.
std::vector<std::size_t> choose(std::vector<std::size_t> cell, std::size_t count, Rng& rng) {
  std::shuffle(cell.begin(), cell.end(), rng);
  cell.resize(count);
  return cell;
}

UnpairedDataset with_step(const UnpairedDataset& ds, std::string step) {
  UnpairedDataset out;
  out.n_classes = ds.n_classes;
  out.seed = ds.seed;
  out.provenance = ds.provenance;
  out.provenance.push_back(std::move(step));
  return out;
}

}  // namespace

std::pair<UnpairedDataset, UnpairedDataset> split_train_test(const UnpairedDataset& ds, double test_ratio,
                                                             std::uint64_t seed) {
  if (!(test_ratio > 0.0 && test_ratio < 1.0)) throw ConfigError("test_ratio must lie in (0, 1)");
  Rng rng = make_rng(seed, {stream::split});
  std::ostringstream tag;
  tag << "split(test_ratio=" << test_ratio << ",seed=" << seed << ")";
  UnpairedDataset train = with_step(ds, tag.str() + ":train");
  UnpairedDataset test = with_step(ds, tag.str() + ":test");
  for (std::size_t m = 0; m < ds.n_modalities(); ++m) {
    const auto& b = ds.modalities[m];
    std::vector<bool> to_test(b.size(), false);
    for (int label : labels_in(b)) {
      const auto cell = ds.cell(label, m);
      if (cell.size() < 2) {
        throw DataError("split_train_test: stratum " + stratum_name(label, m) + " has fewer than 2 records");
      }
      const auto n_test = static_cast<std::size_t>(std::floor(static_cast<double>(cell.size()) * test_ratio));
      for (std::size_t r : choose(cell, n_test, rng)) to_test[r] = true;
    }
    std::vector<bool> to_train(to_test.size());
    std::transform(to_test.begin(), to_test.end(), to_train.begin(), [](bool t) { return !t; });
    train.modalities.push_back(filter(b, to_train));
    test.modalities.push_back(filter(b, to_test));
  }
  return {std::move(train), std::move(test)};
}

UnpairedDataset mask_labels(const UnpairedDataset& ds, const LabelMask& mode, std::uint64_t seed) {
  Rng rng = make_rng(seed, {stream::mask});
  std::ostringstream tag;
  if (const auto* f = std::get_if<LabelFraction>(&mode)) {
    if (!(f->fraction >= 0.0 && f->fraction <= 1.0)) throw ConfigError("label fraction must lie in [0, 1]");
    tag << "mask_labels(fraction=" << f->fraction;
  } else {
    tag << "mask_labels(per_pair=" << std::get<LabelsPerPair>(mode).count;
  }
  tag << ",seed=" << seed << ")";
  UnpairedDataset out = with_step(ds, tag.str());
  for (std::size_t m = 0; m < ds.n_modalities(); ++m) {
    ModalityBlock b = ds.modalities[m];
    for (int label : labels_in(b)) {
      if (label == kUnlabeled) continue;
      const auto cell = ds.cell(label, m);
      std::size_t keep = 0;
      if (const auto* f = std::get_if<LabelFraction>(&mode)) {
        keep = static_cast<std::size_t>(std::floor(f->fraction * static_cast<double>(cell.size()) + 0.5));
      } else {
        keep = std::get<LabelsPerPair>(mode).count;
        if (keep > cell.size()) {
          throw DataError("mask_labels: " + std::to_string(keep) + " labels requested but stratum " +
                          stratum_name(label, m) + " holds " + std::to_string(cell.size()));
        }
      }
      std::vector<bool> kept(b.size(), false);
      for (std::size_t r : choose(cell, keep, rng)) kept[r] = true;
      for (std::size_t r : cell) {
        if (!kept[r]) b.label[r] = kUnlabeled;
      }
    }
    out.modalities.push_back(std::move(b));
  }
  return out;
}

namespace {

UnpairedDataset shrink_cells(const UnpairedDataset& ds, const std::vector<ClassModality>& cells, std::size_t keep,
                             Rng& rng, std::string step) {
  UnpairedDataset out = with_step(ds, std::move(step));
  std::vector<std::vector<bool>> kept;
  for (const auto& b : ds.modalities) kept.emplace_back(b.size(), true);
  for (const auto& c : cells) {
    if (c.modality >= ds.n_modalities()) throw ConfigError("modality index " + std::to_string(c.modality) + " out of range");
    if (c.label < 0 || static_cast<std::size_t>(c.label) >= ds.n_classes) {
      throw ConfigError("class " + std::to_string(c.label) + " out of range");
    }
    const auto cell = ds.cell(c.label, c.modality);
    if (keep > cell.size()) {
      throw DataError("cannot keep " + std::to_string(keep) + " records of stratum " +
                      stratum_name(c.label, c.modality) + " holding " + std::to_string(cell.size()));
    }
    auto& flags = kept[c.modality];
    for (std::size_t r : cell) flags[r] = false;
    for (std::size_t r : choose(cell, keep, rng)) flags[r] = true;
  }
  for (std::size_t m = 0; m < ds.n_modalities(); ++m) out.modalities.push_back(filter(ds.modalities[m], kept[m]));
  return out;
}

}  // namespace

UnpairedDataset subsample_class(const UnpairedDataset& ds, int target_class, std::size_t per_modality,
                                std::uint64_t seed) {
  Rng rng = make_rng(seed, {stream::subsample});
  std::vector<ClassModality> cells;
  for (std::size_t m = 0; m < ds.n_modalities(); ++m) cells.push_back({target_class, m});
  return shrink_cells(ds, cells, per_modality, rng,
                      "subsample_class(class=" + std::to_string(target_class) +
                          ",per_modality=" + std::to_string(per_modality) + ",seed=" + std::to_string(seed) + ")");
}

UnpairedDataset drop_modality_class(const UnpairedDataset& ds, const std::vector<ClassModality>& cells,
                                    std::size_t keep, std::uint64_t seed) {
  Rng rng = make_rng(seed, {stream::drop});
  std::string step = "drop_modality_class(cells=";
  for (const auto& c : cells) step += "[" + std::to_string(c.label) + "," + std::to_string(c.modality) + "]";
  step += ",keep=" + std::to_string(keep) + ",seed=" + std::to_string(seed) + ")";
  return shrink_cells(ds, cells, keep, rng, std::move(step));
}

}  // namespace modis::synth
