#include "modis/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include "modis/error.hpp"
#include "modis/preprocess.hpp"

namespace modis::eval {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<int> argmax_rows(const Matrix& logits) {
  std::vector<int> out(logits.rows(), 0);
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto r = logits.row(i);
    out[i] = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
  }
  return out;
}

std::vector<int> predict_class(const model::ModelParams& params, const UnpairedDataset& ds) {
  if (ds.n_modalities() > params.spec.n_modalities()) {
    throw DataError("predict_class: dataset has more modalities than the model");
  }
  std::vector<int> out;
  for (std::size_t m = 0; m < ds.n_modalities(); ++m) {
    const auto& b = ds.modalities[m];
    if (b.size() == 0) continue;
    const auto g = model::encode(params, m, b.x);
    const auto pred = argmax_rows(model::discriminate(params, g.mu).class_logits);
    out.insert(out.end(), pred.begin(), pred.end());
  }
  return out;
}

namespace {

void check_pair(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw DataError("label vectors differ in length");
  if (a.empty()) throw DataError("empty label vectors");
}

// Contingency counts over the distinct values of each labeling.
struct Contingency {
  std::vector<std::vector<double>> table;
  std::vector<double> row_sums, col_sums;
  double n = 0;
};

Contingency contingency(std::span<const int> a, std::span<const int> b) {
  std::map<int, std::size_t> ai, bi;
  for (int v : a) ai.emplace(v, 0);
  for (int v : b) bi.emplace(v, 0);
  std::size_t k = 0;
  for (auto& [v, idx] : ai) idx = k++;
  k = 0;
  for (auto& [v, idx] : bi) idx = k++;
  Contingency c;
  c.table.assign(ai.size(), std::vector<double>(bi.size(), 0.0));
  c.row_sums.assign(ai.size(), 0.0);
  c.col_sums.assign(bi.size(), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto r = ai[a[i]], s = bi[b[i]];
    c.table[r][s] += 1.0;
    c.row_sums[r] += 1.0;
    c.col_sums[s] += 1.0;
  }
  c.n = static_cast<double>(a.size());
  return c;
}

double entropy(const std::vector<double>& counts, double n) {
  double h = 0.0;
  for (double c : counts) {
    if (c > 0) h -= (c / n) * std::log(c / n);
  }
  return h;
}

double choose2(double x) { return x * (x - 1.0) / 2.0; }

}  // namespace

double balanced_accuracy(std::span<const int> y_true, std::span<const int> y_pred) {
  check_pair(y_true, y_pred);
  std::map<int, std::pair<double, double>> per_class;  // hits, total
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    auto& [hits, total] = per_class[y_true[i]];
    total += 1.0;
    hits += y_true[i] == y_pred[i] ? 1.0 : 0.0;
  }
  double s = 0.0;
  for (const auto& [c, ht] : per_class) s += ht.first / ht.second;
  return s / static_cast<double>(per_class.size());
}

double nmi(std::span<const int> y_true, std::span<const int> y_pred) {
  check_pair(y_true, y_pred);
  const Contingency c = contingency(y_true, y_pred);
  const double hu = entropy(c.row_sums, c.n), hv = entropy(c.col_sums, c.n);
  if (c.row_sums.size() == 1 && c.col_sums.size() == 1) return 1.0;
  double mi = 0.0;
  for (std::size_t r = 0; r < c.row_sums.size(); ++r) {
    for (std::size_t s = 0; s < c.col_sums.size(); ++s) {
      const double nij = c.table[r][s];
      if (nij > 0) mi += (nij / c.n) * std::log(nij * c.n / (c.row_sums[r] * c.col_sums[s]));
    }
  }
  const double denom = 0.5 * (hu + hv);
  if (denom <= 0.0) return 1.0;
  return std::clamp(mi / denom, 0.0, 1.0);
}

double ari(std::span<const int> y_true, std::span<const int> y_pred) {
  check_pair(y_true, y_pred);
  const Contingency c = contingency(y_true, y_pred);
  double index = 0.0, sum_rows = 0.0, sum_cols = 0.0;
  for (const auto& row : c.table)
    for (double nij : row) index += choose2(nij);
  for (double a : c.row_sums) sum_rows += choose2(a);
  for (double b : c.col_sums) sum_cols += choose2(b);
  const double total = choose2(c.n);
  const double expected = total > 0 ? sum_rows * sum_cols / total : 0.0;
  const double max_index = 0.5 * (sum_rows + sum_cols);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

Matrix confusion_matrix(std::span<const int> y_true, std::span<const int> y_pred, std::size_t n_classes) {
  if (y_true.size() != y_pred.size()) throw DataError("confusion_matrix: label vectors differ in length");
  Matrix out(n_classes, n_classes);
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const int t = y_true[i], p = y_pred[i];
    if (t < 0 || p < 0 || static_cast<std::size_t>(t) >= n_classes || static_cast<std::size_t>(p) >= n_classes) {
      throw DataError("confusion_matrix: label out of range");
    }
    out(static_cast<std::size_t>(t), static_cast<std::size_t>(p)) += 1.0;
  }
  return out;
}

double mean_pairwise_mse(const Matrix& x) {
  const std::size_t n = x.rows(), p = x.cols();
  if (n < 2 || p == 0) throw DataError("mean_pairwise_mse: need at least 2 rows and 1 column");
  // Averaging (x_i - x_j)^2 over unordered pairs equals twice the unbiased variance.
  double total = 0.0;
  for (std::size_t f = 0; f < p; ++f) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x(i, f);
    const double mu = s / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) ss += (x(i, f) - mu) * (x(i, f) - mu);
    total += 2.0 * ss / static_cast<double>(n - 1);
  }
  return total / static_cast<double>(p);
}

MseTable mse_matrix(const model::ModelParams& params, const UnpairedDataset& test, const PairedDataset& paired) {
  const std::size_t n_mod = test.n_modalities();
  if (paired.n_modalities() != n_mod) throw DataError("mse_matrix: paired ground truth has a different modality count");
  MseTable out;
  out.mse = Matrix(n_mod, n_mod);
  std::vector<std::size_t> all_pairs;
  for (std::size_t m = 0; m < n_mod; ++m) {
    const auto& b = test.modalities[m];
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < b.size(); ++i) {
      const auto pid = b.pair_id[i];
      if (pid < 0 || static_cast<std::size_t>(pid) >= paired.n_samples()) {
        throw DataError("mse_matrix: record " + std::to_string(b.sample_id[i]) + " has no paired ground truth");
      }
      rows.push_back(static_cast<std::size_t>(pid));
    }
    all_pairs.insert(all_pairs.end(), rows.begin(), rows.end());
    out.n.push_back(rows.size());
    if (rows.empty()) {
      for (std::size_t t = 0; t < n_mod; ++t) out.mse(m, t) = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    const auto mu = model::encode(params, m, b.x).mu;
    for (std::size_t t = 0; t < n_mod; ++t) {
      const Matrix pred = model::decode(params, t, mu);
      const Matrix truth = paired.modalities[t].gather_rows(rows);
      double s = 0.0;
      for (std::size_t k = 0; k < pred.size(); ++k) {
        const double d = pred.data()[k] - truth.data()[k];
        s += d * d;
      }
      out.mse(m, t) = s / static_cast<double>(rows.size() * truth.cols());
    }
  }
  std::sort(all_pairs.begin(), all_pairs.end());
  all_pairs.erase(std::unique(all_pairs.begin(), all_pairs.end()), all_pairs.end());
  for (std::size_t t = 0; t < n_mod; ++t) {
    out.baseline.push_back(all_pairs.size() >= 2 ? mean_pairwise_mse(paired.modalities[t].gather_rows(all_pairs))
                                                 : std::numeric_limits<double>::quiet_NaN());
  }
  return out;
}

Projection latent_projection(const model::ModelParams& params, const UnpairedDataset& ds) {
  std::vector<Matrix> blocks;
  Projection out;
  for (std::size_t m = 0; m < ds.n_modalities(); ++m) {
    const auto& b = ds.modalities[m];
    if (b.size() == 0) continue;
    blocks.push_back(model::encode(params, m, b.x).mu);
    for (std::size_t i = 0; i < b.size(); ++i) {
      out.modality.push_back(static_cast<int>(m));
      out.label.push_back(b.label[i]);
    }
  }
  Matrix mu = vstack(blocks);
  if (mu.rows() < 3) throw DataError("latent_projection: need at least 3 records");
  const Matrix means = kernels::col_sums(mu);
  for (std::size_t i = 0; i < mu.rows(); ++i)
    for (std::size_t j = 0; j < mu.cols(); ++j) mu(i, j) -= means(0, j) / static_cast<double>(mu.rows());
  const std::size_t k = std::min<std::size_t>(2, mu.cols());
  const auto pca = prep::principal_components(mu, k);
  double total = 0.0;
  for (std::size_t j = 0; j < mu.cols(); ++j) {
    double ss = 0.0;
    for (std::size_t i = 0; i < mu.rows(); ++i) ss += mu(i, j) * mu(i, j);
    total += ss / static_cast<double>(mu.rows() - 1);
  }
  out.coords = Matrix(mu.rows(), 2);
  for (std::size_t i = 0; i < mu.rows(); ++i)
    for (std::size_t c = 0; c < k; ++c) out.coords(i, c) = pca.scores(i, c);
  for (std::size_t c = 0; c < 2; ++c) {
    out.variance_fraction.push_back(c < k && total > 0 ? pca.eigenvalues[c] / total : 0.0);
  }
  return out;
}

MetricsReport evaluate(const model::ModelParams& params, const UnpairedDataset& test, const PairedDataset* paired) {
  const std::size_t k = params.spec.n_classes;
  MetricsReport r;
  std::vector<int> all_true, all_pred;
  for (std::size_t m = 0; m < test.n_modalities(); ++m) {
    const auto& b = test.modalities[m];
    std::vector<int> t, p;
    if (b.size() > 0) {
      const auto mu = model::encode(params, m, b.x).mu;
      const auto pred = argmax_rows(model::discriminate(params, mu).class_logits);
      for (std::size_t i = 0; i < b.size(); ++i) {
        if (b.label[i] == kUnlabeled) continue;
        t.push_back(b.label[i]);
        p.push_back(pred[i]);
      }
    }
    r.confusion_per_modality.push_back(confusion_matrix(t, p, k));
    r.bacc_per_modality.push_back(t.empty() ? std::numeric_limits<double>::quiet_NaN() : balanced_accuracy(t, p));
    all_true.insert(all_true.end(), t.begin(), t.end());
    all_pred.insert(all_pred.end(), p.begin(), p.end());
  }
  if (all_true.empty()) throw DataError("evaluate: the test set has no labeled records");
  r.n_evaluated = all_true.size();
  r.bacc = balanced_accuracy(all_true, all_pred);
  r.nmi = nmi(all_true, all_pred);
  r.ari = ari(all_true, all_pred);
  r.confusion = confusion_matrix(all_true, all_pred, k);
  for (std::size_t c = 0; c < k; ++c) {
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) total += r.confusion(c, j);
    r.recall_per_class.push_back(total > 0 ? r.confusion(c, c) / total : std::numeric_limits<double>::quiet_NaN());
  }
  if (paired) r.mse = mse_matrix(params, test, *paired);
  return r;
}

namespace {

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) rows.push_back(std::vector<double>(m.row(i).begin(), m.row(i).end()));
  return rows;
}

void write_matrix_csv(const fs::path& path, const Matrix& m, const std::string& row_label, const std::string& col_prefix) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << row_label;
  for (std::size_t j = 0; j < m.cols(); ++j) out << ',' << col_prefix << j;
  out << '\n';
  for (std::size_t i = 0; i < m.rows(); ++i) {
    out << i;
    for (double v : m.row(i)) out << ',' << format_double(v);
    out << '\n';
  }
}

}  // namespace

json to_json(const MetricsReport& r) {
  json j;
  j["bacc"] = r.bacc;
  j["nmi"] = r.nmi;
  j["ari"] = r.ari;
  j["n_evaluated"] = r.n_evaluated;
  j["bacc_per_modality"] = r.bacc_per_modality;
  j["recall_per_class"] = r.recall_per_class;
  j["confusion"] = matrix_json(r.confusion);
  json per = json::array();
  for (const auto& c : r.confusion_per_modality) per.push_back(matrix_json(c));
  j["confusion_per_modality"] = per;
  if (r.mse) {
    j["mse"] = {{"matrix", matrix_json(r.mse->mse)}, {"baseline", r.mse->baseline}, {"n", r.mse->n}};
  }
  return j;
}

void write_evaluation(const fs::path& dir, const MetricsReport& r, const Projection& proj) {
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "metrics.json");
    if (!out) throw IoError("cannot write metrics.json");
    json j = to_json(r);
    j["latent_variance_fraction"] = proj.variance_fraction;
    out << j.dump(2) << '\n';
  }
  write_matrix_csv(dir / "confusion_overall.csv", r.confusion, "true_class", "pred_");
  for (std::size_t m = 0; m < r.confusion_per_modality.size(); ++m) {
    write_matrix_csv(dir / ("confusion_" + std::to_string(m) + ".csv"), r.confusion_per_modality[m], "true_class",
                     "pred_");
  }
  if (r.mse) {
    std::ofstream out(dir / "mse_matrix.csv");
    out << "source";
    for (std::size_t t = 0; t < r.mse->mse.cols(); ++t) out << ",target_" << t;
    out << ",n\n";
    for (std::size_t s = 0; s < r.mse->mse.rows(); ++s) {
      out << s;
      for (double v : r.mse->mse.row(s)) out << ',' << format_double(v);
      out << ',' << r.mse->n[s] << '\n';
    }
    out << "baseline";
    for (double v : r.mse->baseline) out << ',' << format_double(v);
    out << ",\n";
  }
  std::ofstream out(dir / "latent2d.csv");
  if (!out) throw IoError("cannot write latent2d.csv");
  out << "pc1,pc2,modality,class\n";
  for (std::size_t i = 0; i < proj.coords.rows(); ++i) {
    out << format_double(proj.coords(i, 0)) << ',' << format_double(proj.coords(i, 1)) << ',' << proj.modality[i]
        << ',' << proj.label[i] << '\n';
  }
}

}  // namespace modis::eval
