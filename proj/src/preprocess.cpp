#include "modis/preprocess.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "modis/dataset.hpp"
#include "modis/error.hpp"

namespace modis::prep {

namespace {

bool missing(double v) { return std::isnan(v); }

std::vector<std::size_t> all_columns(std::size_t p) {
  std::vector<std::size_t> out(p);
  std::iota(out.begin(), out.end(), 0);
  return out;
}

void require_kind(const FeatureMatrix& m, Kind kind, const char* op) {
  if (m.kind != kind) {
    throw DataError(std::string(op) + " expects a " + kind_name(kind) + " matrix, got " + kind_name(m.kind));
  }
}

FeatureMatrix keep_or_throw(const FeatureMatrix& m, const std::vector<std::size_t>& keep, const char* op) {
  if (keep.empty()) throw DataError(std::string(op) + ": every column was dropped");
  return m.select_columns(keep);
}

double median(std::vector<double> v) {
  const std::size_t n = v.size();
  std::sort(v.begin(), v.end());
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

bool FeatureMatrix::has_missing() const noexcept {
  return std::any_of(values.values().begin(), values.values().end(), missing);
}

void FeatureMatrix::validate() const {
  if (!row_ids.empty() && row_ids.size() != values.rows()) throw ShapeError("row id count differs from rows");
  if (!col_ids.empty() && col_ids.size() != values.cols()) throw ShapeError("column id count differs from columns");
  for (double v : values.values()) {
    if (missing(v)) continue;
    if (kind == Kind::beta_values && (v < 0.0 || v > 1.0)) throw DataError("beta value outside [0, 1]");
    if (kind == Kind::counts && v < 0.0) throw DataError("negative count");
  }
}

FeatureMatrix FeatureMatrix::select_columns(const std::vector<std::size_t>& keep) const {
  FeatureMatrix out;
  out.kind = kind;
  out.row_ids = row_ids;
  out.values = Matrix(rows(), keep.size());
  for (std::size_t i = 0; i < rows(); ++i)
    for (std::size_t j = 0; j < keep.size(); ++j) out.values(i, j) = values(i, keep[j]);
  if (!col_ids.empty()) {
    for (auto j : keep) out.col_ids.push_back(col_ids[j]);
  }
  return out;
}

FeatureMatrix filter_methylation(const FeatureMatrix& m, double max_missing_frac, double min_sd) {
  require_kind(m, Kind::beta_values, "filter_methylation");
  const std::size_t n = m.rows();
  std::vector<std::size_t> keep;
  for (std::size_t j = 0; j < m.cols(); ++j) {
    std::size_t absent = 0, present = 0;
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = m.values(i, j);
      if (missing(v) || v == 0.0) ++absent;
      if (!missing(v)) {
        ++present;
        s += v;
      }
    }
    if (n == 0 || static_cast<double>(absent) / static_cast<double>(n) >= max_missing_frac) continue;
    if (present < 2) continue;
    const double mu = s / static_cast<double>(present);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = m.values(i, j);
      if (!missing(v)) ss += (v - mu) * (v - mu);
    }
    const double sd = std::sqrt(ss / static_cast<double>(present - 1));
    if (sd < min_sd) continue;
    keep.push_back(j);
  }
  return keep_or_throw(m, keep, "filter_methylation");
}

FeatureMatrix impute_mean(const FeatureMatrix& m) {
  FeatureMatrix out = m;
  for (std::size_t j = 0; j < m.cols(); ++j) {
    double s = 0.0;
    std::size_t present = 0;
    for (std::size_t i = 0; i < m.rows(); ++i) {
      const double v = m.values(i, j);
      if (!missing(v)) {
        s += v;
        ++present;
      }
    }
    if (present == 0 && m.rows() > 0) {
      throw DataError("impute_mean: column " + (m.col_ids.empty() ? std::to_string(j) : m.col_ids[j]) +
                      " is entirely missing");
    }
    const double mu = present ? s / static_cast<double>(present) : 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) {
      if (missing(out.values(i, j))) out.values(i, j) = mu;
    }
  }
  return out;
}

FeatureMatrix beta_to_m(const FeatureMatrix& m) {
  require_kind(m, Kind::beta_values, "beta_to_m");
  FeatureMatrix out = m;
  out.kind = Kind::continuous;
  for (double& v : out.values.values()) {
    if (missing(v)) continue;
    const double b = std::clamp(v, kBetaClamp, 1.0 - kBetaClamp);
    v = std::log2(b / (1.0 - b));
  }
  return out;
}

FeatureMatrix m_to_beta(const FeatureMatrix& m) {
  FeatureMatrix out = m;
  out.kind = Kind::beta_values;
  for (double& v : out.values.values()) {
    if (missing(v)) continue;
    v = 1.0 / (1.0 + std::exp2(-v));
  }
  return out;
}

FeatureMatrix filter_counts(const FeatureMatrix& m, double min_count, double max_missing_frac) {
  require_kind(m, Kind::counts, "filter_counts");
  const std::size_t n = m.rows();
  std::vector<std::size_t> keep;
  for (std::size_t j = 0; j < m.cols(); ++j) {
    std::size_t low = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = m.values(i, j);
      if (missing(v) || v < min_count) ++low;
    }
    if (n > 0 && static_cast<double>(low) / static_cast<double>(n) < max_missing_frac) keep.push_back(j);
  }
  return keep_or_throw(m, keep, "filter_counts");
}

SizeFactorResult median_of_ratios(const FeatureMatrix& m) {
  require_kind(m, Kind::counts, "median_of_ratios");
  if (m.has_missing()) throw DataError("median_of_ratios: matrix has missing entries");
  const std::size_t n = m.rows(), p = m.cols();

  std::vector<std::size_t> reference_cols;
  std::vector<double> log_geomean;
  for (std::size_t j = 0; j < p; ++j) {
    double s = 0.0;
    bool positive = n > 0;
    for (std::size_t i = 0; i < n && positive; ++i) {
      const double v = m.values(i, j);
      positive = v > 0.0;
      if (positive) s += std::log(v);
    }
    if (positive) {
      reference_cols.push_back(j);
      log_geomean.push_back(s / static_cast<double>(n));
    }
  }
  if (reference_cols.empty()) throw DataError("median_of_ratios: no feature is positive in every sample");

  SizeFactorResult out{m, {}};
  std::vector<double> ratios(reference_cols.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t r = 0; r < reference_cols.size(); ++r) {
      ratios[r] = std::exp(std::log(m.values(i, reference_cols[r])) - log_geomean[r]);
    }
    const double factor = median(ratios);
    out.size_factors.push_back(factor);
    for (double& v : out.normalized.values.row(i)) v /= factor;
  }
  return out;
}

FeatureMatrix log2p1(const FeatureMatrix& m) {
  FeatureMatrix out = m;
  out.kind = Kind::continuous;
  for (double& v : out.values.values()) {
    if (missing(v)) continue;
    if (v < 0.0) throw DataError("log2p1: negative entry " + format_double(v));
    v = std::log2(v + 1.0);
  }
  return out;
}

PcaResult principal_components(const Matrix& centered, std::size_t k) {
  const std::size_t n = centered.rows(), p = centered.cols();
  if (k == 0 || k > std::min(n, p)) {
    throw ConfigError("n_components must lie in [1, " + std::to_string(std::min(n, p)) + "], got " +
                      std::to_string(k));
  }
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMajor> x(centered.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;

  // Eigen-decompose whichever of the covariance (p×p) and Gram (n×n)
  // matrices is smaller; both share their non-zero spectrum.
  Eigen::MatrixXd scores;
  Eigen::VectorXd evals;
  double total = 0.0;
  if (p <= n) {
    const Eigen::MatrixXd cov = (x.transpose() * x) / denom;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    total = cov.trace();
    evals = es.eigenvalues().reverse();
    const Eigen::MatrixXd dirs = es.eigenvectors().rowwise().reverse().leftCols(static_cast<Eigen::Index>(k));
    scores = x * dirs;
  } else {
    const Eigen::MatrixXd gram = (x * x.transpose()) / denom;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    total = gram.trace();
    evals = es.eigenvalues().reverse();
    const Eigen::MatrixXd u = es.eigenvectors().rowwise().reverse().leftCols(static_cast<Eigen::Index>(k));
    scores = u;
    for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(k); ++c) {
      scores.col(c) *= std::sqrt(std::max(evals(c), 0.0) * denom);
    }
  }

  PcaResult out;
  out.scores = Matrix(n, k);
  double kept = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    const auto ci = static_cast<Eigen::Index>(c);
    Eigen::Index arg = 0;
    scores.col(ci).cwiseAbs().maxCoeff(&arg);
    const double sign = scores(arg, ci) < 0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < n; ++i) out.scores(i, c) = sign * scores(static_cast<Eigen::Index>(i), ci);
    const double ev = std::max(evals(ci), 0.0);
    out.eigenvalues.push_back(ev);
    kept += ev;
  }
  out.explained_fraction = total > 0 ? std::min(kept / total, 1.0) : 1.0;
  return out;
}

PcaResult standardize_pca(const FeatureMatrix& m, std::size_t n_components) {
  if (m.has_missing()) throw DataError("standardize_pca: matrix has missing entries");
  const std::size_t n = m.rows(), p = m.cols();
  if (n_components == 0 || n_components > std::min(n, p)) {
    throw ConfigError("n_components must lie in [1, min(n, p)]");
  }
  Matrix z(n, p);
  for (std::size_t j = 0; j < p; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += m.values(i, j);
    const double mu = s / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) ss += (m.values(i, j) - mu) * (m.values(i, j) - mu);
    const double sd = std::sqrt(ss / static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) z(i, j) = sd > 0 ? (m.values(i, j) - mu) / sd : 0.0;
  }
  return principal_components(z, n_components);
}

Kind parse_kind(const std::string& name) {
  if (name == "beta_values") return Kind::beta_values;
  if (name == "counts") return Kind::counts;
  if (name == "continuous") return Kind::continuous;
  throw ConfigError("kind: unknown matrix kind '" + name + "'");
}

std::string kind_name(Kind kind) {
  switch (kind) {
    case Kind::beta_values: return "beta_values";
    case Kind::counts: return "counts";
    case Kind::continuous: return "continuous";
  }
  return "continuous";
}

FeatureMatrix read_feature_csv(const std::filesystem::path& path, Kind kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
  FeatureMatrix out;
  out.kind = kind;
  const auto header = split_csv_line(line);
  if (header.empty()) throw DataError(path.string() + ": missing header");
  for (std::size_t j = 1; j < header.size(); ++j) out.col_ids.emplace_back(header[j]);
  std::vector<double> values;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw DataError(path.string() + ": row " + std::to_string(out.row_ids.size() + 1) + " has " +
                      std::to_string(cells.size()) + " fields, expected " + std::to_string(header.size()));
    }
    out.row_ids.emplace_back(cells[0]);
    for (std::size_t j = 1; j < cells.size(); ++j) values.push_back(parse_double(cells[j]));
  }
  out.values = Matrix(out.row_ids.size(), out.col_ids.size(), std::move(values));
  out.validate();
  return out;
}

void write_feature_csv(const std::filesystem::path& path, const FeatureMatrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "sample_id";
  for (std::size_t j = 0; j < m.cols(); ++j) out << ',' << (m.col_ids.empty() ? "f" + std::to_string(j) : m.col_ids[j]);
  out << '\n';
  for (std::size_t i = 0; i < m.rows(); ++i) {
    out << (m.row_ids.empty() ? std::to_string(i) : m.row_ids[i]);
    for (double v : m.values.row(i)) out << ',' << (std::isnan(v) ? std::string("NA") : format_double(v));
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace modis::prep
