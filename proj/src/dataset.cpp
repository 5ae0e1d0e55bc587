#include "modis/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"
#include "modis/error.hpp"

namespace modis {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::size_t> PairedDataset::dims() const {
  std::vector<std::size_t> out;
  for (const auto& m : modalities) out.push_back(m.cols());
  return out;
}

void PairedDataset::validate() const {
  for (std::size_t m = 0; m < modalities.size(); ++m) {
    if (modalities[m].rows() != labels.size()) {
      throw DataError("paired dataset: modality " + std::to_string(m) + " has " +
                      std::to_string(modalities[m].rows()) + " rows, expected " + std::to_string(labels.size()));
    }
  }
  for (int c : labels) {
    if (c < 0 || static_cast<std::size_t>(c) >= n_classes) throw DataError("paired dataset: label out of range");
  }
}

ModalityBlock ModalityBlock::subset(const std::vector<std::size_t>& rows) const {
  ModalityBlock out;
  out.x = x.gather_rows(rows);
  for (std::size_t r : rows) {
    out.sample_id.push_back(sample_id[r]);
    out.label.push_back(label[r]);
    out.pair_id.push_back(pair_id[r]);
  }
  return out;
}

std::size_t UnpairedDataset::size() const noexcept {
  std::size_t n = 0;
  for (const auto& b : modalities) n += b.size();
  return n;
}

std::vector<std::size_t> UnpairedDataset::dims() const {
  std::vector<std::size_t> out;
  for (const auto& b : modalities) out.push_back(b.x.cols());
  return out;
}

std::size_t UnpairedDataset::labeled_count() const noexcept {
  std::size_t n = 0;
  for (const auto& b : modalities)
    for (int c : b.label) n += c != kUnlabeled;
  return n;
}

std::vector<std::size_t> UnpairedDataset::cell(int label, std::size_t m) const {
  std::vector<std::size_t> out;
  const auto& b = modalities.at(m);
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (b.label[i] == label) out.push_back(i);
  }
  return out;
}

void UnpairedDataset::validate() const {
  std::set<std::int64_t> ids;
  for (std::size_t m = 0; m < modalities.size(); ++m) {
    const auto& b = modalities[m];
    const auto n = b.size();
    if (b.sample_id.size() != n || b.label.size() != n || b.pair_id.size() != n) {
      throw DataError("modality " + std::to_string(m) + ": metadata length differs from row count");
    }
    for (std::size_t i = 0; i < n; ++i) {
      const int c = b.label[i];
      if (c != kUnlabeled && (c < 0 || static_cast<std::size_t>(c) >= n_classes)) {
        throw DataError("modality " + std::to_string(m) + ": class " + std::to_string(c) + " out of range");
      }
      if (!ids.insert(b.sample_id[i]).second) {
        throw DataError("duplicate sample_id " + std::to_string(b.sample_id[i]));
      }
    }
  }
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\r' || text.back() == '\t')) text.remove_suffix(1);
  if (text.empty() || text == "NA" || text == "nan" || text == "NaN") {
    return std::numeric_limits<double>::quiet_NaN();
  }
  if (text.front() == '+') text.remove_prefix(1);
  double v = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    throw DataError("cannot parse number '" + std::string(text) + "'");
  }
  return v;
}

std::vector<std::string_view> split_csv_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

namespace {

std::int64_t parse_int(std::string_view text, const std::string& where) {
  std::int64_t v = 0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    throw DataError(where + ": cannot parse integer '" + std::string(text) + "'");
  }
  return v;
}

fs::path modality_file(const fs::path& dir, std::size_t m) {
  return dir / ("modality_" + std::to_string(m) + ".csv");
}

void write_block(const fs::path& path, const ModalityBlock& b) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "sample_id,pair_id,class";
  for (std::size_t f = 0; f < b.x.cols(); ++f) out << ",f" << f;
  out << '\n';
  for (std::size_t i = 0; i < b.size(); ++i) {
    out << b.sample_id[i] << ',' << b.pair_id[i] << ',' << b.label[i];
    for (double v : b.x.row(i)) out << ',' << format_double(v);
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

ModalityBlock read_block(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
  const auto header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "sample_id" || header[1] != "pair_id" || header[2] != "class") {
    throw DataError(path.string() + ": header must start with sample_id,pair_id,class");
  }
  const std::size_t p = header.size() - 3;
  ModalityBlock b;
  std::vector<double> values;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    const std::string where = path.filename().string() + ":" + std::to_string(line_no);
    if (cells.size() != p + 3) throw DataError(where + ": expected " + std::to_string(p + 3) + " fields");
    b.sample_id.push_back(parse_int(cells[0], where));
    b.pair_id.push_back(parse_int(cells[1], where));
    b.label.push_back(static_cast<int>(parse_int(cells[2], where)));
    for (std::size_t f = 0; f < p; ++f) values.push_back(parse_double(cells[f + 3]));
  }
  b.x = Matrix(b.sample_id.size(), p, std::move(values));
  return b;
}

}  // namespace

void write_dataset(const fs::path& dir, const UnpairedDataset& ds) {
  fs::create_directories(dir);
  json manifest;
  manifest["n_classes"] = ds.n_classes;
  manifest["n_modalities"] = ds.n_modalities();
  manifest["dims"] = ds.dims();
  manifest["seed"] = ds.seed;
  manifest["provenance"] = ds.provenance;
  std::vector<std::size_t> counts;
  for (const auto& b : ds.modalities) counts.push_back(b.size());
  manifest["records_per_modality"] = counts;
  std::ofstream out(dir / "dataset.json");
  if (!out) throw IoError("cannot write " + (dir / "dataset.json").string());
  out << manifest.dump(2) << '\n';
  for (std::size_t m = 0; m < ds.n_modalities(); ++m) write_block(modality_file(dir, m), ds.modalities[m]);
}

UnpairedDataset read_dataset(const fs::path& dir) {
  std::ifstream in(dir / "dataset.json");
  if (!in) throw IoError("missing dataset manifest " + (dir / "dataset.json").string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("dataset.json: " + std::string(e.what()));
  }
  UnpairedDataset ds;
  ds.n_classes = manifest.at("n_classes").get<std::size_t>();
  ds.seed = manifest.value("seed", std::uint64_t{0});
  ds.provenance = manifest.value("provenance", std::vector<std::string>{});
  const auto m_count = manifest.at("n_modalities").get<std::size_t>();
  const auto dims = manifest.at("dims").get<std::vector<std::size_t>>();
  for (std::size_t m = 0; m < m_count; ++m) {
    ds.modalities.push_back(read_block(modality_file(dir, m)));
    if (m < dims.size() && ds.modalities.back().x.cols() != dims[m]) {
      throw DataError("modality " + std::to_string(m) + ": column count disagrees with manifest");
    }
  }
  ds.validate();
  return ds;
}

void write_paired(const fs::path& dir, const PairedDataset& ds, std::uint64_t seed) {
  UnpairedDataset out;
  out.n_classes = ds.n_classes;
  out.seed = seed;
  out.provenance = {"paired"};
  const auto n = static_cast<std::int64_t>(ds.n_samples());
  for (std::size_t m = 0; m < ds.n_modalities(); ++m) {
    ModalityBlock b;
    b.x = ds.modalities[m];
    for (std::int64_t i = 0; i < n; ++i) {
      // Ids are made unique across modalities; pair_id carries the row.
      b.sample_id.push_back(static_cast<std::int64_t>(m) * n + i);
      b.pair_id.push_back(i);
      b.label.push_back(ds.labels[static_cast<std::size_t>(i)]);
    }
    out.modalities.push_back(std::move(b));
  }
  write_dataset(dir, out);
}

PairedDataset read_paired(const fs::path& dir) {
  const UnpairedDataset raw = read_dataset(dir);
  PairedDataset out;
  out.n_classes = raw.n_classes;
  if (raw.modalities.empty()) return out;
  const std::size_t n = raw.modalities.front().size();
  out.labels.assign(n, 0);
  for (std::size_t m = 0; m < raw.n_modalities(); ++m) {
    const auto& b = raw.modalities[m];
    if (b.size() != n) throw DataError("paired dataset: modalities have different row counts");
    Matrix x(n, b.x.cols());
    std::vector<bool> seen(n, false);
    for (std::size_t i = 0; i < n; ++i) {
      const auto pid = b.pair_id[i];
      if (pid < 0 || static_cast<std::size_t>(pid) >= n || seen[static_cast<std::size_t>(pid)]) {
        throw DataError("paired dataset: pair_id must be a permutation of 0..n-1");
      }
      const auto row = static_cast<std::size_t>(pid);
      seen[row] = true;
      std::copy(b.x.row(i).begin(), b.x.row(i).end(), x.row(row).begin());
      if (m == 0) {
        out.labels[row] = b.label[i];
      } else if (out.labels[row] != b.label[i]) {
        throw DataError("paired dataset: labels disagree across modalities for pair " + std::to_string(pid));
      }
    }
    out.modalities.push_back(std::move(x));
  }
  out.validate();
  return out;
}

}  // namespace modis
