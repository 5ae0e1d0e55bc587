#include "modis/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "modis/dataset.hpp"
#include "modis/error.hpp"

namespace modis::plot {

namespace fs = std::filesystem;

Table read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + " is empty");
  auto owned = [](std::string_view l) {
    std::vector<std::string> out;
    for (auto f : split_csv_line(l)) out.emplace_back(f);
    return out;
  };
  t.header = owned(line);
  while (std::getline(in, line)) {
    if (!line.empty()) t.rows.push_back(owned(line));
  }
  return t;
}

namespace {

constexpr const char* kPalette[] = {"#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e",
                                    "#e6ab02", "#a6761d", "#666666", "#1f78b4", "#b2df8a"};

std::string fmt(double v, int precision = 2) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(precision);
  s << v;
  return s.str();
}

std::size_t column(const Table& t, const std::string& name) {
  const auto it = std::find(t.header.begin(), t.header.end(), name);
  if (it == t.header.end()) throw DataError("missing column '" + name + "'");
  return static_cast<std::size_t>(it - t.header.begin());
}

std::string marker(int modality, double x, double y, const std::string& color) {
  std::ostringstream s;
  switch (modality % 3) {
    case 0:
      s << "<circle cx='" << fmt(x) << "' cy='" << fmt(y) << "' r='2.5' fill='" << color << "'/>";
      break;
    case 1:
      s << "<rect x='" << fmt(x - 2.2) << "' y='" << fmt(y - 2.2) << "' width='4.4' height='4.4' fill='" << color
        << "'/>";
      break;
    default:
      s << "<polygon points='" << fmt(x) << ',' << fmt(y - 3) << ' ' << fmt(x - 2.8) << ',' << fmt(y + 2) << ' '
        << fmt(x + 2.8) << ',' << fmt(y + 2) << "' fill='" << color << "'/>";
  }
  return s.str();
}

}  // namespace

std::string latent_scatter_svg(const Table& t) {
  const auto cx = column(t, "pc1"), cy = column(t, "pc2"), cm = column(t, "modality"), cc = column(t, "class");
  std::vector<double> xs, ys;
  for (const auto& r : t.rows) {
    xs.push_back(parse_double(r.at(cx)));
    ys.push_back(parse_double(r.at(cy)));
  }
  const double w = 520, h = 440, pad = 40;
  auto [xmin, xmax] = xs.empty() ? std::pair{0.0, 1.0} : std::pair{*std::min_element(xs.begin(), xs.end()),
                                                                    *std::max_element(xs.begin(), xs.end())};
  auto [ymin, ymax] = ys.empty() ? std::pair{0.0, 1.0} : std::pair{*std::min_element(ys.begin(), ys.end()),
                                                                    *std::max_element(ys.begin(), ys.end())};
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;

  std::ostringstream s;
  s << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "'>\n";
  s << "<rect width='100%' height='100%' fill='white'/>\n";
  s << "<text x='" << w / 2 << "' y='20' text-anchor='middle' font-family='sans-serif' font-size='14'>"
    << "latent PCA (color: class, shape: modality)</text>\n";
  s << "<rect x='" << pad << "' y='" << pad << "' width='" << w - 2 * pad << "' height='" << h - 2 * pad
    << "' fill='none' stroke='#999'/>\n";
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const double px = pad + (xs[i] - xmin) / (xmax - xmin) * (w - 2 * pad);
    const double py = h - pad - (ys[i] - ymin) / (ymax - ymin) * (h - 2 * pad);
    const int label = std::stoi(t.rows[i].at(cc));
    const std::string color = label < 0 ? "#bbbbbb" : kPalette[label % 10];
    s << marker(std::stoi(t.rows[i].at(cm)), px, py, color) << '\n';
  }
  s << "<text x='" << w / 2 << "' y='" << h - 10 << "' text-anchor='middle' font-family='sans-serif' "
    << "font-size='12'>pc1</text>\n";
  s << "<text x='12' y='" << h / 2 << "' font-family='sans-serif' font-size='12' transform='rotate(-90 12 " << h / 2
    << ")'>pc2</text>\n";
  s << "</svg>\n";
  return s.str();
}

std::string heatmap_svg(const Table& t, const std::string& title) {
  std::vector<std::size_t> cols;
  for (std::size_t c = 1; c < t.header.size(); ++c) {
    if (t.header[c] != "n") cols.push_back(c);
  }
  double vmax = 0;
  for (const auto& r : t.rows)
    for (auto c : cols)
      if (c < r.size() && !r[c].empty()) vmax = std::max(vmax, std::abs(parse_double(r[c])));
  if (vmax == 0) vmax = 1;

  const double cell = 48, left = 90, top = 60;
  const double w = left + cell * static_cast<double>(cols.size()) + 20;
  const double h = top + cell * static_cast<double>(t.rows.size()) + 20;
  std::ostringstream s;
  s << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "'>\n";
  s << "<rect width='100%' height='100%' fill='white'/>\n";
  s << "<text x='" << w / 2 << "' y='20' text-anchor='middle' font-family='sans-serif' font-size='14'>" << title
    << "</text>\n";
  for (std::size_t j = 0; j < cols.size(); ++j) {
    s << "<text x='" << left + cell * (j + 0.5) << "' y='" << top - 8
      << "' text-anchor='middle' font-family='sans-serif' font-size='10'>" << t.header[cols[j]] << "</text>\n";
  }
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    const double y = top + cell * static_cast<double>(i);
    s << "<text x='" << left - 6 << "' y='" << y + cell / 2 + 4
      << "' text-anchor='end' font-family='sans-serif' font-size='10'>" << r.at(0) << "</text>\n";
    for (std::size_t j = 0; j < cols.size(); ++j) {
      const double x = left + cell * static_cast<double>(j);
      if (cols[j] >= r.size() || r[cols[j]].empty()) continue;
      const double v = parse_double(r[cols[j]]);
      const int shade = 255 - static_cast<int>(std::lround(200.0 * std::abs(v) / vmax));
      s << "<rect x='" << x << "' y='" << y << "' width='" << cell << "' height='" << cell << "' fill='rgb(" << shade
        << ',' << shade << ",255)' stroke='white'/>";
      s << "<text x='" << x + cell / 2 << "' y='" << y + cell / 2 + 4
        << "' text-anchor='middle' font-family='sans-serif' font-size='10'>"
        << (v == std::floor(v) && std::abs(v) < 1e9 ? fmt(v, 0) : fmt(v, 3)) << "</text>\n";
    }
  }
  s << "</svg>\n";
  return s.str();
}

std::vector<fs::path> render_directory(const fs::path& eval_dir, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  auto emit = [&](const std::string& name, const std::string& svg) {
    const fs::path p = out_dir / name;
    std::ofstream out(p);
    if (!out) throw IoError("cannot write " + p.string());
    out << svg;
    written.push_back(p);
  };
  if (fs::exists(eval_dir / "latent2d.csv")) emit("latent2d.svg", latent_scatter_svg(read_csv(eval_dir / "latent2d.csv")));
  if (fs::exists(eval_dir / "mse_matrix.csv")) {
    emit("mse_matrix.svg", heatmap_svg(read_csv(eval_dir / "mse_matrix.csv"), "per-feature MSE (source x target)"));
  }
  std::vector<fs::path> confusions;
  for (const auto& e : fs::directory_iterator(eval_dir)) {
    const auto name = e.path().filename().string();
    if (name.rfind("confusion_", 0) == 0 && e.path().extension() == ".csv") confusions.push_back(e.path());
  }
  std::sort(confusions.begin(), confusions.end());
  for (const auto& p : confusions) {
    emit(p.stem().string() + ".svg", heatmap_svg(read_csv(p), p.stem().string()));
  }
  if (written.empty()) throw DataError("no evaluation files found in " + eval_dir.string());
  return written;
}

}  // namespace modis::plot
