#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace modis::plot {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

Table read_csv(const std::filesystem::path& path);

/// Scatter of latent2d.csv colored by class, marker shape by modality.
std::string latent_scatter_svg(const Table& latent2d);
/// Heatmap of a confusion_*.csv or mse_matrix.csv table; the first column
/// holds row names, non-numeric trailing columns are ignored.
std::string heatmap_svg(const Table& table, const std::string& title);

/// Renders every known evaluation file found in `eval_dir` into
/// `out_dir` and returns the written paths.
std::vector<std::filesystem::path> render_directory(const std::filesystem::path& eval_dir,
                                                    const std::filesystem::path& out_dir);

}  // namespace modis::plot
