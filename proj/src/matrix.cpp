#include "modis/matrix.hpp"

#include <cmath>

#include "modis/error.hpp"

namespace modis {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("matrix data length " + std::to_string(data_.size()) + " does not match " +
                     std::to_string(rows_) + "x" + std::to_string(cols_));
  }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t n = rows.size();
  const std::size_t p = n == 0 ? 0 : rows.begin()->size();
  Matrix out(n, p);
  std::size_t r = 0;
  for (const auto& row : rows) {
    if (row.size() != p) throw ShapeError("ragged initializer for Matrix");
    std::size_t c = 0;
    for (double v : row) out(r, c++) = v;
    ++r;
  }
  return out;
}

Matrix Matrix::identity(std::size_t n) {
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) out(i, i) = 1.0;
  return out;
}

bool Matrix::all_finite() const noexcept {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Matrix Matrix::slice_rows(std::size_t begin, std::size_t count) const {
  if (begin + count > rows_) throw ShapeError("row slice out of range");
  Matrix out(count, cols_);
  std::copy(data_.begin() + static_cast<std::ptrdiff_t>(begin * cols_),
            data_.begin() + static_cast<std::ptrdiff_t>((begin + count) * cols_), out.data_.begin());
  return out;
}

Matrix Matrix::gather_rows(std::span<const std::size_t> index) const {
  Matrix out(index.size(), cols_);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= rows_) throw ShapeError("gather index out of range");
    auto src = row(index[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

Matrix Matrix::transposed() const {
  Matrix out(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) out(c, r) = (*this)(r, c);
  return out;
}

std::string shape_string(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

Matrix vstack(std::span<const Matrix> blocks) {
  if (blocks.empty()) return {};
  const std::size_t p = blocks.front().cols();
  std::size_t n = 0;
  for (const auto& b : blocks) {
    if (b.cols() != p) throw ShapeError("vstack: column mismatch");
    n += b.rows();
  }
  Matrix out(n, p);
  std::size_t r = 0;
  for (const auto& b : blocks) {
    std::copy(b.values().begin(), b.values().end(), out.data() + r * p);
    r += b.rows();
  }
  return out;
}

}  // namespace modis
