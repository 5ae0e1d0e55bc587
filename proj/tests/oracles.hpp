#pragma once

// Independent reference computations. Each one takes the slow, direct route
// (pair enumeration, quadrature, Jacobi rotations) so it shares no code
// with the library.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <utility>
#include <vector>

#include "modis/matrix.hpp"

namespace oracle {

using modis::Matrix;

// Pair-counting form of the adjusted Rand index.
inline double ari_pairs(const std::vector<int>& a, const std::vector<int>& b) {
  double ss = 0, sd = 0, ds = 0, dd = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      const bool sa = a[i] == a[j], sb = b[i] == b[j];
      (sa ? (sb ? ss : sd) : (sb ? ds : dd)) += 1;
    }
  }
  const double denom = (ss + sd) * (sd + dd) + (ss + ds) * (ds + dd);
  if (denom == 0) return 1.0;
  return 2.0 * (ss * dd - sd * ds) / denom;
}

inline double nmi_bruteforce(const std::vector<int>& a, const std::vector<int>& b) {
  const double n = static_cast<double>(a.size());
  std::map<int, double> pa, pb;
  std::map<std::pair<int, int>, double> pab;
  for (std::size_t i = 0; i < a.size(); ++i) {
    pa[a[i]] += 1;
    pb[b[i]] += 1;
    pab[{a[i], b[i]}] += 1;
  }
  for (auto* m : {&pa, &pb})
    for (auto& [k, p] : *m) p /= n;
  for (auto& [k, p] : pab) p /= n;
  double ha = 0, hb = 0, mi = 0;
  for (auto [k, p] : pa) ha -= p * std::log(p);
  for (auto [k, p] : pb) hb -= p * std::log(p);
  for (auto [ka, p1] : pa) {
    for (auto [kb, p2] : pb) {
      auto it = pab.find({ka, kb});
      if (it != pab.end()) mi += it->second * std::log(it->second / (p1 * p2));
    }
  }
  if (pa.size() == 1 && pb.size() == 1) return 1.0;
  if (ha + hb == 0) return 1.0;
  return mi / (0.5 * (ha + hb));
}

inline double bacc_bruteforce(const std::vector<int>& t, const std::vector<int>& p) {
  std::vector<int> classes = t;
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  double s = 0;
  for (int c : classes) {
    double hit = 0, tot = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (t[i] != c) continue;
      tot += 1;
      hit += p[i] == c;
    }
    s += hit / tot;
  }
  return s / static_cast<double>(classes.size());
}

// Symmetric eigen-decomposition by cyclic Jacobi rotations. Returns
// eigenvalues descending and the matching eigenvectors as columns.
inline std::pair<std::vector<double>, Matrix> jacobi_eigen(Matrix a) {
  const std::size_t n = a.rows();
  Matrix v = Matrix::identity(n);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    if (off < 1e-26) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2 * a(p, q));
        const double t = (theta >= 0 ? 1 : -1) / (std::abs(theta) + std::sqrt(theta * theta + 1));
        const double c = 1 / std::sqrt(t * t + 1), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto x, auto y) { return a(x, x) > a(y, y); });
  std::vector<double> values;
  Matrix vectors(n, n);
  for (std::size_t c = 0; c < n; ++c) {
    values.push_back(a(order[c], order[c]));
    for (std::size_t r = 0; r < n; ++r) vectors(r, c) = v(r, order[c]);
  }
  return {values, vectors};
}

// KL(N(mu, s^2) || N(0, 1)) by trapezoidal integration of q log(q / p).
inline double kl_quadrature(double mu, double s) {
  const double lo = mu - 12 * s, hi = mu + 12 * s;
  const int steps = 200000;
  const double h = (hi - lo) / steps;
  double acc = 0;
  for (int i = 0; i <= steps; ++i) {
    const double x = lo + i * h;
    const double lq = -0.5 * std::log(2 * M_PI * s * s) - (x - mu) * (x - mu) / (2 * s * s);
    const double lp = -0.5 * std::log(2 * M_PI) - x * x / 2;
    const double f = std::exp(lq) * (lq - lp);
    acc += (i == 0 || i == steps ? 0.5 : 1.0) * f;
  }
  return acc * h;
}

// Mean over unordered row pairs of ||x_i - x_j||^2 / p.
inline double pairwise_mse_loop(const Matrix& x) {
  double s = 0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = i + 1; j < x.rows(); ++j, ++pairs) {
      double d = 0;
      for (std::size_t f = 0; f < x.cols(); ++f) d += (x(i, f) - x(j, f)) * (x(i, f) - x(j, f));
      s += d / static_cast<double>(x.cols());
    }
  }
  return s / static_cast<double>(pairs);
}

// Direct loops over the clustering terms for a kernel matrix `s`.
struct Clustering {
  double c1, c2, c3;
};

inline Clustering clustering_loops(const Matrix& h, const Matrix& alpha, double sigma) {
  const std::size_t n = h.rows(), k = alpha.cols();
  Matrix s(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double d = 0;
      for (std::size_t f = 0; f < h.cols(); ++f) d += (h(i, f) - h(j, f)) * (h(i, f) - h(j, f));
      s(i, j) = std::exp(-d / (2 * sigma * sigma));
    }
  auto quotient = [&](const Matrix& cols) {
    auto g = [&](std::size_t a, std::size_t b) {
      double v = 0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) v += cols(i, a) * s(i, j) * cols(j, b);
      return v;
    };
    double total = 0;
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = a + 1; b < k; ++b) total += g(a, b) / std::sqrt(g(a, a) * g(b, b));
    return total / static_cast<double>(k * (k - 1) / 2);
  };
  Matrix corners(n, k);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t c = 0; c < k; ++c) {
      double d = 0;
      for (std::size_t q = 0; q < k; ++q) {
        const double e = alpha(j, q) - (q == c ? 1.0 : 0.0);
        d += e * e;
      }
      corners(j, c) = std::exp(-d);
    }
  double c3 = 0;
  for (std::size_t c = 0; c < k; ++c) {
    double mean = 0;
    for (std::size_t i = 0; i < n; ++i) mean += alpha(i, c) / static_cast<double>(n);
    c3 += mean * std::log(mean);
  }
  return {quotient(alpha), quotient(corners), c3};
}

}  // namespace oracle
