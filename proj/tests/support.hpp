#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "modis/autograd.hpp"
#include "modis/matrix.hpp"

namespace testing {

using modis::Matrix;
namespace ad = modis::ad;

inline Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> nd(0.0, sd);
  Matrix m(r, c);
  for (double& v : m.values()) v = nd(rng);
  return m;
}

using ScalarFn = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

// Largest relative deviation between tape gradients and central differences,
// normalized by the largest numeric gradient magnitude of each input.
inline double gradient_error(const ScalarFn& f, const std::vector<Matrix>& inputs, double h = 1e-5) {
  std::vector<Matrix> analytic;
  {
    ad::Tape tape;
    std::vector<ad::Var> leaves;
    for (const auto& m : inputs) leaves.push_back(tape.variable(m));
    const auto out = f(tape, leaves);
    for (const auto& g : tape.grad(out, leaves)) analytic.push_back(g.value());
  }
  auto eval = [&](const std::vector<Matrix>& xs) {
    ad::Tape tape;
    std::vector<ad::Var> leaves;
    for (const auto& m : xs) leaves.push_back(tape.variable(m));
    return f(tape, leaves).scalar();
  };
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Matrix numeric(inputs[k].rows(), inputs[k].cols());
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      auto plus = inputs, minus = inputs;
      plus[k].data()[i] += h;
      minus[k].data()[i] -= h;
      numeric.data()[i] = (eval(plus) - eval(minus)) / (2 * h);
    }
    double scale = 1e-8, diff = 0.0;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      scale = std::max(scale, std::abs(numeric.data()[i]));
      diff = std::max(diff, std::abs(numeric.data()[i] - analytic[k].data()[i]));
    }
    worst = std::max(worst, diff / scale);
  }
  return worst;
}

}  // namespace testing
