#include "modis/optimizer.hpp"

#include <cmath>

#include "modis/error.hpp"

namespace modis {

AdamState AdamState::for_group(const model::ModelParams& params, model::Group group) {
  AdamState s;
  s.first.resize(params.tensors.size());
  s.second.resize(params.tensors.size());
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    const auto& t = params.tensors[i];
    if (t.group != group) continue;
    s.first[i] = Matrix(t.value.rows(), t.value.cols());
    s.second[i] = Matrix(t.value.rows(), t.value.cols());
  }
  return s;
}

void adam_step(model::ModelParams& params, AdamState& state, std::span<const Matrix> grads, const AdamConfig& cfg) {
  if (grads.size() != params.tensors.size()) throw ShapeError("adam_step: one gradient slot per tensor required");
  ++state.steps;
  const double t = static_cast<double>(state.steps);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    if (!state.owns(i)) continue;
    Matrix& w = params.tensors[i].value;
    const Matrix& g = grads[i];
    if (!g.same_shape(w)) throw ShapeError("adam_step: gradient shape differs for " + params.tensors[i].name);
    Matrix& m1 = state.first[i];
    Matrix& m2 = state.second[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g.data()[j];
      double& a = m1.data()[j];
      double& b = m2.data()[j];
      a = static_cast<float>(cfg.beta1 * a + (1.0 - cfg.beta1) * gj);
      b = static_cast<float>(cfg.beta2 * b + (1.0 - cfg.beta2) * gj * gj);
      const double update = cfg.learning_rate * (a / correction1) / (std::sqrt(b / correction2) + cfg.eps);
      w.data()[j] = static_cast<float>(w.data()[j] - update);
    }
  }
}

}  // namespace modis
