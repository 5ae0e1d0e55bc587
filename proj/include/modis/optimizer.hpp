#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "modis/model.hpp"

namespace modis {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment estimates for one parameter group. `first[i]` and
/// `second[i]` belong to ModelParams::tensors[i] and stay empty for tensors
/// outside the group.
struct AdamState {
  std::vector<Matrix> first;
  std::vector<Matrix> second;
  std::uint64_t steps = 0;

  static AdamState for_group(const model::ModelParams& params, model::Group group);
  bool owns(std::size_t tensor) const noexcept { return tensor < first.size() && !first[tensor].empty(); }
};

/// One bias-corrected Adam update of the tensors owned by `state`, using
/// `grads[i]` for tensor i. Updated weights and moments are rounded to single
/// precision, which keeps float32 checkpoints exact.
void adam_step(model::ModelParams& params, AdamState& state, std::span<const Matrix> grads, const AdamConfig& cfg);

}  // namespace modis
