#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "json.hpp"
#include "modis/model.hpp"
#include "modis/optimizer.hpp"

namespace modis {

nlohmann::json spec_to_json(const model::ArchitectureSpec& spec);
model::ArchitectureSpec spec_from_json(const nlohmann::json& j);

/// Optimizer progress stored alongside the weights so training can resume.
struct TrainingState {
  AdamState adam_vae;
  AdamState adam_disc;
  std::uint64_t step = 0;
  std::uint64_t epochs_done = 0;
  nlohmann::json config;
};

struct Checkpoint {
  model::ModelParams params;
  std::optional<TrainingState> training;
};

// Layout of a checkpoint directory:
//   manifest.json                      spec, seed, step, tensor table
//   params/<tensor name>.f32           weights, little-endian float32, row-major
//   optim/{vae,disc}.{m,v}.<name>.f32  Adam moments (when training state is saved)
// Values are stored as float32; writing parameters that already lie on the
// float32 grid and reading them back is bit-exact.
void write_checkpoint(const std::filesystem::path& dir, const model::ModelParams& params,
                      const TrainingState* training = nullptr);
Checkpoint read_checkpoint(const std::filesystem::path& dir);

/// Little-endian float32 blob helpers.
void write_f32(const std::filesystem::path& path, const Matrix& m);
Matrix read_f32(const std::filesystem::path& path, std::size_t rows, std::size_t cols);

}  // namespace modis
