#include "modis/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "modis/error.hpp"

namespace modis {

namespace fs = std::filesystem;
using nlohmann::json;

json spec_to_json(const model::ArchitectureSpec& spec) {
  return {{"modality_dims", spec.modality_dims}, {"n_classes", spec.n_classes},
          {"latent_dim", spec.latent_dim},       {"encoder_hidden", spec.encoder_hidden},
          {"decoder_hidden", spec.decoder_hidden}, {"trunk", spec.trunk},
          {"leaky_slope", spec.leaky_slope}};
}

model::ArchitectureSpec spec_from_json(const json& j) {
  model::ArchitectureSpec spec;
  try {
    spec.modality_dims = j.at("modality_dims").get<std::vector<std::size_t>>();
    spec.n_classes = j.at("n_classes").get<std::size_t>();
    spec.latent_dim = j.at("latent_dim").get<std::size_t>();
    spec.encoder_hidden = j.at("encoder_hidden").get<std::vector<std::vector<std::size_t>>>();
    spec.decoder_hidden = j.at("decoder_hidden").get<std::vector<std::vector<std::size_t>>>();
    spec.trunk = j.at("trunk").get<std::vector<std::size_t>>();
    spec.leaky_slope = j.at("leaky_slope").get<double>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("architecture spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

void write_f32(const fs::path& path, const Matrix& m) {
  std::vector<std::uint32_t> words(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    std::uint32_t w = std::bit_cast<std::uint32_t>(static_cast<float>(m.data()[i]));
    if constexpr (std::endian::native == std::endian::big) w = __builtin_bswap32(w);
    words[i] = w;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(words.data()), static_cast<std::streamsize>(words.size() * 4));
  if (!out) throw IoError("write failed for " + path.string());
}

Matrix read_f32(const fs::path& path, std::size_t rows, std::size_t cols) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<std::uint32_t> words(rows * cols);
  in.read(reinterpret_cast<char*>(words.data()), static_cast<std::streamsize>(words.size() * 4));
  if (in.gcount() != static_cast<std::streamsize>(words.size() * 4) || in.peek() != std::ifstream::traits_type::eof()) {
    throw DataError(path.string() + ": size does not match " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < words.size(); ++i) {
    std::uint32_t w = words[i];
    if constexpr (std::endian::native == std::endian::big) w = __builtin_bswap32(w);
    m.data()[i] = static_cast<double>(std::bit_cast<float>(w));
  }
  return m;
}

namespace {

void write_moments(const fs::path& dir, const std::string& group, const model::ModelParams& params,
                   const AdamState& s, json& table) {
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    if (!s.owns(i)) continue;
    const auto& name = params.tensors[i].name;
    const std::string m_file = "optim/" + group + ".m." + name + ".f32";
    const std::string v_file = "optim/" + group + ".v." + name + ".f32";
    write_f32(dir / m_file, s.first[i]);
    write_f32(dir / v_file, s.second[i]);
    table.push_back({{"tensor", name}, {"m", m_file}, {"v", v_file}});
  }
}

AdamState read_moments(const fs::path& dir, const model::ModelParams& params, model::Group group,
                       const json& table, std::uint64_t steps) {
  AdamState s = AdamState::for_group(params, group);
  s.steps = steps;
  for (const auto& entry : table) {
    const auto name = entry.at("tensor").get<std::string>();
    for (std::size_t i = 0; i < params.tensors.size(); ++i) {
      if (params.tensors[i].name != name) continue;
      if (!s.owns(i)) throw DataError("checkpoint: optimizer state for " + name + " in the wrong group");
      const auto& w = params.tensors[i].value;
      s.first[i] = read_f32(dir / entry.at("m").get<std::string>(), w.rows(), w.cols());
      s.second[i] = read_f32(dir / entry.at("v").get<std::string>(), w.rows(), w.cols());
    }
  }
  return s;
}

}  // namespace

void write_checkpoint(const fs::path& dir, const model::ModelParams& params, const TrainingState* training) {
  fs::create_directories(dir / "params");
  json manifest;
  manifest["format"] = "modislab-checkpoint-1";
  manifest["spec"] = spec_to_json(params.spec);
  manifest["seed"] = params.seed;
  manifest["parameter_count"] = params.parameter_count();
  json tensors = json::array();
  for (const auto& t : params.tensors) {
    const std::string file = "params/" + t.name + ".f32";
    write_f32(dir / file, t.value);
    tensors.push_back({{"name", t.name}, {"rows", t.value.rows()}, {"cols", t.value.cols()}, {"file", file}});
  }
  manifest["tensors"] = tensors;
  if (training) {
    fs::create_directories(dir / "optim");
    json vae = json::array(), disc = json::array();
    write_moments(dir, "vae", params, training->adam_vae, vae);
    write_moments(dir, "disc", params, training->adam_disc, disc);
    manifest["training"] = {{"step", training->step},
                            {"epochs_done", training->epochs_done},
                            {"adam_vae_steps", training->adam_vae.steps},
                            {"adam_disc_steps", training->adam_disc.steps},
                            {"optim_vae", vae},
                            {"optim_disc", disc},
                            {"config", training->config}};
  }
  std::ofstream out(dir / "manifest.json");
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
}

Checkpoint read_checkpoint(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw IoError("no checkpoint manifest in " + dir.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("checkpoint manifest: " + std::string(e.what()));
  }
  Checkpoint ck;
  ck.params = model::zero_params(spec_from_json(manifest.at("spec")));
  ck.params.seed = manifest.value("seed", std::uint64_t{0});
  const auto& tensors = manifest.at("tensors");
  if (tensors.size() != ck.params.tensors.size()) throw DataError("checkpoint: tensor count does not match spec");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto& t = ck.params.tensors[i];
    const auto& entry = tensors[i];
    if (entry.at("name").get<std::string>() != t.name) throw DataError("checkpoint: unexpected tensor " + t.name);
    if (entry.at("rows").get<std::size_t>() != t.value.rows() || entry.at("cols").get<std::size_t>() != t.value.cols()) {
      throw DataError("checkpoint: shape mismatch for " + t.name);
    }
    t.value = read_f32(dir / entry.at("file").get<std::string>(), t.value.rows(), t.value.cols());
  }
  if (manifest.contains("training")) {
    const auto& tr = manifest["training"];
    TrainingState state;
    state.step = tr.at("step").get<std::uint64_t>();
    state.epochs_done = tr.at("epochs_done").get<std::uint64_t>();
    state.config = tr.value("config", json::object());
    state.adam_vae = read_moments(dir, ck.params, model::Group::vae, tr.at("optim_vae"), tr.at("adam_vae_steps"));
    state.adam_disc =
        read_moments(dir, ck.params, model::Group::discriminator, tr.at("optim_disc"), tr.at("adam_disc_steps"));
    ck.training = std::move(state);
  }
  return ck;
}

}  // namespace modis
