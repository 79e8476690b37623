#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "lplab/core/csv.hpp"
#include "lplab/genmod/generative_model.hpp"
#include "lplab/genmod/infogan.hpp"
#include "lplab/genmod/vae.hpp"
#include "lplab/nn/checkpoint.hpp"

namespace lplab::genmod {

using json = nlohmann::json;

/// Checkpoint plus JSON sidecar; the sidecar carries everything but the weights.
struct ModelFiles {
  std::string checkpoint;
  std::string sidecar;

  static ModelFiles at(const std::string& stem) { return {stem + ".lpck", stem + ".json"}; }
};

inline json to_json(const ChannelNormalization& n) {
  return {{"mean", std::vector<double>(n.mean.data(), n.mean.data() + n.mean.size())},
          {"stddev", std::vector<double>(n.stddev.data(), n.stddev.data() + n.stddev.size())}};
}

inline ChannelNormalization normalization_from_json(const json& j) {
  const auto mean = j.at("mean").get<std::vector<double>>();
  const auto sd = j.at("stddev").get<std::vector<double>>();
  if (mean.size() != sd.size()) throw IoError("sidecar: normalization vectors differ in length");
  ChannelNormalization n;
  n.mean = Eigen::Map<const Vector>(mean.data(), static_cast<Eigen::Index>(mean.size()));
  n.stddev = Eigen::Map<const Vector>(sd.data(), static_cast<Eigen::Index>(sd.size()));
  return n;
}

/// Sidecar fields describing the model itself; `training` is merged in verbatim.
inline json sidecar(const GenerativeModel& m, const std::string& model_id, const json& training) {
  json j = {{"model_id", model_id},
            {"kind", to_string(m.kind())},
            {"latent_dim", m.latent_dim()},
            {"prior", to_string(m.prior())},
            {"T", m.steps()},
            {"M", m.joints()},
            {"velocity_limit", m.velocity_limit()},
            {"width_divisor", m.width_divisor()},
            {"normalization", to_json(m.normalization())}};
  for (const auto& [k, v] : training.items()) j[k] = v;
  return j;
}

inline void write_json(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << j.dump(2) << '\n';
}

inline json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("'" + path + "' is not valid JSON: " + e.what());
  }
}

inline void save_model(const ModelFiles& files, const GenerativeModel& m, const std::string& model_id,
                       const json& training = json::object()) {
  nn::save_checkpoint(files.checkpoint, m.decoder());
  write_json(files.sidecar, sidecar(m, model_id, training));
}

struct LoadedModel {
  GenerativeModel model;
  json sidecar;
};

inline LoadedModel load_model(const ModelFiles& files) {
  json j = read_json(files.sidecar);
  try {
    auto decoder = nn::load_checkpoint(files.checkpoint);
    GenerativeModel m(parse_kind(j.at("kind").get<std::string>()), j.at("T").get<int>(), j.at("M").get<int>(),
                      j.at("velocity_limit").get<double>(), j.at("width_divisor").get<int>(),
                      normalization_from_json(j.at("normalization")), std::move(decoder));
    if (m.latent_dim() != j.at("latent_dim").get<int>()) throw IoError("sidecar latent_dim disagrees with checkpoint");
    return {std::move(m), std::move(j)};
  } catch (const json::exception& e) {
    throw IoError("sidecar '" + files.sidecar + "': " + e.what());
  }
}

inline void write_vae_history(const std::string& path, const std::vector<VaeEpochLog>& history) {
  csv::Writer w(path);
  w.header({"epoch", "beta", "kl", "reconstruction", "total"});
  for (const auto& h : history) w.row({static_cast<double>(h.epoch), h.beta, h.kl, h.reconstruction, h.total});
}

inline void write_infogan_history(const std::string& path, const std::vector<InfoGanEpochLog>& history) {
  csv::Writer w(path);
  w.header({"epoch", "d_loss", "g_loss", "i_loss", "m_loss", "weighted_i_loss"});
  for (const auto& h : history)
    w.row({static_cast<double>(h.epoch), h.losses.d_loss, h.losses.g_loss, h.losses.i_loss, h.losses.m_loss, h.weighted_i_loss});
}

}  // namespace lplab::genmod
