#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "lplab/arm/arm_world.hpp"
#include "lplab/arm/dataset.hpp"
#include "lplab/core/csv.hpp"
#include "lplab/core/rng.hpp"
#include "lplab/genmod/generative_model.hpp"
#include "lplab/metrics/report.hpp"
#include "lplab/policy/em_policy.hpp"

namespace lplab::lab {

class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

struct ModelSpec {
  std::string id;
  genmod::ModelKind kind = genmod::ModelKind::vae;
  int latent_dim = 2;
  double kl_threshold = 2.5;  // vae only
  double lambda = 1.5;  // infogan only
  int epochs = 0;
};

struct TrainingSettings {
  int width_divisor = 4;
  int vae_batch_size = 128;
  double vae_learning_rate = 1e-4;
  double vae_beta_step = 2e-4;
  int gan_batch_size = 128;
  double gan_learning_rate = 2e-4;
};

struct ExperimentConfig {
  std::uint64_t master_seed = 1;
  std::filesystem::path workdir = "work";
  arm::ArmConfig arm;
  std::size_t dataset_count = 1000;
  arm::DatasetOptions dataset;
  TrainingSettings training;
  std::vector<ModelSpec> models;
  metrics::EvalSettings eval;
  policy::EmConfig em;
  arm::RewardParams reward;

  [[nodiscard]] const ModelSpec& model(const std::string& id) const {
    for (const auto& m : models)
      if (m.id == id) return m;
    throw ConfigError("no model with id '" + id + "' in the config");
  }

  /// One `key = value` line per setting in a fixed order; independent of file layout and comments.
  [[nodiscard]] std::string canonical() const;

  /// FNV-1a of canonical(), as 16 hex digits.
  [[nodiscard]] std::string hash() const {
    std::ostringstream s;
    s << std::hex;
    s.width(16);
    s.fill('0');
    s << fnv1a(canonical());
    return s.str();
  }

  void validate() const;
};

inline std::string vae_id(int latent_dim, double threshold) {
  return "vae-n" + std::to_string(latent_dim) + "-kl" + csv::format(threshold);
}

inline std::string gan_id(int latent_dim, double lambda) {
  return "gan-n" + std::to_string(latent_dim) + "-lam" + csv::format(lambda);
}

namespace detail {

using boost::property_tree::ptree;

/// Reads typed values from one INI section and remembers which keys were consumed.
class Section {
 public:
  Section(const ptree* node, std::string name) : node_(node), name_(std::move(name)) {}

  template <class T>
  void read(const std::string& key, T& out) {
    if (!node_) return;
    const auto child = node_->get_child_optional(key);
    if (!child) return;
    used_.insert(key);
    out = parse<T>(key, child->data());
  }

  template <class T>
  void read_list(const std::string& key, std::vector<T>& out) {
    if (!node_) return;
    const auto child = node_->get_child_optional(key);
    if (!child) return;
    used_.insert(key);
    out.clear();
    std::stringstream ss(child->data());
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse<T>(key, trim(item)));
  }

  void check_unused() const {
    if (!node_) return;
    for (const auto& [key, value] : *node_)
      if (!used_.count(key)) throw ConfigError("unknown key '" + key + "' in section [" + name_ + "]");
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  }

  template <class T>
  T parse(const std::string& key, const std::string& raw) const {
    const std::string text = trim(raw);
    std::istringstream in(text);
    T v{};
    if constexpr (std::is_same_v<T, std::string>) {
      v = text;
    } else if constexpr (std::is_same_v<T, bool>) {
      if (text == "true" || text == "1") return true;
      if (text == "false" || text == "0") return false;
      throw ConfigError("[" + name_ + "] " + key + ": expected true/false, got '" + text + "'");
    } else {
      in >> v;
      if (!in || !(in >> std::ws).eof()) throw ConfigError("[" + name_ + "] " + key + ": cannot parse '" + text + "'");
    }
    return v;
  }

  const ptree* node_;
  std::string name_;
  std::set<std::string> used_;
};

inline void read_triple(Section& s, const std::string& key, std::array<double, 3>& out) {
  std::vector<double> v(out.begin(), out.end());
  s.read_list(key, v);
  if (v.size() != 3) throw ConfigError(key + ": expected three comma-separated values");
  std::copy(v.begin(), v.end(), out.begin());
}

}  // namespace detail

/// Parses an INI experiment file. A relative workdir resolves against the file's
/// directory; LPLB_WORKDIR, when set, replaces it.
inline ExperimentConfig parse_config(std::istream& in, const std::filesystem::path& base_dir = ".") {
  using detail::ptree;
  ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  ExperimentConfig c;
  std::map<std::string, detail::Section> sections;
  auto section = [&](const std::string& name) -> detail::Section& {
    auto it = sections.find(name);
    if (it == sections.end()) {
      // Direct lookup: section names may contain the path separator.
      const auto found = tree.find(name);
      const ptree* node = found == tree.not_found() ? nullptr : &found->second;
      it = sections.emplace(name, detail::Section(node, name)).first;
    }
    return it->second;
  };

  auto& exp = section("experiment");
  exp.read("master_seed", c.master_seed);
  std::string workdir = c.workdir.string();
  exp.read("workdir", workdir);
  c.workdir = workdir;

  auto& a = section("arm");
  detail::read_triple(a, "link_lengths", c.arm.link_lengths);
  detail::read_triple(a, "home_angles", c.arm.home_angles);
  a.read("dt", c.arm.dt);
  a.read("steps", c.arm.T);
  a.read("joint_velocity_limit", c.arm.joint_velocity_limit);
  a.read("radius_min", c.arm.workspace.radius_min);
  a.read("radius_max", c.arm.workspace.radius_max);
  a.read("angle_center", c.arm.workspace.angle_center);
  a.read("angle_span", c.arm.workspace.angle_span);
  a.read("phi_center", c.arm.workspace.phi_center);
  a.read("phi_span", c.arm.workspace.phi_span);

  auto& d = section("dataset");
  d.read("count", c.dataset_count);
  d.read("duration_min", c.dataset.duration_min);
  d.read("duration_max", c.dataset.duration_max);
  d.read("max_attempts", c.dataset.max_attempts);

  auto& t = section("training");
  t.read("width_divisor", c.training.width_divisor);
  t.read("vae_batch_size", c.training.vae_batch_size);
  t.read("vae_learning_rate", c.training.vae_learning_rate);
  t.read("vae_beta_step", c.training.vae_beta_step);
  t.read("gan_batch_size", c.training.gan_batch_size);
  t.read("gan_learning_rate", c.training.gan_learning_rate);

  auto& sw = section("sweep");
  std::vector<int> vae_dims, gan_dims;
  std::vector<double> thresholds, lambdas;
  int vae_epochs = 2000, gan_epochs = 400;
  sw.read_list("vae_latent_dims", vae_dims);
  sw.read_list("vae_kl_thresholds", thresholds);
  sw.read("vae_epochs", vae_epochs);
  sw.read_list("gan_latent_dims", gan_dims);
  sw.read_list("gan_lambdas", lambdas);
  sw.read("gan_epochs", gan_epochs);
  for (int n : vae_dims)
    for (double th : thresholds) c.models.push_back({vae_id(n, th), genmod::ModelKind::vae, n, th, 0.0, vae_epochs});
  for (int n : gan_dims)
    for (double lam : lambdas) c.models.push_back({gan_id(n, lam), genmod::ModelKind::infogan, n, 0.0, lam, gan_epochs});

  for (const auto& [name, node] : tree) {
    if (name.rfind("model.", 0) != 0) continue;
    detail::Section& s = section(name);
    ModelSpec m;
    m.id = name.substr(6);
    std::string kind = "vae";
    s.read("kind", kind);
    m.kind = genmod::parse_kind(kind);
    m.epochs = m.kind == genmod::ModelKind::vae ? vae_epochs : gan_epochs;
    s.read("latent_dim", m.latent_dim);
    s.read("kl_threshold", m.kl_threshold);
    s.read("lambda", m.lambda);
    s.read("epochs", m.epochs);
    c.models.push_back(m);
  }

  auto& mmd = section("mmd");
  mmd.read("gamma", c.eval.mmd.gamma);
  mmd.read("permutations", c.eval.mmd.permutations);
  mmd.read("eta", c.eval.mmd.eta);
  auto& dpr = section("dpr");
  dpr.read("interventions", c.eval.dpr.interventions);
  dpr.read("samples", c.eval.dpr.samples);
  dpr.read("replicates", c.eval.dpr.replicates);
  if (const auto found = tree.find("dpr"); found != tree.not_found() && found->second.find("half_range") != found->second.not_found()) {
    c.eval.override_half_range = true;
    dpr.read("half_range", c.eval.dpr.half_range);
  }
  auto& l3 = section("l3");
  l3.read("epsilon", c.eval.l3.epsilon);
  l3.read("anchors", c.eval.l3.anchors);
  l3.read("neighbors", c.eval.l3.neighbors);
  l3.read("train_fraction", c.eval.l3.train_fraction);
  auto& pr = section("pr");
  pr.read("k", c.eval.pr.k);
  pr.read("sample_count", c.eval.pr.sample_count);

  auto& p = section("policy");
  p.read("outer_iters", c.em.outer_iters);
  p.read("batch", c.em.batch);
  p.read("e_iters", c.em.e_iters);
  p.read("e_lr", c.em.e_lr);
  p.read("kl_coef", c.em.kl_coef);
  p.read("m_iters", c.em.m_iters);
  p.read("m_lr", c.em.m_lr);
  p.read("value_iters", c.em.value_iters);
  p.read("value_lr", c.em.value_lr);
  p.read("hidden", c.em.hidden);
  p.read("hidden_layers", c.em.hidden_layers);
  p.read("seeds", c.em.seeds);
  auto& r = section("reward");
  r.read("sigma_position", c.reward.sigma_position);
  r.read("sigma_angle", c.reward.sigma_angle);
  r.read("success_threshold", c.reward.success_threshold);

  for (const auto& [name, node] : tree) {
    if (!sections.count(name)) throw ConfigError("unknown section [" + name + "]");
    if (node.empty() && !node.data().empty()) throw ConfigError("key '" + name + "' outside any section");
  }
  for (const auto& [name, s] : sections) s.check_unused();

  if (const char* env = std::getenv("LPLB_WORKDIR"); env && *env) c.workdir = env;
  if (c.workdir.is_relative()) c.workdir = base_dir / c.workdir;
  c.workdir = c.workdir.lexically_normal();
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  return parse_config(in, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

inline void ExperimentConfig::validate() const {
  arm.validate();
  if (dataset_count < 2) throw ConfigError("[dataset] count must be at least 2");
  if (!(dataset.duration_min > 0.0 && dataset.duration_min <= dataset.duration_max))
    throw ConfigError("[dataset] durations must satisfy 0 < duration_min <= duration_max");
  if (training.width_divisor < 1 || 128 % training.width_divisor != 0)
    throw ConfigError("[training] width_divisor must divide 128");
  if (training.vae_batch_size < 2 || training.gan_batch_size < 2) throw ConfigError("[training] batch sizes must be at least 2");
  if (!(training.vae_learning_rate > 0.0 && training.gan_learning_rate > 0.0 && training.vae_beta_step > 0.0))
    throw ConfigError("[training] rates must be positive");
  std::set<std::string> ids;
  for (const auto& m : models) {
    if (m.id.empty() || m.id.find_first_of("/\\ ") != std::string::npos) throw ConfigError("invalid model id '" + m.id + "'");
    if (!ids.insert(m.id).second) throw ConfigError("duplicate model id '" + m.id + "'");
    if (m.latent_dim < 1) throw ConfigError("model '" + m.id + "': latent_dim must be positive");
    if (m.epochs < 1) throw ConfigError("model '" + m.id + "': epochs must be positive");
    if (m.kind == genmod::ModelKind::vae && !(m.kl_threshold > 0.0)) throw ConfigError("model '" + m.id + "': kl_threshold must be positive");
    if (m.kind == genmod::ModelKind::infogan && !(m.lambda >= 0.0)) throw ConfigError("model '" + m.id + "': lambda must be non-negative");
  }
  eval.mmd.validate();
  eval.dpr.validate();
  eval.l3.validate();
  eval.pr.validate();
  if (static_cast<std::size_t>(eval.dpr.samples) > dataset_count) throw ConfigError("[dpr] samples exceeds the dataset count");
  if (static_cast<std::size_t>(eval.pr.sample_count) > dataset_count) throw ConfigError("[pr] sample_count exceeds the dataset count");
  em.validate();
  if (!(reward.sigma_position > 0.0 && reward.sigma_angle > 0.0)) throw ConfigError("[reward] widths must be positive");
  if (!(reward.success_threshold > 0.0 && reward.success_threshold <= 1.0)) throw ConfigError("[reward] success_threshold must lie in (0, 1]");
}

inline std::string ExperimentConfig::canonical() const {
  std::ostringstream s;
  auto kv = [&](const std::string& k, const auto& v) {
    if constexpr (std::is_floating_point_v<std::decay_t<decltype(v)>>) {
      s << k << '=' << csv::format(v) << '\n';
    } else {
      s << k << '=' << v << '\n';
    }
  };
  kv("master_seed", master_seed);
  for (int i = 0; i < 3; ++i) kv("arm.link_length." + std::to_string(i), arm.link_lengths[static_cast<std::size_t>(i)]);
  for (int i = 0; i < 3; ++i) kv("arm.home_angle." + std::to_string(i), arm.home_angles[static_cast<std::size_t>(i)]);
  kv("arm.dt", arm.dt);
  kv("arm.steps", arm.T);
  kv("arm.joint_velocity_limit", arm.joint_velocity_limit);
  kv("arm.radius_min", arm.workspace.radius_min);
  kv("arm.radius_max", arm.workspace.radius_max);
  kv("arm.angle_center", arm.workspace.angle_center);
  kv("arm.angle_span", arm.workspace.angle_span);
  kv("arm.phi_center", arm.workspace.phi_center);
  kv("arm.phi_span", arm.workspace.phi_span);
  kv("dataset.count", dataset_count);
  kv("dataset.duration_min", dataset.duration_min);
  kv("dataset.duration_max", dataset.duration_max);
  kv("dataset.max_attempts", dataset.max_attempts);
  kv("training.width_divisor", training.width_divisor);
  kv("training.vae_batch_size", training.vae_batch_size);
  kv("training.vae_learning_rate", training.vae_learning_rate);
  kv("training.vae_beta_step", training.vae_beta_step);
  kv("training.gan_batch_size", training.gan_batch_size);
  kv("training.gan_learning_rate", training.gan_learning_rate);
  for (const auto& m : models) {
    const std::string p = "model." + m.id + ".";
    kv(p + "kind", genmod::to_string(m.kind));
    kv(p + "latent_dim", m.latent_dim);
    if (m.kind == genmod::ModelKind::vae) kv(p + "kl_threshold", m.kl_threshold);
    else kv(p + "lambda", m.lambda);
    kv(p + "epochs", m.epochs);
  }
  kv("mmd.gamma", eval.mmd.gamma);
  kv("mmd.permutations", eval.mmd.permutations);
  kv("mmd.eta", eval.mmd.eta);
  kv("dpr.interventions", eval.dpr.interventions);
  kv("dpr.samples", eval.dpr.samples);
  kv("dpr.replicates", eval.dpr.replicates);
  if (eval.override_half_range) kv("dpr.half_range", eval.dpr.half_range);
  kv("l3.epsilon", eval.l3.epsilon);
  kv("l3.anchors", eval.l3.anchors);
  kv("l3.neighbors", eval.l3.neighbors);
  kv("l3.train_fraction", eval.l3.train_fraction);
  kv("pr.k", eval.pr.k);
  kv("pr.sample_count", eval.pr.sample_count);
  kv("policy.outer_iters", em.outer_iters);
  kv("policy.batch", em.batch);
  kv("policy.e_iters", em.e_iters);
  kv("policy.e_lr", em.e_lr);
  kv("policy.kl_coef", em.kl_coef);
  kv("policy.m_iters", em.m_iters);
  kv("policy.m_lr", em.m_lr);
  kv("policy.value_iters", em.value_iters);
  kv("policy.value_lr", em.value_lr);
  kv("policy.hidden", em.hidden);
  kv("policy.hidden_layers", em.hidden_layers);
  kv("policy.seeds", em.seeds);
  kv("reward.sigma_position", reward.sigma_position);
  kv("reward.sigma_angle", reward.sigma_angle);
  kv("reward.success_threshold", reward.success_threshold);
  return s.str();
}

}  // namespace lplab::lab
