#pragma once

#include <atomic>
#include <charconv>
#include <exception>
#include <filesystem>
#include <string>
#include <thread>
#include <vector>

#include "lplab/analysis/ranking.hpp"
#include "lplab/arm/dataset.hpp"
#include "lplab/genmod/infogan.hpp"
#include "lplab/genmod/model_io.hpp"
#include "lplab/genmod/vae.hpp"
#include "lplab/lab/config.hpp"
#include "lplab/lab/manifest.hpp"
#include "lplab/metrics/report.hpp"
#include "lplab/policy/em_policy.hpp"

namespace lplab::lab {

namespace fs = std::filesystem;
using nlohmann::json;

/// Minimum number of models with a report and every policy curve before analysis runs.
inline constexpr std::size_t kMinAnalysisModels = 6;

/// Artifact locations relative to the workdir.
namespace paths {
inline std::string dataset() { return "data/dataset.lpds"; }
inline std::string dataset_preview() { return "data/preview.csv"; }
inline std::string goal_histogram() { return "data/goal_histogram.csv"; }
inline std::string model_stem(const std::string& id) { return "models/" + id; }
inline std::string loss_history(const std::string& id) { return "models/" + id + "_losses.csv"; }
inline std::string report(const std::string& id) { return "reports/" + id + ".json"; }
inline std::string dpr_table(const std::string& id) { return "reports/" + id + "_dpr.csv"; }
inline std::string curve(const std::string& id, int seed) { return "policies/" + id + "/seed" + std::to_string(seed) + "_curve.csv"; }
inline std::string policy_stem(const std::string& id, int seed) { return "policies/" + id + "/seed" + std::to_string(seed); }
inline std::string features() { return "analysis/features.csv"; }
inline std::string table(const std::string& family) { return "analysis/table_" + family + ".csv"; }
}  // namespace paths

namespace stages {
inline std::string gen_data() { return "gen-data"; }
inline std::string train_gen(const std::string& id) { return "train-gen/" + id; }
inline std::string eval_gen(const std::string& id) { return "eval-gen/" + id; }
inline std::string train_policy(const std::string& id, int seed) { return "train-policy/" + id + "/seed" + std::to_string(seed); }
inline std::string analyze() { return "analyze"; }
}  // namespace stages

struct Context {
  ExperimentConfig cfg;
  Manifest manifest;
  bool force = false;

  Context(ExperimentConfig c, bool force_)
      : cfg(std::move(c)), manifest(cfg.workdir, cfg.hash(), force_), force(force_) {}

  [[nodiscard]] fs::path at(const std::string& rel) const { return cfg.workdir / rel; }

  /// Creates the parent directory of a workdir-relative artifact and returns its full path.
  [[nodiscard]] std::string out(const std::string& rel) const {
    const auto p = at(rel);
    fs::create_directories(p.parent_path());
    return p.string();
  }

  void require(const std::string& rel, const std::string& producer) const {
    if (!fs::exists(at(rel))) throw Error("missing '" + rel + "'; run " + producer + " first");
  }
};

/// Runs body(i) for i in [0, n) on up to `jobs` threads. The lowest-index failure is rethrown after all tasks finish.
template <class F>
void parallel_for(std::size_t n, int jobs, F&& body) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto threads = static_cast<std::size_t>(std::max(1, jobs));
  if (threads == 1 || n <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < std::min(threads, n); ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline Rng stage_rng(const ExperimentConfig& cfg, std::string_view stage) { return Rng::for_component(cfg.master_seed, stage); }

inline arm::Dataset load_checked_dataset(const Context& ctx) {
  ctx.require(paths::dataset(), "gen-data");
  auto ds = arm::load_dataset(ctx.at(paths::dataset()).string());
  if (ds.T != ctx.cfg.arm.T || ds.M != ctx.cfg.arm.M) throw Error("dataset shape does not match the [arm] config");
  return ds;
}

inline bool cmd_gen_data(Context& ctx) {
  return ctx.manifest.run(stages::gen_data(), ctx.force, [&] {
    Rng rng = stage_rng(ctx.cfg, "gen-data");
    const auto ds = arm::generate_dataset(ctx.cfg.dataset_count, ctx.cfg.arm, rng, ctx.cfg.dataset);
    arm::save_dataset(ctx.out(paths::dataset()), ds);
    arm::export_dataset_csv(ctx.out(paths::dataset_preview()), ds, 100);
    csv::Writer hist(ctx.out(paths::goal_histogram()));
    hist.header({"radius_bin", "angle_bin", "count"});
    const auto grid = arm::occupancy_grid(ds, ctx.cfg.arm, 10);
    for (std::size_t r = 0; r < grid.size(); ++r)
      for (std::size_t a = 0; a < grid[r].size(); ++a)
        hist.row({static_cast<double>(r), static_cast<double>(a), static_cast<double>(grid[r][a])});
    return std::vector<std::string>{paths::dataset(), paths::dataset_preview(), paths::goal_histogram()};
  });
}

inline bool cmd_train_gen(Context& ctx, const std::string& id) {
  const auto& spec = ctx.cfg.model(id);
  return ctx.manifest.run(stages::train_gen(id), ctx.force, [&] {
    const auto ds = load_checked_dataset(ctx);
    Rng rng = stage_rng(ctx.cfg, "train-gen").fork(id);
    const auto files = genmod::ModelFiles::at(ctx.out(paths::model_stem(id)));
    const auto& t = ctx.cfg.training;
    if (spec.kind == genmod::ModelKind::vae) {
      genmod::VaeConfig vc{spec.latent_dim, spec.kl_threshold, spec.epochs, t.vae_batch_size, t.vae_learning_rate, t.vae_beta_step,
                           t.width_divisor};
      const auto r = genmod::train_vae(ds, ctx.cfg.arm.joint_velocity_limit, vc, rng);
      const auto& last = r.state.history.back();
      genmod::save_model(files, r.model, id,
                         {{"kl_threshold", spec.kl_threshold},
                          {"epochs", spec.epochs},
                          {"beta", r.state.beta},
                          {"beta_frozen", r.state.beta_frozen},
                          {"final_losses", {{"kl", last.kl}, {"reconstruction", last.reconstruction}, {"total", last.total}}}});
      genmod::write_vae_history(ctx.out(paths::loss_history(id)), r.state.history);
    } else {
      genmod::InfoGanConfig gc{spec.latent_dim, spec.lambda, spec.epochs, t.gan_batch_size, t.gan_learning_rate, t.width_divisor};
      const auto r = genmod::train_infogan(ds, ctx.cfg.arm.joint_velocity_limit, gc, rng);
      const auto& last = r.state.history.back().losses;
      genmod::save_model(files, r.model, id,
                         {{"lambda", spec.lambda},
                          {"epochs", spec.epochs},
                          {"final_losses",
                           {{"d_loss", last.d_loss}, {"g_loss", last.g_loss}, {"i_loss", last.i_loss}, {"m_loss", last.m_loss}}}});
      genmod::write_infogan_history(ctx.out(paths::loss_history(id)), r.state.history);
    }
    const std::string stem = paths::model_stem(id);
    return std::vector<std::string>{stem + ".lpck", stem + ".json", paths::loss_history(id)};
  });
}

inline genmod::LoadedModel load_trained(const Context& ctx, const std::string& id) {
  ctx.require(paths::model_stem(id) + ".json", "train-gen --model " + id);
  auto loaded = genmod::load_model(genmod::ModelFiles::at(ctx.at(paths::model_stem(id)).string()));
  if (loaded.model.steps() != ctx.cfg.arm.T || loaded.model.joints() != ctx.cfg.arm.M)
    throw Error("model '" + id + "' does not match the [arm] config");
  return loaded;
}

inline bool cmd_eval_gen(Context& ctx, const std::string& id) {
  (void)ctx.cfg.model(id);
  return ctx.manifest.run(stages::eval_gen(id), ctx.force, [&] {
    const auto ds = load_checked_dataset(ctx);
    const auto loaded = load_trained(ctx, id);
    std::vector<arm::Trajectory> real;
    real.reserve(ds.size());
    for (const auto& r : ds.records) real.push_back(r.trajectory);
    const auto& arm_cfg = ctx.cfg.arm;
    auto exe = [&arm_cfg](const arm::Trajectory& t) { return arm::execute(t, arm_cfg); };
    Rng rng = stage_rng(ctx.cfg, "eval-gen").fork(id);
    auto report = metrics::evaluate(loaded.model, exe, ds.end_states(), real, ctx.cfg.eval, rng);
    report.model_id = id;
    const auto& e = ctx.cfg.eval;
    report.config = {{"kind", loaded.sidecar.at("kind")},
                     {"latent_dim", loaded.model.latent_dim()},
                     {"mmd", {{"gamma", e.mmd.gamma}, {"permutations", e.mmd.permutations}, {"eta", e.mmd.eta}}},
                     {"dpr",
                      {{"interventions", e.dpr.interventions},
                       {"half_range", e.override_half_range ? e.dpr.half_range : metrics::default_half_range(loaded.model.prior())},
                       {"samples", e.dpr.samples},
                       {"replicates", e.dpr.replicates}}},
                     {"l3", {{"epsilon", e.l3.epsilon}, {"anchors", e.l3.anchors}, {"neighbors", e.l3.neighbors}, {"train_fraction", e.l3.train_fraction}}},
                     {"pr", {{"k", e.pr.k}, {"sample_count", e.pr.sample_count}}}};
    genmod::write_json(ctx.out(paths::report(id)), metrics::to_json(report));
    csv::Writer w(ctx.out(paths::dpr_table(id)));
    w.header({"latent", "component", "effect", "significant_count", "selected"});
    for (const auto& d : report.dpr.table)
      w.row(std::vector<std::string>{std::to_string(d.latent), d.component ? std::to_string(*d.component) : "",
                                     csv::format(d.effect), std::to_string(d.significant_count), d.selected ? "1" : "0"});
    return std::vector<std::string>{paths::report(id), paths::dpr_table(id)};
  });
}

inline json em_echo(const policy::EmConfig& em, const arm::RewardParams& rp) {
  return {{"outer_iters", em.outer_iters}, {"batch", em.batch},         {"e_iters", em.e_iters},
          {"e_lr", em.e_lr},               {"kl_coef", em.kl_coef},     {"m_iters", em.m_iters},
          {"m_lr", em.m_lr},               {"value_iters", em.value_iters}, {"value_lr", em.value_lr},
          {"hidden", em.hidden},           {"hidden_layers", em.hidden_layers}, {"seeds", em.seeds},
          {"reward", {{"sigma_position", rp.sigma_position}, {"sigma_angle", rp.sigma_angle}, {"success_threshold", rp.success_threshold}}}};
}

inline void write_curve(const std::string& path, const policy::TrainingCurve& curve) {
  csv::Writer w(path);
  w.header({"iteration", "mean_reward", "std_reward", "success_rate", "mean_kl"});
  for (const auto& p : curve.points) w.row({static_cast<double>(p.iteration), p.mean_reward, p.std_reward, p.success_rate, p.mean_kl});
}

inline double parse_double(const std::string& cell, const std::string& where) {
  double v = 0.0;
  const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) throw IoError(where + ": cannot parse '" + cell + "'");
  return v;
}

/// Maximum of the mean_reward column of a curve CSV.
inline double curve_label(const std::string& path) {
  const auto rows = csv::read(path);
  if (rows.size() < 2) throw IoError("'" + path + "' has no data rows");
  double best = 0.0;
  for (std::size_t i = 1; i < rows.size(); ++i) best = std::max(best, parse_double(rows[i].at(1), path));
  return best;
}

inline bool cmd_train_policy(Context& ctx, const std::string& id, int seed) {
  (void)ctx.cfg.model(id);
  if (seed < 0 || seed >= ctx.cfg.em.seeds) throw InvalidArgument("seed index must lie in [0, " + std::to_string(ctx.cfg.em.seeds) + ")");
  return ctx.manifest.run(stages::train_policy(id, seed), ctx.force, [&] {
    const auto loaded = load_trained(ctx, id);
    Rng rng = stage_rng(ctx.cfg, "train-policy").fork(id).fork(static_cast<std::uint64_t>(seed));
    const auto r = policy::train_em(loaded.model, ctx.cfg.arm, ctx.cfg.reward, ctx.cfg.em, rng);
    write_curve(ctx.out(paths::curve(id, seed)), r.curve);
    const auto stem = paths::policy_stem(id, seed);
    nn::save_checkpoint(ctx.out(stem + ".lpck"), r.policy.net);
    genmod::write_json(ctx.out(stem + ".json"),
                       {{"model_id", id}, {"seed", seed}, {"label", r.curve.label()}, {"config", em_echo(ctx.cfg.em, ctx.cfg.reward)}});
    return std::vector<std::string>{paths::curve(id, seed), stem + ".lpck", stem + ".json"};
  });
}

/// One analysed model: metric report, sidecar hyperparameters and max-reward label.
struct ModelRow {
  std::string id;
  genmod::ModelKind kind;
  metrics::MetricReport report;
  json sidecar;
  double label = 0.0;
};

inline std::vector<std::string> vae_features() { return {"dip", "dir", "l3", "precision", "recall", "latent_dim", "beta"}; }
inline std::vector<std::string> gan_features() {
  return {"dip", "dir", "l3", "precision", "recall", "latent_dim", "lambda", "g_loss", "i_loss", "m_loss"};
}
inline std::vector<std::string> shared_features() { return {"dip", "dir", "l3", "precision", "recall"}; }

inline double feature_value(const ModelRow& m, const std::string& name) {
  if (name == "dip") return m.report.dip;
  if (name == "dir") return m.report.dir;
  if (name == "l3") return m.report.l3_mse;
  if (name == "precision") return m.report.precision;
  if (name == "recall") return m.report.recall;
  if (name == "latent_dim") return m.sidecar.at("latent_dim").get<double>();
  if (name == "beta") return m.sidecar.at("beta").get<double>();
  if (name == "lambda") return m.sidecar.at("lambda").get<double>();
  return m.sidecar.at("final_losses").at(name).get<double>();
}

inline analysis::FeatureMatrix feature_matrix(const std::vector<const ModelRow*>& rows, const std::vector<std::string>& names) {
  analysis::FeatureMatrix fm;
  fm.names = names;
  fm.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(names.size()));
  fm.target.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    fm.row_ids.push_back(rows[i]->id);
    for (std::size_t j = 0; j < names.size(); ++j)
      fm.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = feature_value(*rows[i], names[j]);
    fm.target(static_cast<Eigen::Index>(i)) = rows[i]->label;
  }
  fm.validate();
  return fm;
}

struct AnalysisTable {
  std::vector<analysis::FeatureCorrelation> pearson;
  analysis::ArdResult ard;
  std::vector<std::string> ard_ranking;
};

inline AnalysisTable analyse(const analysis::FeatureMatrix& fm) {
  AnalysisTable t;
  t.pearson = analysis::correlate_features(fm);
  t.ard = analysis::ard_fit(analysis::robust_scale(fm));
  t.ard_ranking = analysis::rank_features(t.ard);
  return t;
}

inline void write_table(const std::string& path, const AnalysisTable& t) {
  csv::Writer w(path);
  w.header({"feature", "pearson_r", "p_value", "ard_precision", "ard_rank"});
  for (std::size_t j = 0; j < t.pearson.size(); ++j) {
    const auto& name = t.pearson[j].name;
    const auto rank = std::find(t.ard_ranking.begin(), t.ard_ranking.end(), name) - t.ard_ranking.begin() + 1;
    w.row(std::vector<std::string>{name, csv::format(t.pearson[j].corr.r), csv::format(t.pearson[j].corr.p),
                                   csv::format(t.ard.weight_precisions(static_cast<Eigen::Index>(j))), std::to_string(rank)});
  }
}

/// Models whose report and every seed curve exist, in config order.
inline std::vector<ModelRow> collect_rows(const Context& ctx) {
  std::vector<ModelRow> rows;
  for (const auto& spec : ctx.cfg.models) {
    if (!fs::exists(ctx.at(paths::report(spec.id)))) continue;
    bool curves = true;
    double label = 0.0;
    for (int s = 0; s < ctx.cfg.em.seeds && curves; ++s) {
      const auto p = ctx.at(paths::curve(spec.id, s));
      if (!fs::exists(p)) curves = false;
      else label = std::max(label, curve_label(p.string()));
    }
    if (!curves) continue;
    ModelRow r{spec.id, spec.kind, metrics::report_from_json(genmod::read_json(ctx.at(paths::report(spec.id)).string())),
               genmod::read_json(ctx.at(paths::model_stem(spec.id) + ".json").string()), label};
    rows.push_back(std::move(r));
  }
  return rows;
}

inline bool cmd_analyze(Context& ctx) {
  return ctx.manifest.run(stages::analyze(), ctx.force, [&] {
    const auto rows = collect_rows(ctx);
    if (rows.size() < kMinAnalysisModels)
      throw Error("analysis needs at least " + std::to_string(kMinAnalysisModels) + " models with reports and policy curves, found " +
                  std::to_string(rows.size()) + " (short by " + std::to_string(kMinAnalysisModels - rows.size()) + ")");
    std::vector<const ModelRow*> vae, gan, all;
    for (const auto& r : rows) {
      all.push_back(&r);
      (r.kind == genmod::ModelKind::vae ? vae : gan).push_back(&r);
    }
    std::vector<std::string> written{paths::features()};
    csv::Writer f(ctx.out(paths::features()));
    f.header({"model_id", "kind", "dip", "dir", "l3", "precision", "recall", "latent_dim", "beta", "lambda", "g_loss", "i_loss",
              "m_loss", "label"});
    for (const auto& r : rows) {
      std::vector<std::string> cells{r.id, genmod::to_string(r.kind)};
      for (const auto& name : {"dip", "dir", "l3", "precision", "recall", "latent_dim"}) cells.push_back(csv::format(feature_value(r, name)));
      const bool is_vae = r.kind == genmod::ModelKind::vae;
      cells.push_back(is_vae ? csv::format(feature_value(r, "beta")) : "");
      cells.push_back(is_vae ? "" : csv::format(feature_value(r, "lambda")));
      for (const auto& name : {"g_loss", "i_loss", "m_loss"}) cells.push_back(is_vae ? "" : csv::format(feature_value(r, name)));
      cells.push_back(csv::format(r.label));
      f.row(cells);
    }
    auto emit = [&](const std::string& family, const std::vector<const ModelRow*>& members, const std::vector<std::string>& names) {
      if (members.size() < 3) return;
      write_table(ctx.out(paths::table(family)), analyse(feature_matrix(members, names)));
      written.push_back(paths::table(family));
    };
    emit("vae", vae, vae_features());
    emit("gan", gan, gan_features());
    emit("combined", all, shared_features());
    return written;
  });
}

struct ZooOptions {
  int jobs = 1;
};

/// gen-data, then every model through train-gen, eval-gen and train-policy, then analyze.
inline void cmd_zoo(Context& ctx, const ZooOptions& opt = {}) {
  cmd_gen_data(ctx);
  const auto& models = ctx.cfg.models;
  parallel_for(models.size(), opt.jobs, [&](std::size_t i) { cmd_train_gen(ctx, models[i].id); });
  parallel_for(models.size(), opt.jobs, [&](std::size_t i) { cmd_eval_gen(ctx, models[i].id); });
  const auto seeds = static_cast<std::size_t>(ctx.cfg.em.seeds);
  parallel_for(models.size() * seeds, opt.jobs, [&](std::size_t k) {
    cmd_train_policy(ctx, models[k / seeds].id, static_cast<int>(k % seeds));
  });
  cmd_analyze(ctx);
}

}  // namespace lplab::lab
