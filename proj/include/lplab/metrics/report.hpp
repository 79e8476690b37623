#pragma once

#include <string>

#include "json.hpp"
#include "lplab/metrics/dpr.hpp"
#include "lplab/metrics/l3.hpp"
#include "lplab/metrics/precision_recall.hpp"

namespace lplab::metrics {

/// Per-model evaluation record consumed by the correlation stage.
struct MetricReport {
  std::string model_id;
  double dip = 0.0;
  double dir = 0.0;
  double l3_mse = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  DprReport dpr;
  nlohmann::json config = nlohmann::json::object();
};

inline nlohmann::json to_json(const DprReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& d : r.table) {
    rows.push_back({{"latent", d.latent},
                    {"component", d.component ? nlohmann::json(*d.component) : nlohmann::json(nullptr)},
                    {"effect", d.effect},
                    {"significant_count", d.significant_count},
                    {"selected", d.selected}});
  }
  return {{"dip", r.dip}, {"dir", r.dir}, {"state_dim", r.state_dim}, {"table", rows}};
}

inline DprReport dpr_from_json(const nlohmann::json& j) {
  DprReport r;
  r.dip = j.at("dip").get<double>();
  r.dir = j.at("dir").get<double>();
  r.state_dim = j.at("state_dim").get<int>();
  for (const auto& row : j.at("table")) {
    DprDimension d;
    d.latent = row.at("latent").get<int>();
    if (!row.at("component").is_null()) d.component = row.at("component").get<int>();
    d.effect = row.at("effect").get<double>();
    d.significant_count = row.at("significant_count").get<int>();
    d.selected = row.at("selected").get<bool>();
    r.table.push_back(d);
  }
  return r;
}

inline nlohmann::json to_json(const MetricReport& r) {
  return {{"model_id", r.model_id}, {"dip", r.dip},       {"dir", r.dir},          {"l3_mse", r.l3_mse},
          {"precision", r.precision}, {"recall", r.recall}, {"dpr_table", to_json(r.dpr)}, {"config", r.config}};
}

inline MetricReport report_from_json(const nlohmann::json& j) {
  try {
    MetricReport r;
    r.model_id = j.at("model_id").get<std::string>();
    r.dip = j.at("dip").get<double>();
    r.dir = j.at("dir").get<double>();
    r.l3_mse = j.at("l3_mse").get<double>();
    r.precision = j.at("precision").get<double>();
    r.recall = j.at("recall").get<double>();
    r.dpr = dpr_from_json(j.at("dpr_table"));
    r.config = j.at("config");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("metric report: ") + e.what());
  }
}

struct EvalSettings {
  MmdConfig mmd;
  DprConfig dpr;  // half_range is replaced by the prior's default unless overridden
  bool override_half_range = false;
  L3Config l3;
  PrConfig pr;
};

/// DPR, L3 and precision/recall of one model. `real` holds at least pr.sample_count trajectories.
template <class Exe>
MetricReport evaluate(const genmod::GenerativeModel& model, Exe&& exe, const Matrix& training_end_states,
                      const std::vector<arm::Trajectory>& real, const EvalSettings& s, Rng& rng) {
  s.pr.validate();
  if (static_cast<int>(real.size()) < s.pr.sample_count) throw InvalidArgument("evaluate: fewer real trajectories than the PR sample count");
  MetricReport r;
  DprConfig dcfg = s.dpr;
  if (!s.override_half_range) dcfg.half_range = default_half_range(model.prior());
  Rng dpr_rng = rng.fork("dpr");
  r.dpr = dpr(model, exe, training_end_states, s.mmd, dcfg, dpr_rng);
  r.dip = r.dpr.dip;
  r.dir = r.dpr.dir;
  Rng l3_rng = rng.fork("l3");
  r.l3_mse = l3(model, exe, s.l3, l3_rng).mean_mse;
  Rng pr_rng = rng.fork("pr");
  const auto generated = model.decode_batch(model.sample_prior(static_cast<std::size_t>(s.pr.sample_count), pr_rng));
  const std::vector<arm::Trajectory> real_subset(real.begin(), real.begin() + s.pr.sample_count);
  const auto pr = precision_recall(real_subset, generated, model.normalization(), s.pr.k);
  r.precision = pr.precision;
  r.recall = pr.recall;
  return r;
}

}  // namespace lplab::metrics
