#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "lplab/arm/arm_world.hpp"
#include "lplab/genmod/generative_model.hpp"
#include "lplab/metrics/mmd.hpp"

namespace lplab::metrics {

struct DprConfig {
  int interventions = 5;  // D
  double half_range = 1.5;  // a
  int samples = 200;  // n
  int replicates = 10;  // p

  void validate() const {
    if (interventions < 2) throw InvalidArgument("dpr: at least 2 interventions required");
    if (samples < 2) throw InvalidArgument("dpr: at least 2 samples per set required");
    if (!(half_range > 0.0)) throw InvalidArgument("dpr: half range must be positive");
    if (replicates < 1) throw InvalidArgument("dpr: at least 1 replicate required");
  }

  /// I_d = -a + 2a(d-1)/(D-1), d = 1..D.
  [[nodiscard]] double intervention(int d) const {
    return -half_range + 2.0 * half_range * static_cast<double>(d - 1) / static_cast<double>(interventions - 1);
  }
};

/// Half range used for each prior: 1.5 for N(0, I) and 1.0 for U(-1, 1).
inline double default_half_range(genmod::Prior prior) { return prior == genmod::Prior::standard_normal ? 1.5 : 1.0; }

struct DprDimension {
  int latent = 0;
  std::optional<int> component;  // c_g(l); empty when no test was significant
  double effect = 0.0;  // d_g(l)
  int significant_count = 0;  // significant (intervention, replicate, component) tests
  bool selected = false;
};

struct DprReport {
  double dip = 0.0;
  double dir = 0.0;
  int state_dim = arm::kStateDim;
  std::vector<DprDimension> table;
};

/// End states of decoded latents, one row per latent.
template <genmod::LatentGenerator G, class Exe>
Matrix outcomes(const G& model, Exe&& exe, const Matrix& latents) {
  const auto trajectories = model.decode_batch(latents);
  Matrix s(static_cast<Eigen::Index>(trajectories.size()), arm::kStateDim);
  for (std::size_t i = 0; i < trajectories.size(); ++i)
    s.row(static_cast<Eigen::Index>(i)) = exe(trajectories[i]).to_vector().transpose();
  return s;
}

/// Disentangling precision and recall.
///   Phase 1: intervened sets S_g(l, d) of n decoded-and-executed prior samples with alpha_l = I_d.
///   Phase 2: per replicate, n training end states drawn without replacement form S_r; each
///            component j is tested with mmd2 > c_eta. c_g(l) maximizes the average MMD over
///            the significant (d, replicate) pairs; d_g(l) is that average.
///   Phase 3: the min(N_s, N_alpha) largest d_g among dimensions with a significant test.
template <genmod::LatentGenerator G, class Exe>
DprReport dpr(const G& model, Exe&& exe, const Matrix& training_end_states, const MmdConfig& mmd_cfg,
              const DprConfig& dpr_cfg, Rng& rng) {
  mmd_cfg.validate();
  dpr_cfg.validate();
  const int ns = static_cast<int>(training_end_states.cols());
  if (ns < 1) throw DimensionError("dpr: end states have no components");
  if (training_end_states.rows() < dpr_cfg.samples) throw InvalidArgument("dpr: fewer training end states than n");
  const int latent_dim = model.latent_dim();
  const int n = dpr_cfg.samples;

  std::vector<std::vector<Matrix>> generated(static_cast<std::size_t>(latent_dim));
  for (int l = 0; l < latent_dim; ++l) {
    for (int d = 1; d <= dpr_cfg.interventions; ++d) {
      Rng phase1 = rng.fork("phase1").fork(static_cast<std::uint64_t>(l)).fork(static_cast<std::uint64_t>(d));
      Matrix z = model.sample_prior(static_cast<std::size_t>(n), phase1);
      z.col(l).setConstant(dpr_cfg.intervention(d));
      generated[static_cast<std::size_t>(l)].push_back(outcomes(model, exe, z));
    }
  }

  std::vector<std::vector<double>> sums(static_cast<std::size_t>(latent_dim), std::vector<double>(static_cast<std::size_t>(ns), 0.0));
  std::vector<std::vector<int>> counts(static_cast<std::size_t>(latent_dim), std::vector<int>(static_cast<std::size_t>(ns), 0));
  // Canonical (lexicographic) row order makes the result independent of the input order.
  std::vector<Eigen::Index> canonical(static_cast<std::size_t>(training_end_states.rows()));
  std::iota(canonical.begin(), canonical.end(), Eigen::Index{0});
  std::stable_sort(canonical.begin(), canonical.end(), [&](Eigen::Index a, Eigen::Index b) {
    for (int j = 0; j < ns; ++j) {
      if (training_end_states(a, j) != training_end_states(b, j)) return training_end_states(a, j) < training_end_states(b, j);
    }
    return false;
  });
  std::vector<Eigen::Index> pool;
  for (int rep = 0; rep < dpr_cfg.replicates; ++rep) {
    Rng rep_rng = rng.fork("replicate").fork(static_cast<std::uint64_t>(rep));
    pool = canonical;
    rep_rng.shuffle(pool.begin(), pool.end());
    Matrix s_r(n, ns);
    for (int i = 0; i < n; ++i) s_r.row(i) = training_end_states.row(pool[static_cast<std::size_t>(i)]);
    for (int l = 0; l < latent_dim; ++l) {
      for (int d = 1; d <= dpr_cfg.interventions; ++d) {
        const Matrix& s_g = generated[static_cast<std::size_t>(l)][static_cast<std::size_t>(d - 1)];
        for (int j = 0; j < ns; ++j) {
          Rng perm = rep_rng.fork(static_cast<std::uint64_t>(l)).fork(static_cast<std::uint64_t>(d)).fork(static_cast<std::uint64_t>(j));
          const Matrix gj = s_g.col(j);
          const Matrix rj = s_r.col(j);
          const auto test = mmd_test(gj, rj, mmd_cfg, perm);
          if (test.significant()) {
            sums[static_cast<std::size_t>(l)][static_cast<std::size_t>(j)] += test.statistic;
            ++counts[static_cast<std::size_t>(l)][static_cast<std::size_t>(j)];
          }
        }
      }
    }
  }

  DprReport report;
  report.state_dim = ns;
  for (int l = 0; l < latent_dim; ++l) {
    DprDimension row;
    row.latent = l;
    for (int j = 0; j < ns; ++j) {
      const int c = counts[static_cast<std::size_t>(l)][static_cast<std::size_t>(j)];
      row.significant_count += c;
      if (c == 0) continue;
      const double avg = sums[static_cast<std::size_t>(l)][static_cast<std::size_t>(j)] / c;
      if (!row.component || avg > row.effect) {
        row.component = j;
        row.effect = avg;
      }
    }
    report.table.push_back(row);
  }

  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < report.table.size(); ++i)
    if (report.table[i].significant_count > 0) candidates.push_back(i);
  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](std::size_t a, std::size_t b) { return report.table[a].effect > report.table[b].effect; });
  const std::size_t keep = std::min<std::size_t>(candidates.size(), static_cast<std::size_t>(std::min(ns, latent_dim)));
  std::vector<int> components;
  for (std::size_t k = 0; k < keep; ++k) {
    auto& row = report.table[candidates[k]];
    row.selected = true;
    report.dip += row.effect;
    components.push_back(*row.component);
  }
  std::sort(components.begin(), components.end());
  components.erase(std::unique(components.begin(), components.end()), components.end());
  report.dir = static_cast<double>(components.size()) / static_cast<double>(ns);
  return report;
}

/// dpr with the half range chosen from the model's prior.
template <genmod::LatentGenerator G, class Exe>
DprReport dpr(const G& model, Exe&& exe, const Matrix& training_end_states, const MmdConfig& mmd_cfg, int interventions,
              int samples, int replicates, Rng& rng) {
  DprConfig cfg{interventions, default_half_range(model.prior()), samples, replicates};
  return dpr(model, std::forward<Exe>(exe), training_end_states, mmd_cfg, cfg, rng);
}

}  // namespace lplab::metrics
