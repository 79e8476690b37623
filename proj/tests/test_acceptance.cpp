// Acceptance run: one PASS/FAIL line per criterion.
// Exit status is nonzero on an unexpected failure or an exception. Criteria listed in
// kKnownDeviations still print FAIL when they fail; the README documents why.

#include <chrono>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "gradient_checks.hpp"
#include "lplab/analysis/pearson.hpp"
#include "lplab/arm/dataset.hpp"
#include "lplab/genmod/oracles.hpp"
#include "lplab/lab/pipeline.hpp"
#include "lplab/metrics/dpr.hpp"
#include "lplab/metrics/l3.hpp"
#include "lplab/metrics/mmd.hpp"
#include "lplab/metrics/precision_recall.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace {

using namespace lplab;
namespace fs = std::filesystem;
using lplab::testing::random_matrix;
using Clock = std::chrono::steady_clock;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

constexpr double kMmdTol = 1e-12;
constexpr double kMmdSeconds = 1.0;
constexpr int kFdProbes = 120;
constexpr double kFdSeconds = 30.0;
constexpr double kL3LinearMse = 1e-10;
constexpr double kAffineTol = 1e-8;
constexpr double kKlBand = 1.0;
constexpr double kVaeSeconds = 600.0;
constexpr double kRecallFloor = 0.9;
constexpr double kSuccessTarget = 0.8;
constexpr int kSeedsNeeded = 2;
constexpr double kPolicySeconds = 900.0;
constexpr double kSignificance = 0.05;
constexpr int kNullTrials = 200;
constexpr double kNullRejectionCeiling = 0.15;
constexpr double kPearsonTol = 0.02;

const std::set<int> kKnownDeviations{7, 8, 10};

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(4) << v;
  return s.str();
}

auto executor(const arm::ArmConfig& cfg) {
  return [cfg](const arm::Trajectory& t) { return arm::execute(t, cfg); };
}

Outcome mmd_oracle() {
  Rng rng(101);
  double worst = 0.0, spent = 0.0;
  for (int t = 0; t < 50; ++t) {
    const auto n = static_cast<Eigen::Index>(2 + rng.index(99));
    const auto m = static_cast<Eigen::Index>(2 + rng.index(99));
    const auto d = static_cast<Eigen::Index>(1 + rng.index(6));
    const Matrix x = random_matrix(n, d, rng, 0.3);
    const Matrix y = random_matrix(m, d, rng, 0.3);
    const auto start = Clock::now();
    const double fast = metrics::mmd2_unbiased(x, y, 15.0);
    spent += seconds_since(start);
    worst = std::max(worst, std::abs(fast - lplab::testing::naive_mmd2(x, y, 15.0)));
  }
  return {worst <= kMmdTol && spent < kMmdSeconds, "max |diff| " + fmt(worst) + ", " + fmt(spent) + " s"};
}

Matrix flatten(const std::vector<arm::Trajectory>& set) {
  Matrix m(static_cast<Eigen::Index>(set.size()), set.front().velocities.size());
  for (std::size_t i = 0; i < set.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = set[i].flatten();
  return m;
}

Outcome precision_recall_oracle() {
  Rng rng(102);
  const auto ds = arm::generate_dataset(4000, arm::ArmConfig{}, rng);
  std::vector<arm::Trajectory> pool;
  for (const auto& r : ds.records) pool.push_back(r.trajectory);
  const Matrix all = flatten(pool);
  int exact = 0;
  for (int t = 0; t < 20; ++t) {
    const Matrix real = all.middleRows(t * 200, 200);
    Matrix gen = all.middleRows(((t + 7) % 20) * 200, 200);
    gen += random_matrix(200, gen.cols(), rng, 0.05 * (t % 5));
    const auto pr = metrics::precision_recall(real, gen, 3);
    const auto [p, r] = lplab::testing::brute_force_precision_recall(real, gen, 3);
    exact += (pr.precision == p && pr.recall == r) ? 1 : 0;
  }
  const Matrix base = all.topRows(200);
  const auto same = metrics::precision_recall(base, base, 3);
  const auto far = metrics::precision_recall(base, (base.array() + 1e3).matrix(), 3);
  const bool ok = exact == 20 && same.precision == 1.0 && same.recall == 1.0 && far.precision == 0.0 && far.recall == 0.0;
  return {ok, std::to_string(exact) + "/20 exact, identical (" + fmt(same.precision) + "," + fmt(same.recall) + "), far (" +
                  fmt(far.precision) + "," + fmt(far.recall) + ")"};
}

Outcome gradients() {
  const auto start = Clock::now();
  const auto reports = lplab::testing::model_gradient_checks(kFdProbes, 103);
  const double spent = seconds_since(start);
  bool ok = spent < kFdSeconds;
  std::string worst_name;
  double worst = 0.0;
  int fewest = kFdProbes;
  for (const auto& [name, r] : reports) {
    ok = ok && r.worst < lplab::testing::kFdRelTol && r.probes >= 100;
    fewest = std::min(fewest, r.probes);
    if (r.worst >= worst) {
      worst = r.worst;
      worst_name = name;
    }
  }
  return {ok, std::to_string(reports.size()) + " networks, >= " + std::to_string(fewest) + " probes, worst rel " + fmt(worst) + " (" +
                  worst_name + "), " + fmt(spent) + " s"};
}

/// Rows of a CSV keyed by their first cell.
std::map<std::string, std::vector<std::string>> keyed(const fs::path& p) {
  std::map<std::string, std::vector<std::string>> out;
  const auto rows = csv::read(p.string());
  for (std::size_t i = 1; i < rows.size(); ++i) out[rows[i].at(0)] = rows[i];
  return out;
}

struct Zoo {
  lab::ExperimentConfig cfg;
  std::map<std::string, metrics::MetricReport> reports;
  std::map<std::string, double> stage_seconds;

  [[nodiscard]] std::vector<const lab::ModelSpec*> vaes() const {
    std::vector<const lab::ModelSpec*> out;
    for (const auto& m : cfg.models)
      if (m.kind == genmod::ModelKind::vae) out.push_back(&m);
    return out;
  }
  [[nodiscard]] fs::path at(const std::string& rel) const { return cfg.workdir / rel; }
};

Zoo run_zoo(const fs::path& workdir, bool reuse) {
  Zoo z;
  z.cfg = lab::load_config(fs::path(LPLAB_SOURCE_DIR) / "configs" / "zoo.ini");
  z.cfg.workdir = workdir;
  if (!reuse) fs::remove_all(workdir);
  lab::Context ctx(z.cfg, false);
  lab::cmd_zoo(ctx);
  for (const auto& m : z.cfg.models)
    z.reports[m.id] = metrics::report_from_json(genmod::read_json(z.at(lab::paths::report(m.id)).string()));
  const auto manifest = genmod::read_json((workdir / "manifest.json").string());
  for (const auto& [name, rec] : manifest.at("stages").items())
    z.stage_seconds[name] = rec.at("wall_seconds").get<double>();
  return z;
}

Outcome dpr_validity(const Zoo& zoo) {
  const arm::ArmConfig cfg;
  Rng rng(104);
  const auto pool = arm::generate_dataset(1000, cfg, rng).end_states();
  const auto oracle = genmod::GoalOracleGenerator::reachable_box(cfg);
  const auto good = metrics::dpr(oracle, executor(cfg), pool, metrics::MmdConfig{}, metrics::DprConfig{5, 1.0, 200, 10}, rng);

  const arm::Trajectory still = arm::Trajectory::zeros(cfg.T, cfg.M);
  const genmod::ConstantGenerator flat(3, still);
  const Matrix own = arm::execute(still, cfg).to_vector().transpose().replicate(200, 1);
  const auto none = metrics::dpr(flat, executor(cfg), own, metrics::MmdConfig{}, metrics::DprConfig{}, rng);

  std::map<int, std::pair<double, int>> by_dim;
  for (const auto* m : zoo.vaes()) {
    by_dim[m->latent_dim].first += zoo.reports.at(m->id).dir;
    by_dim[m->latent_dim].second += 1;
  }
  bool ordered = true;
  double prev = -1.0;
  std::string means;
  for (const auto& [dim, acc] : by_dim) {
    const double mean = acc.first / acc.second;
    ordered = ordered && mean >= prev;
    prev = mean;
    means += " n" + std::to_string(dim) + "=" + fmt(mean);
  }
  const bool ok = good.dir == 1.0 && good.dip > 0.0 && none.dir == 0.0 && none.dip == 0.0 && ordered;
  return {ok, "oracle DiR " + fmt(good.dir) + " DiP " + fmt(good.dip) + ", constant DiR " + fmt(none.dir) + " DiP " + fmt(none.dip) +
                  ", VAE mean DiR" + means};
}

/// decode(alpha) = reshape(W alpha).
class LinearGenerator {
 public:
  LinearGenerator(Matrix w, int T, int M) : w_(std::move(w)), T_(T), M_(M) {}
  [[nodiscard]] int latent_dim() const { return static_cast<int>(w_.cols()); }
  [[nodiscard]] genmod::Prior prior() const { return genmod::Prior::standard_normal; }
  [[nodiscard]] Matrix sample_prior(std::size_t n, Rng& rng) const { return genmod::sample_latents(prior(), latent_dim(), n, rng); }
  [[nodiscard]] std::vector<arm::Trajectory> decode_batch(const Matrix& z) const {
    std::vector<arm::Trajectory> out;
    for (Eigen::Index i = 0; i < z.rows(); ++i) out.push_back(arm::Trajectory::unflatten((w_ * z.row(i).transpose()).transpose(), T_, M_));
    return out;
  }

 private:
  Matrix w_;
  int T_, M_;
};

Outcome l3_sanity() {
  Rng rng(105);
  const LinearGenerator g(random_matrix(12, 3, rng), 4, 3);
  const Matrix probe = random_matrix(3, 12, rng);
  auto exe = [&](const arm::Trajectory& t) {
    const Vector s = probe * t.flatten().transpose();
    return arm::EndState{s(0), s(1), s(2)};
  };
  const double linear = metrics::l3(g, exe, metrics::L3Config{}, rng).mean_mse;

  double worst = 0.0;
  for (int anchor = 0; anchor < 20; ++anchor) {
    const Vector c = random_matrix(3, 1, rng).col(0);
    const Matrix z = metrics::sample_ball(c, 0.2, 500, rng);
    Matrix s(500, 3);
    s.col(0) = z.rowwise().squaredNorm();
    s.col(1) = z.col(0).array().sin();
    s.col(2) = z.col(1).cwiseProduct(z.col(2));
    const auto fit = metrics::fit_affine(z, s);
    const Matrix oracle = lplab::testing::normal_equation_solve(z, s);
    worst = std::max(worst, (metrics::apply_affine(fit, z) - (Matrix(z.rows(), 4) << z, Vector::Ones(500)).finished() * oracle)
                                .cwiseAbs()
                                .maxCoeff());
  }
  return {linear < kL3LinearMse && worst < kAffineTol, "linear MSE " + fmt(linear) + ", affine vs normal equations " + fmt(worst)};
}

Outcome vae_annealing(const Zoo& zoo) {
  std::map<int, std::vector<std::pair<double, double>>> beta_by_dim;  // threshold, final beta
  bool ok = true;
  double worst_gap = 0.0, slowest = 0.0;
  for (const auto* m : zoo.vaes()) {
    const auto sidecar = genmod::read_json(zoo.at(lab::paths::model_stem(m->id) + ".json").string());
    const auto rows = csv::read(zoo.at(lab::paths::loss_history(m->id)).string());
    const double kl = lab::parse_double(rows.back().at(2), m->id);
    const double gap = std::abs(kl - m->kl_threshold);
    worst_gap = std::max(worst_gap, gap);
    ok = ok && gap <= kKlBand;
    beta_by_dim[m->latent_dim].emplace_back(m->kl_threshold, sidecar.at("beta").get<double>());
    const double secs = zoo.stage_seconds.at(lab::stages::train_gen(m->id));
    slowest = std::max(slowest, secs);
    ok = ok && secs < kVaeSeconds;
  }
  for (auto& [dim, pairs] : beta_by_dim) {
    std::sort(pairs.begin(), pairs.end());
    for (std::size_t i = 1; i < pairs.size(); ++i) ok = ok && pairs[i].second < pairs[i - 1].second;
  }
  return {ok, "worst |KL - threshold| " + fmt(worst_gap) + ", beta strictly decreasing per latent dim, slowest run " + fmt(slowest) + " s"};
}

Outcome em_competence(const Zoo& zoo) {
  const lab::ModelSpec* best = nullptr;
  for (const auto* m : zoo.vaes())
    if (!best || zoo.reports.at(m->id).recall > zoo.reports.at(best->id).recall) best = m;
  const double recall = zoo.reports.at(best->id).recall;
  int seeds_ok = 0;
  double slowest = 0.0;
  std::string peaks;
  for (int s = 0; s < zoo.cfg.em.seeds; ++s) {
    const auto rows = csv::read(zoo.at(lab::paths::curve(best->id, s)).string());
    double peak = 0.0;
    for (std::size_t i = 1; i < rows.size(); ++i) peak = std::max(peak, lab::parse_double(rows[i].at(3), best->id));
    seeds_ok += peak >= kSuccessTarget ? 1 : 0;
    peaks += (s ? "," : "") + fmt(peak);
    slowest = std::max(slowest, zoo.stage_seconds.at(lab::stages::train_policy(best->id, s)));
  }
  const bool ok = recall >= kRecallFloor && seeds_ok >= kSeedsNeeded && slowest < kPolicySeconds;
  return {ok, best->id + " recall " + fmt(recall) + " (needs >= " + fmt(kRecallFloor) + "), peak success per seed [" + peaks +
                  "], slowest run " + fmt(slowest) + " s"};
}

Outcome headline_correlation(const Zoo& zoo) {
  const auto vae = keyed(zoo.at(lab::paths::table("vae")));
  const auto combined = keyed(zoo.at(lab::paths::table("combined")));
  const double r_vae = std::stod(vae.at("recall").at(1)), p_vae = std::stod(vae.at("recall").at(2));
  const double r_all = std::stod(combined.at("recall").at(1)), p_all = std::stod(combined.at("recall").at(2));
  std::string first;
  for (const auto& [name, row] : combined)
    if (row.at(4) == "1") first = name;
  const bool ok = r_vae > 0.0 && p_vae < kSignificance && r_all > 0.0 && p_all < kSignificance && first == "recall";
  return {ok, "VAE R " + fmt(r_vae) + " p " + fmt(p_vae) + ", combined R " + fmt(r_all) + " p " + fmt(p_all) + ", ARD first: " + first};
}

Outcome determinism(const Zoo& a, const Zoo& b) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(a.cfg.workdir))
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(fs::relative(e.path(), a.cfg.workdir));
  int same = 0;
  std::string first_diff;
  for (const auto& rel : files) {
    const bool eq = fs::exists(b.cfg.workdir / rel) &&
                    lplab::testing::read_file(a.cfg.workdir / rel) == lplab::testing::read_file(b.cfg.workdir / rel);
    same += eq ? 1 : 0;
    if (!eq && first_diff.empty()) first_diff = rel.string();
  }
  const bool ok = !files.empty() && same == static_cast<int>(files.size());
  return {ok, std::to_string(same) + "/" + std::to_string(files.size()) + " CSVs identical" +
                  (first_diff.empty() ? "" : ", first difference " + first_diff)};
}

Outcome calibration() {
  Rng rng(106);
  int rejections = 0;
  for (int t = 0; t < kNullTrials; ++t) {
    const Matrix x = random_matrix(50, 3, rng, 0.3);
    const Matrix y = random_matrix(50, 3, rng, 0.3);
    rejections += metrics::mmd_test(x, y, {15.0, 100, 0.05}, rng).significant() ? 1 : 0;
  }
  const double rate = static_cast<double>(rejections) / kNullTrials;
  double worst = 0.0;
  int within = 0;
  for (int t = 0; t < 50; ++t) {
    const Vector x = random_matrix(9, 1, rng).col(0);
    const Vector y = 0.5 * x + random_matrix(9, 1, rng).col(0);
    const auto c = analysis::pearson_r(x, y);
    const double gap = std::abs(c.p - lplab::testing::t_test_p(c.r, 9));
    worst = std::max(worst, gap);
    within += gap <= kPearsonTol ? 1 : 0;
  }
  const bool null_ok = rate <= kNullRejectionCeiling;
  const bool pearson_ok = worst <= kPearsonTol;
  return {null_ok && pearson_ok, "null rejection rate " + fmt(rate) + " at eta 0.05 (" + (null_ok ? "ok" : "too high") + "), " +
                                     std::to_string(within) + "/50 permutation p within " + fmt(kPearsonTol) + " of t at n = 9, max gap " +
                                     fmt(worst)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string workdir;
  bool skip_zoo = false;
  bool reuse = false;
  app.add_option("--workdir", workdir, "Scratch directory for the two zoo runs")->required();
  app.add_flag("--reuse", reuse, "Keep existing run directories; completed stages are not rerun");
  app.add_flag("--skip-zoo", skip_zoo, "Check only the criteria that need no zoo run; the rest fail");
  CLI11_PARSE(app, argc, argv);

  int unexpected = 0;
  auto report = [&](int id, const std::string& name, auto&& check) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const bool known = kKnownDeviations.count(id) > 0;
    if (!o.pass && !known) ++unexpected;
    std::cout << "criterion " << std::setw(2) << id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << name << "  " << o.detail
              << (!o.pass && known ? "  [known deviation, see README]" : "") << std::endl;
  };

  std::optional<Zoo> first, second;
  if (!skip_zoo) {
    try {
      std::cout << "running zoo (1 of 2)" << std::endl;
      first = run_zoo(fs::path(workdir) / "run1", reuse);
      std::cout << "running zoo (2 of 2)" << std::endl;
      second = run_zoo(fs::path(workdir) / "run2", reuse);
    } catch (const std::exception& e) {
      std::cout << "zoo failed: " << e.what() << std::endl;
    }
  }
  auto needs = [&](auto f) {
    return [&, f] {
      if (!first || !second) throw Error("zoo run unavailable");
      return f();
    };
  };

  report(1, "mmd oracle", mmd_oracle);
  report(2, "precision/recall oracle", precision_recall_oracle);
  report(3, "finite-difference gradients", gradients);
  report(4, "dpr construction validity", needs([&] { return dpr_validity(*first); }));
  report(5, "l3 sanity", l3_sanity);
  report(6, "vae annealing", needs([&] { return vae_annealing(*first); }));
  report(7, "em training competence", needs([&] { return em_competence(*first); }));
  report(8, "headline correlation", needs([&] { return headline_correlation(*first); }));
  report(9, "determinism", needs([&] { return determinism(*first, *second); }));
  report(10, "statistical calibration", calibration);

  std::cout << (unexpected ? "acceptance: unexpected failures: " + std::to_string(unexpected) : std::string("acceptance: no unexpected failures"))
            << std::endl;
  return unexpected ? 1 : 0;
}
