// Acceptance checks. Each criterion prints one line:
//   criterion N (name): PASS|FAIL (details)
// and the exit status is non-zero if any selected criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "oracles.hpp"
#include "potrl/env.hpp"
#include "potrl/format.hpp"
#include "potrl/harness.hpp"

using namespace potrl;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double Seconds(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string Fixed(double v, int digits = 3) { return FormatFixed(v, digits); }

// 1: conservation, clamp, observation size, hybrid linearity, reward range.
Outcome PropertySuite() {
  const auto start = Clock::now();
  std::mt19937_64 rng(20240601);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_real_distribution<double> scale(0.5, 1.5);

  auto random_shape = [&] {
    RingArray s{};
    for (double& x : s) x = scale(rng);
    return PotShape().WithScales(s);
  };

  int conservation_failures = 0, range_failures = 0;
  for (int i = 0; i < 1000; ++i) {
    SimConfig cfg;
    cfg.particle_count = 20 + static_cast<int>(u(rng) * 181);
    cfg.pour.max_tilt_deg = 180.0 * u(rng);
    cfg.shake.amplitude_deg = 90.0 * u(rng);
    cfg.pour.pivot_height_fraction = u(rng);
    cfg.shake.pivot_height_fraction = u(rng);
    const PotShape shape = random_shape();
    const std::uint64_t seed = rng();
    TaskOutcome out;
    double reward;
    if (i % 2 == 0) {
      out = SimulatePour(shape, cfg, CupSpec(), seed);
      reward = RewardPour(out);
    } else {
      out = SimulateShake(shape, cfg, seed);
      reward = RewardShake(out);
    }
    if (out.n_cup + out.n_pot + out.n_spilled != out.n_total || out.n_total != cfg.particle_count ||
        out.n_cup < 0 || out.n_pot < 0 || out.n_spilled < 0) {
      ++conservation_failures;
    }
    if (!(reward >= 0.0 && reward <= 1.0)) ++range_failures;
  }

  int clamp_failures = 0, size_failures = 0;
  std::normal_distribution<double> wide(0.0, 2.0);
  for (int seq = 0; seq < 10000; ++seq) {
    PotShape shape;
    for (int step = 0; step < 20; ++step) {
      DesignAction a;
      for (double& d : a.deltas) d = wide(rng);
      shape = ApplyAction(shape, a);
      for (double s : shape.radius_scales()) {
        if (!(s >= 0.5 && s <= 1.5)) ++clamp_failures;
      }
    }
    const PointCloud cloud = BuildPointCloud(shape);
    if (cloud.points.size() != 352 || ToObservation(cloud).values.size() != 1056) ++size_failures;
  }

  double worst_linearity = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double p = u(rng), s = u(rng), w = u(rng), w2 = u(rng), a = u(rng);
    const double h = RewardHybrid(p, s, w);
    worst_linearity = std::max(worst_linearity, std::abs(h - (w * p + (1.0 - w) * s)));
    const double mixed = RewardHybrid(p, s, a * w + (1.0 - a) * w2);
    const double combined = a * h + (1.0 - a) * RewardHybrid(p, s, w2);
    worst_linearity = std::max(worst_linearity, std::abs(mixed - combined));
    if (!(h >= 0.0 && h <= 1.0)) ++range_failures;
  }

  const double elapsed = Seconds(start);
  Outcome o;
  o.pass = conservation_failures == 0 && range_failures == 0 && clamp_failures == 0 &&
           size_failures == 0 && worst_linearity <= 1e-12 && elapsed < 120.0;
  o.detail = "conservation failures " + std::to_string(conservation_failures) + "/1000, clamp " +
             std::to_string(clamp_failures) + ", sizes " + std::to_string(size_failures) +
             ", range " + std::to_string(range_failures) + ", linearity " +
             FormatDouble(worst_linearity) + ", " + Fixed(elapsed, 1) + " s";
  return o;
}

// 2: backward vs central differences on 100 random small nets.
Outcome GradientOracle() {
  const auto start = Clock::now();
  std::mt19937_64 rng(77);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) worst = std::max(worst, oracle::GradientCheckError(rng, 1e-5));
  const double elapsed = Seconds(start);
  return {worst < 1e-4 && elapsed < 60.0,
          "max relative error " + FormatDouble(worst) + ", " + Fixed(elapsed, 2) + " s"};
}

// 3: recursive GAE vs the double sum, every episode-end pattern of length <= 8.
Outcome GaeOracle() {
  const auto start = Clock::now();
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::pair<std::size_t, unsigned>> patterns;
  for (std::size_t len = 1; len <= 8; ++len) {
    for (unsigned mask = 0; mask < (1u << len); ++mask) patterns.emplace_back(len, mask);
  }
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto [len, mask] = patterns[static_cast<std::size_t>(trial) % patterns.size()];
    auto ts = oracle::RandomTransitions(rng, len);
    for (std::size_t k = 0; k < len; ++k) ts[k].done = (mask >> k) & 1u;
    const double bootstrap = u(rng) * 4.0 - 2.0;
    const double gamma = u(rng), lambda = u(rng);
    const GaeResult gae = ComputeGae(ts, bootstrap, gamma, lambda);
    const Eigen::VectorXd ref = oracle::BruteForceAdvantages(ts, bootstrap, gamma, lambda);
    worst = std::max(worst, (gae.advantages - ref).cwiseAbs().maxCoeff());
  }
  const double elapsed = Seconds(start);
  return {worst <= 1e-12 && elapsed < 10.0,
          "max |difference| " + FormatDouble(worst) + " over 1000 trials (" +
              std::to_string(patterns.size()) + " done patterns), " + Fixed(elapsed, 2) + " s"};
}

// 4: PPO drives the bandit mean to 0.3 +- 0.05 within 200 updates.
Outcome PpoSanity() {
  const auto start = Clock::now();
  int passed = 0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    QuadraticBandit env(0.3, 200);
    ActorCritic agent(1, 1, NetworkConfig{}, AdamConfig{}, seed);
    PpoConfig cfg;
    cfg.total_steps = 200L * cfg.rollout_length;
    auto mean = [](const ActorCritic& a) { return a.Mean(Eigen::VectorXd::Ones(1))[0]; };
    TrainCallbacks cb;
    cb.should_stop = [&](const ActorCritic& a) { return std::abs(mean(a) - 0.3) <= 0.05; };
    const TrainingHistory h = Train(env, agent, cfg, seed, cb);
    const bool ok = !h.aborted && std::abs(mean(agent) - 0.3) <= 0.05;
    if (ok) ++passed;
    per_seed += (per_seed.empty() ? "" : ", ") + std::string("seed ") + std::to_string(seed) + ": " +
                (ok ? "mean " + Fixed(mean(agent)) + " after " + std::to_string(h.updates.size()) +
                          " updates"
                    : "not reached (mean " + Fixed(mean(agent)) + ")");
  }
  const double elapsed = Seconds(start);
  return {passed >= 4 && elapsed < 120.0,
          std::to_string(passed) + "/5 seeds; " + per_seed + "; " + Fixed(elapsed, 1) + " s"};
}

// 5 and 6: single-task trainings with the default budget.
Outcome TaskExperiment(TaskKind task, double factor, const fs::path& work) {
  int passed = 0;
  std::string per_seed;
  double slowest = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    RunConfig c;
    c.env = task == TaskKind::kPour ? EnvKind::Pour() : EnvKind::Shake();
    c.seed = seed;
    c.checkpoints = CheckpointPolicy::kLatest;
    c.output_dir = work / (ToString(task) + "_seed" + std::to_string(seed));
    fs::remove_all(c.output_dir);
    const auto start = Clock::now();
    const TrainResult r = RunTraining(c, nullptr);
    slowest = std::max(slowest, Seconds(start));
    const double initial = r.summary.initial_reward;
    const double best = r.summary.best_reward;
    bool ok = !r.history.aborted && best >= factor * initial;
    if (task == TaskKind::kPour) ok = ok && initial > 0.0 && initial < 0.5;
    if (ok) ++passed;
    per_seed += (per_seed.empty() ? "" : ", ") + std::string("seed ") + std::to_string(seed) + " " +
                Fixed(initial) + "->" + Fixed(best) + (ok ? "" : " (miss)");
  }
  return {passed >= 3 && slowest < 1800.0,
          std::to_string(passed) + "/5 seeds reach " + Fixed(factor, 1) + "x initial; " + per_seed +
              "; slowest run " + Fixed(slowest, 0) + " s"};
}

// 7: hybrid sweep trends and per-row identity.
Outcome HybridSweep(const fs::path& work) {
  RunConfig c;
  c.seed = 1;
  c.output_dir = work / "sweep";
  c.checkpoints = CheckpointPolicy::kLatest;
  fs::remove_all(c.output_dir);
  const auto start = Clock::now();
  const SweepResult r = RunSweep(c, nullptr);
  std::vector<double> w, pour, shake;
  int consistent = 0, failed = 0;
  for (const SweepRow& row : r.rows) {
    if (!row.ok()) {
      ++failed;
      continue;
    }
    w.push_back(row.weight);
    pour.push_back(row.pour);
    shake.push_back(row.shake);
    if (SweepRowConsistent(row, 0.005)) ++consistent;
  }
  double rho_pour = 0.0, rho_shake = 0.0;
  std::string note;
  try {
    rho_pour = SpearmanCorrelation(w, pour);
    rho_shake = SpearmanCorrelation(w, shake);
  } catch (const std::exception& e) {
    note = std::string("; ") + e.what();
  }
  std::string rows;
  for (const SweepRow& row : r.rows) {
    rows += " w" + FormatFixed(row.weight, 1) + "=" +
            (row.ok() ? Fixed(row.pour, 3) + "/" + Fixed(row.shake, 3) : "failed");
  }
  const bool pass = failed == 0 && consistent == static_cast<int>(r.rows.size()) &&
                    rho_pour >= 0.6 && rho_shake <= -0.6;
  return {pass, "rho(w, pour) " + Fixed(rho_pour, 2) + ", rho(w, shake) " + Fixed(rho_shake, 2) +
                    ", identity holds on " + std::to_string(consistent) + "/" +
                    std::to_string(r.rows.size()) + " rows; pour/shake:" + rows + "; " +
                    Fixed(Seconds(start), 0) + " s" + note};
}

// 8: two identical single-threaded runs give identical bytes.
Outcome Determinism(const fs::path& work) {
  std::string files[2][2];
  for (int i = 0; i < 2; ++i) {
    RunConfig c;
    c.seed = 7;
    c.threads = 1;
    c.checkpoints = CheckpointPolicy::kLatest;
    c.output_dir = work / ("determinism_" + std::to_string(i));
    fs::remove_all(c.output_dir);
    RunTraining(c, nullptr);
    files[i][0] = Slurp(c.output_dir / "rewards.csv");
    files[i][1] = Slurp(c.output_dir / "checkpoints" /
                        ("episode_" + std::to_string(c.episode.episodes) + ".json"));
  }
  const bool csv = !files[0][0].empty() && files[0][0] == files[1][0];
  const bool ckpt = !files[0][1].empty() && files[0][1] == files[1][1];
  return {csv && ckpt, std::string("reward CSV ") + (csv ? "identical" : "DIFFERS") +
                           " (" + std::to_string(files[0][0].size()) + " bytes), final checkpoint " +
                           (ckpt ? "identical" : "DIFFERS") + " (" +
                           std::to_string(files[0][1].size()) + " bytes)"};
}

// 9: the published sweep rows satisfy the hybrid identity.
Outcome ReferenceRows() {
  const fs::path path = fs::path(POTRL_TEST_DATA) / "reference_sweep.csv";
  const std::vector<SweepRow> rows = ParseSweepCsv(Slurp(path));
  int consistent = 0;
  double worst = 0.0;
  for (const SweepRow& row : rows) {
    if (SweepRowConsistent(row, 0.005)) ++consistent;
    worst = std::max(worst, std::abs(row.hybrid - RewardHybrid(row.pour, row.shake, row.weight)));
  }
  return {rows.size() == 5 && consistent == 5,
          std::to_string(consistent) + "/" + std::to_string(rows.size()) +
              " rows within 0.005, max deviation " + Fixed(worst, 4)};
}

const char* Name(int n) {
  static const char* names[] = {"",
                                "property suite",
                                "gradient oracle",
                                "GAE oracle",
                                "PPO sanity",
                                "pouring experiment",
                                "shaking experiment",
                                "hybrid sweep",
                                "determinism",
                                "published sweep rows"};
  return names[n];
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::vector<int> criteria;
  std::string work_dir = "acceptance_runs";
  app.add_option("--criterion", criteria, "criteria to run (default: all)")
      ->check(CLI::Range(1, 9));
  app.add_option("--work-dir", work_dir, "directory for training outputs");
  CLI11_PARSE(app, argc, argv);
  if (criteria.empty()) criteria = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  const fs::path work = work_dir;
  fs::create_directories(work);

  int failures = 0;
  for (int n : criteria) {
    Outcome o;
    try {
      switch (n) {
        case 1: o = PropertySuite(); break;
        case 2: o = GradientOracle(); break;
        case 3: o = GaeOracle(); break;
        case 4: o = PpoSanity(); break;
        case 5: o = TaskExperiment(TaskKind::kPour, 1.5, work); break;
        case 6: o = TaskExperiment(TaskKind::kShake, 1.3, work); break;
        case 7: o = HybridSweep(work); break;
        case 8: o = Determinism(work); break;
        case 9: o = ReferenceRows(); break;
      }
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::cout << "criterion " << n << " (" << Name(n) << "): " << (o.pass ? "PASS" : "FAIL")
              << " (" << o.detail << ")" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
