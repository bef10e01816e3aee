#include <fstream>
#include <future>
#include <ostream>

#include "potrl/error.hpp"
#include "potrl/format.hpp"
#include "potrl/harness.hpp"

namespace potrl {
namespace {

namespace fs = std::filesystem;

// Fixed offsets keep the network initialisation, the action noise and the
// particle spawns on unrelated streams of one run seed.
constexpr std::uint64_t kAgentSeedSalt = 0x6a09e667f3bcc909ULL;
constexpr std::uint64_t kTrainSeedSalt = 0xbb67ae8584caa73bULL;

void WriteText(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::ofstream OpenForWrite(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

fs::path EpisodeCheckpoint(const fs::path& dir, int episode) {
  return dir / "checkpoints" / ("episode_" + std::to_string(episode) + ".json");
}

RewardRow ToRow(const StepRecord& rec) {
  RewardRow row;
  row.step = rec.step;
  row.episode = rec.episode;
  row.reward = rec.reward;
  if (rec.info) {
    row.pour_reward = rec.info->pour_reward;
    row.shake_reward = rec.info->shake_reward;
    const TaskOutcome& counts = rec.info->counts();
    row.n_cup = counts.n_cup;
    row.n_pot = counts.n_pot;
    row.n_spilled = counts.n_spilled;
  }
  return row;
}

RingArray ToRings(const Eigen::VectorXd& design) {
  if (design.size() != static_cast<Eigen::Index>(kRingCount)) {
    throw ShapeMismatchError("design vector does not hold one scale per ring");
  }
  RingArray out{};
  for (std::size_t i = 0; i < kRingCount; ++i) out[i] = design[static_cast<Eigen::Index>(i)];
  return out;
}

std::string UpdateCsvLine(const UpdateStats& s) {
  return std::to_string(s.update) + "," + FormatDouble(s.policy_loss) + "," +
         FormatDouble(s.value_loss) + "," + FormatDouble(s.entropy) + "," +
         FormatDouble(s.approx_kl) + "," + FormatDouble(s.clip_fraction) + "," +
         FormatDouble(s.initial_ratio_deviation);
}

RunSummary Summarize(const RunConfig& config, const PotEnv& env,
                     const StepInfo& initial, const TrainingHistory& history) {
  RunSummary s;
  s.env = ToString(config.env.task);
  s.weight = config.env.task == TaskKind::kHybrid ? config.env.weight
             : config.env.task == TaskKind::kPour ? 1.0
                                                  : 0.0;
  s.seed = config.seed;
  s.steps = static_cast<long>(history.steps.size());
  s.initial_reward = env.RewardOf(initial);
  s.initial_pour_reward = initial.pour_reward;
  s.initial_shake_reward = initial.shake_reward;
  s.best_radius_scales = env.initial_shape().radius_scales();
  if (history.best) {
    const StepRecord& best = history.best_step();
    s.best_reward = best.reward;
    s.best_step = best.step;
    s.best_episode = best.episode;
    s.best_step_in_episode = best.step_in_episode;
    if (best.info) {
      s.best_pour_reward = best.info->pour_reward;
      s.best_shake_reward = best.info->shake_reward;
    }
    s.best_radius_scales = ToRings(best.design);
  }
  for (std::size_t idx : history.episode_best) {
    s.episode_best_rewards.push_back(history.steps[idx].reward);
  }
  s.aborted = history.aborted;
  s.abort_reason = history.abort_reason;
  return s;
}

}  // namespace

TrainResult RunTraining(const RunConfig& config, std::ostream* log) {
  config.Validate();
  const fs::path dir = config.output_dir;
  std::error_code ec;
  fs::create_directories(dir / "checkpoints", ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  WriteText(dir / "config.json", ConfigText(config));

  PotEnv env(config.env, config.episode, config.seed);
  env.set_parallel_tasks(config.threads > 1);
  const StepInfo initial = env.Evaluate(env.initial_shape());
  PotDesignEnvironment adapter(env);
  ActorCritic agent(adapter.observation_size(), adapter.action_size(),
                    config.network, config.adam, config.seed ^ kAgentSeedSalt);
  if (log) {
    *log << "[" << ToString(config.env.task) << " seed " << config.seed
         << "] initial reward " << FormatFixed(env.RewardOf(initial), 3) << "\n";
  }

  std::ofstream rewards = OpenForWrite(dir / "rewards.csv");
  rewards << kRewardCsvHeader << "\n";
  std::ofstream updates = OpenForWrite(dir / "updates.csv");
  updates << "update,policy_loss,value_loss,entropy,approx_kl,clip_fraction,"
             "initial_ratio_deviation\n";

  ActorCritic last_good = agent;
  CheckpointMeta last_meta;
  TrainCallbacks callbacks;
  callbacks.on_step = [&](const StepRecord& rec) {
    rewards << RewardCsvLine(rec) << "\n";
  };
  callbacks.on_update = [&](const UpdateStats& stats, const ActorCritic& a) {
    updates << UpdateCsvLine(stats) << "\n";
    rewards.flush();
    updates.flush();
    last_good = a;
    last_meta.update = stats.update;
  };
  callbacks.on_episode_end = [&](int episode, const ActorCritic& a,
                                 const CheckpointMeta& meta) {
    SaveCheckpoint(EpisodeCheckpoint(dir, episode), a, meta);
    if (config.checkpoints == CheckpointPolicy::kLatest && episode > 1) {
      fs::remove(EpisodeCheckpoint(dir, episode - 1));
    }
    last_meta = meta;
    if (log) {
      *log << "[" << ToString(config.env.task) << " seed " << config.seed
           << "] episode " << episode << " done after " << meta.global_step
           << " steps\n";
    }
  };

  TrainResult result;
  try {
    result.history = Train(adapter, agent, config.ppo, config.seed ^ kTrainSeedSalt,
                           callbacks);
  } catch (const std::exception&) {
    rewards.flush();
    SaveCheckpoint(dir / "checkpoints" / "last_good.json", last_good, last_meta);
    throw;
  }
  rewards.close();
  updates.close();
  if (result.history.aborted) {
    SaveCheckpoint(dir / "checkpoints" / "last_good.json", agent, last_meta);
  }

  result.summary = Summarize(config, env, initial, result.history);
  const PotShape best_shape = env.initial_shape().WithScales(result.summary.best_radius_scales);
  ExportObj(BuildPointCloud(best_shape), dir / "best_design.obj");
  WriteText(dir / "best_design.json", ShapeText(best_shape));
  if (!result.history.steps.empty()) {
    std::vector<RewardRow> rows;
    rows.reserve(result.history.steps.size());
    for (const StepRecord& rec : result.history.steps) rows.push_back(ToRow(rec));
    WriteText(dir / "reward_plot.svg",
              RenderRewardPlot(rows, ToString(config.env.task) + " reward"));
  }
  WriteText(dir / "summary.json", SummaryText(result.summary));
  if (log) {
    const RunSummary& s = result.summary;
    *log << "[" << s.env << " seed " << s.seed << "] best reward "
         << FormatFixed(s.best_reward, 3) << " at episode " << s.best_episode
         << " step " << s.best_step_in_episode << "\n";
  }
  return result;
}

SweepResult RunSweep(const RunConfig& config, std::ostream* log) {
  config.Validate();
  const fs::path dir = config.output_dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  auto run_one = [&](double w) {
    SweepRow row;
    row.weight = w;
    try {
      RunConfig run = config;
      run.env = EnvKind::Hybrid(w);
      run.threads = 1;
      run.output_dir = dir / ("w_" + FormatDouble(w));
      TrainResult result = RunTraining(run, nullptr);
      if (result.history.aborted) throw NonFiniteError(result.history.abort_reason);
      const StepRecord& best = result.history.best_step();
      row.episode = best.episode;
      row.step = best.step_in_episode;
      row.pour = *best.info->pour_reward;
      row.shake = *best.info->shake_reward;
      row.hybrid = best.reward;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    return row;
  };

  SweepResult result;
  const std::vector<double>& weights = config.sweep_weights;
  if (config.threads <= 1) {
    for (double w : weights) {
      result.rows.push_back(run_one(w));
      if (log) *log << "w " << FormatDouble(w) << ": " << (result.rows.back().ok() ? "done" : "failed: " + result.rows.back().error) << "\n";
    }
  } else {
    const std::size_t lanes = static_cast<std::size_t>(config.threads);
    for (std::size_t start = 0; start < weights.size(); start += lanes) {
      std::vector<std::future<SweepRow>> batch;
      for (std::size_t i = start; i < std::min(weights.size(), start + lanes); ++i) {
        batch.push_back(std::async(std::launch::async, run_one, weights[i]));
      }
      for (auto& f : batch) result.rows.push_back(f.get());
      if (log) *log << "finished " << result.rows.size() << " of " << weights.size() << " weights\n";
    }
  }
  WriteText(dir / "sweep.csv", SweepCsv(result));
  WriteText(dir / "sweep.txt", SweepTable(result));
  return result;
}

}  // namespace potrl
