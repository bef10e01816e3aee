#ifndef POTRL_HARNESS_HPP_
#define POTRL_HARNESS_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "potrl/env.hpp"
#include "potrl/geometry.hpp"
#include "potrl/neural.hpp"
#include "potrl/ppo.hpp"

namespace potrl {

enum class CheckpointPolicy {
  kEveryEpisode,  // checkpoints/episode_<k>.json for every episode
  kLatest,        // only the most recent episode's file is kept
};

struct RunConfig {
  EnvKind env;
  EpisodeConfig episode;
  PpoConfig ppo;
  NetworkConfig network;
  AdamConfig adam;
  std::uint64_t seed = 1;
  std::filesystem::path output_dir = "runs/pour";
  int threads = 1;
  CheckpointPolicy checkpoints = CheckpointPolicy::kEveryEpisode;
  std::vector<double> sweep_weights{0.1, 0.3, 0.5, 0.7, 0.9};

  // Checks every nested config plus cross-field consistency
  // (ppo.total_steps = episodes * steps_per_episode). Throws
  // InvalidConfigError naming the field.
  void Validate() const;
};

// Structured text (JSON). Every documented constant is written out, including
// the ones fixed by the observation layout, so a config file is auditable.
std::string ConfigText(const RunConfig& config);
// Missing keys keep their defaults; unknown keys and wrong types are errors
// that name the field (InvalidConfigError).
RunConfig ParseConfig(const std::string& text);
// Throws IoError when the file cannot be read.
RunConfig LoadConfig(const std::filesystem::path& path);
// `assignment` is "dotted.key=value" where value is JSON (bare words are
// taken as strings), e.g. "sim.shake.amplitude_deg=0".
void ApplyOverride(RunConfig& config, const std::string& assignment);

// Shape files: {"base_radius": r, "height": h, "radius_scales": [11],
// "ring_heights": [11] (optional)}. Errors name the offending field
// (ParseError) or the violated invariant (InvalidShapeError).
PotShape ParseShape(const std::string& text);
PotShape LoadShape(const std::filesystem::path& path);
std::string ShapeText(const PotShape& shape);

// Reward CSV: step,episode,reward,pour_r,shake_r,n_cup,n_pot,n_spilled.
// Rewards of tasks the environment does not run are left empty.
inline constexpr const char* kRewardCsvHeader =
    "step,episode,reward,pour_r,shake_r,n_cup,n_pot,n_spilled";

struct RewardRow {
  long step = 0;
  int episode = 0;
  double reward = 0.0;
  std::optional<double> pour_reward;
  std::optional<double> shake_reward;
  int n_cup = 0;
  int n_pot = 0;
  int n_spilled = 0;
};

std::string RewardCsvLine(const StepRecord& record);
// Throws ParseError naming the line on malformed input.
std::vector<RewardRow> ParseRewardCsv(const std::string& text);
std::vector<RewardRow> ReadRewardCsv(const std::filesystem::path& path);

// Reward-vs-step line chart. Dashed vertical lines mark every step at which
// the episode changes; the best step is circled. Throws UsageError for an
// empty series.
std::string RenderRewardPlot(const std::vector<RewardRow>& rows,
                             const std::string& title = "reward");

struct RunSummary {
  std::string env;
  double weight = 0.0;
  std::uint64_t seed = 0;
  long steps = 0;
  double initial_reward = 0.0;
  std::optional<double> initial_pour_reward;
  std::optional<double> initial_shake_reward;
  double best_reward = 0.0;
  long best_step = 0;
  int best_episode = 0;
  int best_step_in_episode = 0;
  std::optional<double> best_pour_reward;
  std::optional<double> best_shake_reward;
  RingArray best_radius_scales{};
  std::vector<double> episode_best_rewards;
  bool aborted = false;
  std::string abort_reason;
};

std::string SummaryText(const RunSummary& summary);

struct TrainResult {
  RunSummary summary;
  TrainingHistory history;
};

// Runs one training and writes into config.output_dir:
//   config.json, rewards.csv, updates.csv, checkpoints/episode_<k>.json,
//   best_design.obj, best_design.json, reward_plot.svg, summary.json
// The config is validated before anything is created. If training aborts the
// rolled-back agent is saved as checkpoints/last_good.json and the summary
// records the reason. `log` (optional) receives progress lines.
TrainResult RunTraining(const RunConfig& config, std::ostream* log = nullptr);

struct SweepRow {
  double weight = 0.0;
  int episode = 0;
  int step = 0;  // within the episode
  double pour = 0.0;
  double shake = 0.0;
  double hybrid = 0.0;
  std::string error;  // non-empty when the run for this weight failed

  bool ok() const { return error.empty(); }
};

struct SweepResult {
  std::vector<SweepRow> rows;
};

// |hybrid - (w pour + (1 - w) shake)| <= tolerance.
bool SweepRowConsistent(const SweepRow& row, double tolerance);

// One hybrid training per weight (sequential, or config.threads concurrent
// runs) into output_dir/w_<weight>/; writes sweep.csv and sweep.txt. The row
// for a weight is the step with the highest hybrid reward.
SweepResult RunSweep(const RunConfig& config, std::ostream* log = nullptr);

// Sweep CSV: weight,episode,step,pour,shake,hybrid,error (full precision).
std::string SweepCsv(const SweepResult& result);
std::vector<SweepRow> ParseSweepCsv(const std::string& text);
// Fixed-width table with the column layout Weight, Episode, Step, Pour,
// Shake, Hybrid.
std::string SweepTable(const SweepResult& result, int decimals = 3);

// Spearman rank correlation with average ranks for ties. Throws UsageError
// for fewer than two points or a constant series.
double SpearmanCorrelation(const std::vector<double>& x,
                           const std::vector<double>& y);

// Command-line entry point. Returns the process exit status.
int RunCli(int argc, const char* const* argv, std::ostream& out,
           std::ostream& err);

}  // namespace potrl

#endif  // POTRL_HARNESS_HPP_
