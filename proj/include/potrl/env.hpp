#ifndef POTRL_ENV_HPP_
#define POTRL_ENV_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "potrl/fluidsim.hpp"
#include "potrl/geometry.hpp"

namespace potrl {

enum class TaskKind { kPour, kShake, kHybrid };

// Which reward the environment pays. `weight` is the pour weight w of the
// hybrid reward and is ignored by the single-task variants.
struct EnvKind {
  TaskKind task = TaskKind::kPour;
  double weight = 0.5;

  static EnvKind Pour() { return {TaskKind::kPour, 1.0}; }
  static EnvKind Shake() { return {TaskKind::kShake, 0.0}; }
  // Throws InvalidWeightError unless 0 <= w <= 1.
  static EnvKind Hybrid(double w);

  bool runs_pour() const { return task != TaskKind::kShake; }
  bool runs_shake() const { return task != TaskKind::kPour; }
};

std::string ToString(TaskKind task);
// "pour" | "shake" | "hybrid"; throws InvalidConfigError otherwise.
TaskKind ParseTaskKind(const std::string& name);

enum class SeedPolicy {
  kFixedPerStep,  // same particle spawn at every step of every episode
  kPerEpisode,    // new spawn seed per episode, fixed within it
};

std::string ToString(SeedPolicy policy);
SeedPolicy ParseSeedPolicy(const std::string& name);

struct EpisodeConfig {
  int steps_per_episode = 200;
  int episodes = 5;
  // Initial cylinder; every episode starts from it.
  double base_radius = kDefaultBaseRadius;
  double height = kDefaultHeight;
  SimConfig sim;
  CupSpec cup;
  SeedPolicy seed_policy = SeedPolicy::kFixedPerStep;
  // Identical (shape, seed) pairs reuse the previous simulation result.
  // Simulations are deterministic, so this never changes any output.
  bool memoize = true;

  void Validate() const;
};

// Fraction of the water that ended in the cup. Throws InvalidOutcomeError
// when n_total == 0.
double RewardPour(const TaskOutcome& outcome);
// Fraction of the water still in the pot.
double RewardShake(const TaskOutcome& outcome);
// w * pour + (1 - w) * shake. Throws InvalidWeightError for w outside [0, 1]
// and InvalidOutcomeError for component rewards outside [0, 1].
double RewardHybrid(double pour_reward, double shake_reward, double w);

// Per-task results of one evaluated design. Absent tasks are nullopt.
struct StepInfo {
  std::optional<TaskOutcome> pour;
  std::optional<TaskOutcome> shake;
  std::optional<double> pour_reward;
  std::optional<double> shake_reward;

  // Counts reported in logs: from the pour simulation when it ran, else from
  // the shake simulation.
  const TaskOutcome& counts() const { return pour ? *pour : *shake; }
};

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

// The pot design MDP: the state is the current pot shape (as its point-cloud
// observation), an action rescales the rings, and the reward is measured by
// re-running the task simulation(s) from a fresh fill.
//
// One instance is single-threaded; independent instances share nothing.
class PotEnv {
 public:
  PotEnv(EnvKind kind, EpisodeConfig config, std::uint64_t seed);

  // Restores the initial cylinder and starts a new episode.
  Observation Reset();
  // Throws EpisodeFinishedError once the episode has run its steps, and
  // UsageError before the first Reset().
  StepResult Step(const DesignAction& action);

  // Scores a design with the current episode's simulation seed without
  // touching the environment state.
  StepInfo Evaluate(const PotShape& shape);
  double RewardOf(const StepInfo& info) const;

  const EnvKind& kind() const { return kind_; }
  const EpisodeConfig& config() const { return config_; }
  const PotShape& shape() const { return shape_; }
  const PotShape& initial_shape() const { return initial_shape_; }
  // Steps taken in the current episode.
  int step_index() const { return step_index_; }
  // 1-based index of the current episode (0 before the first reset).
  int episode() const { return episode_; }
  bool done() const { return step_index_ >= config_.steps_per_episode; }
  std::uint64_t simulation_seed() const;

  // Use two threads so the hybrid pour and shake simulations overlap.
  void set_parallel_tasks(bool enabled) { parallel_tasks_ = enabled; }

 private:
  using CacheKey = std::pair<RingArray, std::uint64_t>;

  TaskOutcome RunPour(const PotShape& shape);
  TaskOutcome RunShake(const PotShape& shape);

  EnvKind kind_;
  EpisodeConfig config_;
  std::uint64_t seed_;
  PotShape initial_shape_;
  PotShape shape_;
  int step_index_ = 0;
  int episode_ = 0;
  bool parallel_tasks_ = false;
  std::map<CacheKey, TaskOutcome> pour_cache_;
  std::map<CacheKey, TaskOutcome> shake_cache_;
};

// Generic continuous-control interface used by the trainer. Observations and
// actions are flat vectors.
struct EnvTransition {
  Eigen::VectorXd observation;
  double reward = 0.0;
  bool done = false;
  std::optional<StepInfo> info;
};

class Environment {
 public:
  virtual ~Environment() = default;
  virtual Eigen::Index observation_size() const = 0;
  virtual Eigen::Index action_size() const = 0;
  virtual Eigen::VectorXd Reset() = 0;
  virtual EnvTransition Step(const Eigen::VectorXd& action) = 0;
  // Parameters of the current design, if the environment has one.
  virtual Eigen::VectorXd Design() const { return {}; }
};

// Exposes a PotEnv to the trainer: observations are divided by the pot height
// so inputs stay O(1).
class PotDesignEnvironment : public Environment {
 public:
  explicit PotDesignEnvironment(PotEnv& env) : env_(&env) {}

  Eigen::Index observation_size() const override {
    return static_cast<Eigen::Index>(kObservationSize);
  }
  Eigen::Index action_size() const override {
    return static_cast<Eigen::Index>(kActionSize);
  }
  Eigen::VectorXd Reset() override;
  EnvTransition Step(const Eigen::VectorXd& action) override;
  // Current radius scales.
  Eigen::VectorXd Design() const override;

  PotEnv& pot_env() { return *env_; }

 private:
  Eigen::VectorXd Normalize(const Observation& obs) const;
  PotEnv* env_;
};

}  // namespace potrl

#endif  // POTRL_ENV_HPP_
