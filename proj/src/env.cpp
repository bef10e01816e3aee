#include "potrl/env.hpp"

#include <cmath>
#include <future>

#include "potrl/error.hpp"

namespace potrl {
namespace {

constexpr std::size_t kCacheLimit = 4096;

std::uint64_t SplitMix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void CheckOutcome(const TaskOutcome& outcome) {
  if (outcome.n_total <= 0) {
    throw InvalidOutcomeError("outcome has no particles (n_total = 0)");
  }
  if (outcome.n_cup < 0 || outcome.n_pot < 0 || outcome.n_spilled < 0 ||
      outcome.n_cup + outcome.n_pot + outcome.n_spilled != outcome.n_total) {
    throw InvalidOutcomeError("outcome counts do not partition n_total");
  }
}

void CheckUnit(double reward, const char* name) {
  if (!(reward >= 0.0 && reward <= 1.0)) {
    throw InvalidOutcomeError(std::string(name) + " reward outside [0, 1]");
  }
}

}  // namespace

EnvKind EnvKind::Hybrid(double w) {
  if (!(w >= 0.0 && w <= 1.0)) {
    throw InvalidWeightError("hybrid weight must lie in [0, 1]");
  }
  return {TaskKind::kHybrid, w};
}

std::string ToString(TaskKind task) {
  switch (task) {
    case TaskKind::kPour: return "pour";
    case TaskKind::kShake: return "shake";
    case TaskKind::kHybrid: return "hybrid";
  }
  return "?";
}

TaskKind ParseTaskKind(const std::string& name) {
  if (name == "pour") return TaskKind::kPour;
  if (name == "shake") return TaskKind::kShake;
  if (name == "hybrid") return TaskKind::kHybrid;
  throw InvalidConfigError("env.kind: expected pour, shake or hybrid, got '" +
                           name + "'");
}

std::string ToString(SeedPolicy policy) {
  return policy == SeedPolicy::kFixedPerStep ? "fixed-per-step" : "per-episode";
}

SeedPolicy ParseSeedPolicy(const std::string& name) {
  if (name == "fixed-per-step") return SeedPolicy::kFixedPerStep;
  if (name == "per-episode") return SeedPolicy::kPerEpisode;
  throw InvalidConfigError(
      "env.seed_policy: expected fixed-per-step or per-episode, got '" + name +
      "'");
}

void EpisodeConfig::Validate() const {
  if (steps_per_episode <= 0) {
    throw InvalidConfigError("env.steps_per_episode: must be positive");
  }
  if (episodes <= 0) throw InvalidConfigError("env.episodes: must be positive");
  if (!(std::isfinite(base_radius) && base_radius > 0.0)) {
    throw InvalidConfigError("geometry.base_radius: must be finite and positive");
  }
  if (!(std::isfinite(height) && height > 0.0)) {
    throw InvalidConfigError("geometry.height: must be finite and positive");
  }
  sim.Validate();
  cup.Validate();
}

double RewardPour(const TaskOutcome& outcome) {
  CheckOutcome(outcome);
  return static_cast<double>(outcome.n_cup) / outcome.n_total;
}

double RewardShake(const TaskOutcome& outcome) {
  CheckOutcome(outcome);
  return static_cast<double>(outcome.n_pot) / outcome.n_total;
}

double RewardHybrid(double pour_reward, double shake_reward, double w) {
  if (!(w >= 0.0 && w <= 1.0)) {
    throw InvalidWeightError("hybrid weight must lie in [0, 1]");
  }
  CheckUnit(pour_reward, "pour");
  CheckUnit(shake_reward, "shake");
  return w * pour_reward + (1.0 - w) * shake_reward;
}

PotEnv::PotEnv(EnvKind kind, EpisodeConfig config, std::uint64_t seed)
    : kind_(kind), config_(std::move(config)), seed_(seed) {
  if (kind_.task == TaskKind::kHybrid) EnvKind::Hybrid(kind_.weight);
  config_.Validate();
  initial_shape_ = PotShape(config_.base_radius, config_.height);
  shape_ = initial_shape_;
}

std::uint64_t PotEnv::simulation_seed() const {
  if (config_.seed_policy == SeedPolicy::kFixedPerStep) return seed_;
  // Before the first reset, designs are scored like the first episode.
  const int episode = episode_ > 0 ? episode_ : 1;
  return SplitMix64(seed_ ^ SplitMix64(static_cast<std::uint64_t>(episode)));
}

Observation PotEnv::Reset() {
  shape_ = initial_shape_;
  step_index_ = 0;
  ++episode_;
  return ToObservation(BuildPointCloud(shape_));
}

StepResult PotEnv::Step(const DesignAction& action) {
  if (episode_ == 0) throw UsageError("Step() called before Reset()");
  if (done()) throw EpisodeFinishedError("episode already finished; call Reset()");
  PotShape next = ApplyAction(shape_, action);
  StepResult result;
  result.info = Evaluate(next);
  result.reward = RewardOf(result.info);
  shape_ = next;
  ++step_index_;
  result.done = done();
  result.observation = ToObservation(BuildPointCloud(shape_));
  return result;
}

TaskOutcome PotEnv::RunPour(const PotShape& shape) {
  const std::uint64_t seed = simulation_seed();
  auto simulate = [&] { return SimulatePour(shape, config_.sim, config_.cup, seed); };
  if (!config_.memoize) return simulate();
  CacheKey key{shape.radius_scales(), seed};
  if (auto it = pour_cache_.find(key); it != pour_cache_.end()) return it->second;
  if (pour_cache_.size() >= kCacheLimit) pour_cache_.clear();
  return pour_cache_.emplace(key, simulate()).first->second;
}

TaskOutcome PotEnv::RunShake(const PotShape& shape) {
  const std::uint64_t seed = simulation_seed();
  auto simulate = [&] { return SimulateShake(shape, config_.sim, seed); };
  if (!config_.memoize) return simulate();
  CacheKey key{shape.radius_scales(), seed};
  if (auto it = shake_cache_.find(key); it != shake_cache_.end()) return it->second;
  if (shake_cache_.size() >= kCacheLimit) shake_cache_.clear();
  return shake_cache_.emplace(key, simulate()).first->second;
}

StepInfo PotEnv::Evaluate(const PotShape& shape) {
  if (shape.base_radius() != initial_shape_.base_radius() ||
      shape.height() != initial_shape_.height() ||
      shape.ring_heights() != initial_shape_.ring_heights()) {
    // The cache key only covers the scales.
    throw InvalidShapeError("shape: base radius, height and ring heights must match the environment");
  }
  StepInfo info;
  if (kind_.runs_pour() && kind_.runs_shake() && parallel_tasks_) {
    auto shake = std::async(std::launch::async, [&] { return RunShake(shape); });
    info.pour = RunPour(shape);
    info.shake = shake.get();
  } else {
    if (kind_.runs_pour()) info.pour = RunPour(shape);
    if (kind_.runs_shake()) info.shake = RunShake(shape);
  }
  if (info.pour) info.pour_reward = RewardPour(*info.pour);
  if (info.shake) info.shake_reward = RewardShake(*info.shake);
  return info;
}

double PotEnv::RewardOf(const StepInfo& info) const {
  switch (kind_.task) {
    case TaskKind::kPour: return *info.pour_reward;
    case TaskKind::kShake: return *info.shake_reward;
    case TaskKind::kHybrid:
      return RewardHybrid(*info.pour_reward, *info.shake_reward, kind_.weight);
  }
  return 0.0;
}

Eigen::VectorXd PotDesignEnvironment::Normalize(const Observation& obs) const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(obs.values.size()));
  const double scale = 1.0 / env_->shape().height();
  for (std::size_t i = 0; i < obs.values.size(); ++i) {
    out[static_cast<Eigen::Index>(i)] = obs.values[i] * scale;
  }
  return out;
}

Eigen::VectorXd PotDesignEnvironment::Reset() { return Normalize(env_->Reset()); }

EnvTransition PotDesignEnvironment::Step(const Eigen::VectorXd& action) {
  if (action.size() != action_size()) {
    throw ShapeMismatchError("action has " + std::to_string(action.size()) +
                             " entries, expected " + std::to_string(action_size()));
  }
  DesignAction design;
  for (std::size_t i = 0; i < design.deltas.size(); ++i) {
    design.deltas[i] = action[static_cast<Eigen::Index>(i)];
  }
  StepResult step = env_->Step(design);
  EnvTransition out;
  out.observation = Normalize(step.observation);
  out.reward = step.reward;
  out.done = step.done;
  out.info = std::move(step.info);
  return out;
}

Eigen::VectorXd PotDesignEnvironment::Design() const {
  const RingArray& scales = env_->shape().radius_scales();
  return Eigen::Map<const Eigen::VectorXd>(scales.data(),
                                           static_cast<Eigen::Index>(scales.size()));
}

}  // namespace potrl
