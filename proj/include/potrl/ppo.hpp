#ifndef POTRL_PPO_HPP_
#define POTRL_PPO_HPP_

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "potrl/env.hpp"
#include "potrl/neural.hpp"

namespace potrl {

struct PpoConfig {
  double clip_epsilon = 0.2;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  int update_epochs = 10;
  int minibatch_size = 50;
  double value_coef = 0.5;
  double entropy_coef = 0.0;
  int rollout_length = 200;
  long total_steps = 1000;
  bool normalize_advantages = true;

  void Validate() const;
};

struct Transition {
  Eigen::VectorXd observation;
  Eigen::VectorXd action;
  double log_prob = 0.0;
  double reward = 0.0;
  double value = 0.0;
  // Episode ended after this step (time limit). The return still bootstraps
  // from next_value, the critic's estimate for the final observation.
  bool done = false;
  double next_value = 0.0;
  std::optional<StepInfo> info;
};

struct RolloutBuffer {
  std::vector<Transition> transitions;
  // Critic estimate for the observation following the last transition.
  double bootstrap_value = 0.0;
  Eigen::VectorXd advantages;
  Eigen::VectorXd returns;

  std::size_t size() const { return transitions.size(); }
};

struct GaeResult {
  Eigen::VectorXd advantages;
  Eigen::VectorXd returns;  // advantages + values
};

// Generalised advantage estimation, computed backwards over the buffer.
GaeResult ComputeGae(const std::vector<Transition>& transitions,
                     double bootstrap_value, double gamma, double lambda);

// Rollout state carried across calls: the environment's live observation.
struct RolloutCursor {
  Eigen::VectorXd observation;
  bool needs_reset = true;
};

// Steps `env` for `length` transitions with actions sampled from the policy,
// resetting it whenever an episode ends. `on_step` sees every transition.
RolloutBuffer CollectRollout(
    Environment& env, const ActorCritic& agent, int length, std::mt19937_64& rng,
    RolloutCursor& cursor,
    const std::function<void(const Transition&, const Environment&)>& on_step = {});

struct PpoBatch {
  Eigen::MatrixXd observations;  // one column per sample
  Eigen::MatrixXd actions;
  Eigen::VectorXd old_log_probs;
  Eigen::VectorXd advantages;
  Eigen::VectorXd returns;
};

PpoBatch MakeBatch(const RolloutBuffer& buffer, const std::vector<int>& indices,
                   const Eigen::VectorXd& advantages);

struct PpoLossResult {
  double total = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double max_ratio_deviation = 0.0;  // max |ratio - 1|
  Eigen::VectorXd actor_grad;
  Eigen::VectorXd log_std_grad;
  Eigen::VectorXd critic_grad;
};

// Clipped-surrogate loss (to minimise) over a batch and its exact gradients:
//   -mean(min(r A, clip(r, 1-eps, 1+eps) A)) + c_v mean((V - R)^2) - c_e H
// Throws NonFiniteError when the loss is not finite.
PpoLossResult PpoLoss(const ActorCritic& agent, const PpoBatch& batch,
                      const PpoConfig& config);

struct StepRecord {
  long step = 0;            // 1-based over the run
  int episode = 0;          // 1-based
  int step_in_episode = 0;  // 1-based
  double reward = 0.0;
  std::optional<StepInfo> info;
  Eigen::VectorXd design;
};

struct UpdateStats {
  long update = 0;  // 1-based
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  // max |ratio - 1| on the first minibatch, before any parameter change
  double initial_ratio_deviation = 0.0;
};

struct TrainingHistory {
  std::vector<StepRecord> steps;
  std::vector<UpdateStats> updates;
  // Index into `steps` of the best step of each episode and of the run
  // (first occurrence wins ties).
  std::vector<std::size_t> episode_best;
  std::optional<std::size_t> best;
  bool aborted = false;
  std::string abort_reason;

  const StepRecord& best_step() const { return steps.at(*best); }
};

struct TrainCallbacks {
  std::function<void(const StepRecord&)> on_step;
  // After the last step of every episode, with the current parameters.
  std::function<void(int episode, const ActorCritic&, const CheckpointMeta&)>
      on_episode_end;
  std::function<void(const UpdateStats&, const ActorCritic&)> on_update;
  // Checked after every update; returning true ends training early.
  std::function<bool(const ActorCritic&)> should_stop;
};

// Runs total_steps environment steps of PPO. If a loss or a parameter turns
// non-finite the agent is rolled back to its state before that update and
// the history is returned with `aborted` set.
TrainingHistory Train(Environment& env, ActorCritic& agent,
                      const PpoConfig& config, std::uint64_t seed,
                      const TrainCallbacks& callbacks = {});

// One-dimensional bandit with reward -(a - target)^2, used to check that the
// learner moves the policy mean to the optimum.
class QuadraticBandit : public Environment {
 public:
  explicit QuadraticBandit(double target = 0.3, int episode_length = 200)
      : target_(target), episode_length_(episode_length) {}

  Eigen::Index observation_size() const override { return 1; }
  Eigen::Index action_size() const override { return 1; }
  Eigen::VectorXd Reset() override;
  EnvTransition Step(const Eigen::VectorXd& action) override;

 private:
  double target_;
  int episode_length_;
  int steps_ = 0;
};

}  // namespace potrl

#endif  // POTRL_PPO_HPP_
