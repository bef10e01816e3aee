#include "potrl/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "potrl/error.hpp"

namespace potrl {
namespace {

Eigen::VectorXd NormalizeAdvantages(const Eigen::VectorXd& advantages) {
  const double n = static_cast<double>(advantages.size());
  if (advantages.size() == 0) return advantages;
  const double mean = advantages.mean();
  const double var = (advantages.array() - mean).square().sum() / n;
  return (advantages.array() - mean) / (std::sqrt(var) + 1e-8);
}

}  // namespace

void PpoConfig::Validate() const {
  auto fail = [](const char* field, const char* why) {
    throw InvalidConfigError(std::string("ppo.") + field + ": " + why);
  };
  if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) fail("clip_epsilon", "must lie in (0, 1)");
  if (!(gamma >= 0.0 && gamma <= 1.0)) fail("gamma", "must lie in [0, 1]");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) fail("gae_lambda", "must lie in [0, 1]");
  if (update_epochs <= 0) fail("update_epochs", "must be positive");
  if (minibatch_size <= 0) fail("minibatch_size", "must be positive");
  if (!(value_coef >= 0.0)) fail("value_coef", "must be non-negative");
  if (!(entropy_coef >= 0.0)) fail("entropy_coef", "must be non-negative");
  if (rollout_length <= 0) fail("rollout_length", "must be positive");
  if (total_steps <= 0) fail("total_steps", "must be positive");
}

GaeResult ComputeGae(const std::vector<Transition>& transitions,
                     double bootstrap_value, double gamma, double lambda) {
  const auto n = static_cast<Eigen::Index>(transitions.size());
  GaeResult out;
  out.advantages.resize(n);
  out.returns.resize(n);
  double running = 0.0;
  for (Eigen::Index t = n - 1; t >= 0; --t) {
    const Transition& tr = transitions[static_cast<std::size_t>(t)];
    double next_value;
    if (tr.done) {
      next_value = tr.next_value;
      running = 0.0;
    } else if (t == n - 1) {
      next_value = bootstrap_value;
    } else {
      next_value = transitions[static_cast<std::size_t>(t + 1)].value;
    }
    const double delta = tr.reward + gamma * next_value - tr.value;
    running = delta + gamma * lambda * running;
    out.advantages[t] = running;
    out.returns[t] = running + tr.value;
  }
  return out;
}

RolloutBuffer CollectRollout(
    Environment& env, const ActorCritic& agent, int length, std::mt19937_64& rng,
    RolloutCursor& cursor,
    const std::function<void(const Transition&, const Environment&)>& on_step) {
  RolloutBuffer buffer;
  buffer.transitions.reserve(static_cast<std::size_t>(std::max(length, 0)));
  for (int i = 0; i < length; ++i) {
    if (cursor.needs_reset) {
      cursor.observation = env.Reset();
      cursor.needs_reset = false;
    }
    ActorOutput act = agent.Act(cursor.observation, rng);
    EnvTransition step = env.Step(act.action);
    Transition tr;
    tr.observation = std::move(cursor.observation);
    tr.action = std::move(act.action);
    tr.log_prob = act.log_prob;
    tr.reward = step.reward;
    tr.value = act.value;
    tr.done = step.done;
    tr.info = std::move(step.info);
    if (step.done) {
      tr.next_value = agent.Value(step.observation);
      cursor.needs_reset = true;
    }
    cursor.observation = std::move(step.observation);
    if (on_step) on_step(tr, env);
    buffer.transitions.push_back(std::move(tr));
  }
  if (!buffer.transitions.empty()) {
    const Transition& last = buffer.transitions.back();
    buffer.bootstrap_value =
        last.done ? last.next_value : agent.Value(cursor.observation);
  }
  return buffer;
}

PpoBatch MakeBatch(const RolloutBuffer& buffer, const std::vector<int>& indices,
                   const Eigen::VectorXd& advantages) {
  const auto n = static_cast<Eigen::Index>(indices.size());
  const Transition& first = buffer.transitions.at(static_cast<std::size_t>(indices.at(0)));
  PpoBatch batch;
  batch.observations.resize(first.observation.size(), n);
  batch.actions.resize(first.action.size(), n);
  batch.old_log_probs.resize(n);
  batch.advantages.resize(n);
  batch.returns.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const int i = indices[static_cast<std::size_t>(j)];
    const Transition& tr = buffer.transitions.at(static_cast<std::size_t>(i));
    batch.observations.col(j) = tr.observation;
    batch.actions.col(j) = tr.action;
    batch.old_log_probs[j] = tr.log_prob;
    batch.advantages[j] = advantages[i];
    batch.returns[j] = buffer.returns[i];
  }
  return batch;
}

PpoLossResult PpoLoss(const ActorCritic& agent, const PpoBatch& batch,
                      const PpoConfig& config) {
  const Eigen::Index n = batch.observations.cols();
  const Eigen::Index dims = agent.log_std.size();
  if (n == 0) throw UsageError("empty PPO batch");
  if (batch.actions.rows() != dims || batch.actions.cols() != n ||
      batch.old_log_probs.size() != n || batch.advantages.size() != n ||
      batch.returns.size() != n) {
    throw ShapeMismatchError("PPO batch fields disagree in size");
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  const double eps = config.clip_epsilon;

  ForwardCache actor_cache;
  const Eigen::MatrixXd mean = agent.actor.Forward(batch.observations, actor_cache);
  const Eigen::ArrayXd inv_var = (-2.0 * agent.log_std.array()).exp();

  PpoLossResult out;
  Eigen::MatrixXd mean_upstream(dims, n);
  out.log_std_grad = Eigen::VectorXd::Zero(dims);
  int clipped = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double log_prob =
        GaussianLogProb(mean.col(j), agent.log_std, batch.actions.col(j));
    const double log_ratio = log_prob - batch.old_log_probs[j];
    const double ratio = std::exp(log_ratio);
    const double adv = batch.advantages[j];
    const double unclipped = ratio * adv;
    const double clipped_obj = std::clamp(ratio, 1.0 - eps, 1.0 + eps) * adv;
    out.policy_loss -= std::min(unclipped, clipped_obj) * inv_n;
    out.approx_kl += ((ratio - 1.0) - log_ratio) * inv_n;
    out.max_ratio_deviation = std::max(out.max_ratio_deviation, std::abs(ratio - 1.0));
    if (std::abs(ratio - 1.0) > eps) ++clipped;

    // d(loss)/d(log_prob); the clipped branch is flat in the parameters
    const double g = unclipped <= clipped_obj ? -ratio * adv * inv_n : 0.0;
    const Eigen::ArrayXd diff = (batch.actions.col(j) - mean.col(j)).array();
    mean_upstream.col(j) = (g * diff * inv_var).matrix();
    out.log_std_grad.array() += g * (diff.square() * inv_var - 1.0);
  }
  out.clip_fraction = static_cast<double>(clipped) * inv_n;
  out.entropy = GaussianEntropy(agent.log_std);
  out.log_std_grad.array() -= config.entropy_coef;
  out.actor_grad = agent.actor.Backward(actor_cache, mean_upstream);

  ForwardCache critic_cache;
  const Eigen::MatrixXd values = agent.critic.Forward(batch.observations, critic_cache);
  const Eigen::RowVectorXd err = values.row(0) - batch.returns.transpose();
  out.value_loss = err.squaredNorm() * inv_n;
  out.critic_grad = agent.critic.Backward(
      critic_cache, Eigen::MatrixXd(config.value_coef * 2.0 * inv_n * err));

  out.total = out.policy_loss + config.value_coef * out.value_loss -
              config.entropy_coef * out.entropy;
  if (!std::isfinite(out.total)) {
    throw NonFiniteError("PPO loss is not finite (policy " +
                         std::to_string(out.policy_loss) + ", value " +
                         std::to_string(out.value_loss) + ")");
  }
  return out;
}

TrainingHistory Train(Environment& env, ActorCritic& agent,
                      const PpoConfig& config, std::uint64_t seed,
                      const TrainCallbacks& callbacks) {
  config.Validate();
  if (agent.actor.input_size() != env.observation_size() ||
      agent.actor.output_size() != env.action_size()) {
    throw ShapeMismatchError("agent dimensions do not match the environment");
  }
  std::mt19937_64 rng(seed);
  RolloutCursor cursor;
  TrainingHistory history;
  int episode = 0;
  int step_in_episode = 0;
  bool new_episode = true;
  long update = 0;

  auto record = [&](const Transition& tr, const Environment& e) {
    if (new_episode) {
      ++episode;
      step_in_episode = 0;
      new_episode = false;
    }
    StepRecord rec;
    rec.step = static_cast<long>(history.steps.size()) + 1;
    rec.episode = episode;
    rec.step_in_episode = ++step_in_episode;
    rec.reward = tr.reward;
    rec.info = tr.info;
    rec.design = e.Design();
    if (!history.best || rec.reward > history.best_step().reward) {
      history.best = history.steps.size();
    }
    history.steps.push_back(std::move(rec));
    if (tr.done) new_episode = true;
    if (callbacks.on_step) callbacks.on_step(history.steps.back());
  };

  while (static_cast<long>(history.steps.size()) < config.total_steps) {
    const long remaining = config.total_steps - static_cast<long>(history.steps.size());
    const int length = static_cast<int>(std::min<long>(config.rollout_length, remaining));
    const int episode_before = episode - (new_episode ? 0 : 1);
    RolloutBuffer buffer = CollectRollout(env, agent, length, rng, cursor, record);

    GaeResult gae = ComputeGae(buffer.transitions, buffer.bootstrap_value,
                               config.gamma, config.gae_lambda);
    buffer.advantages = gae.advantages;
    buffer.returns = gae.returns;
    const Eigen::VectorXd advantages = config.normalize_advantages
                                           ? NormalizeAdvantages(buffer.advantages)
                                           : buffer.advantages;

    const ActorCritic last_good = agent;
    UpdateStats stats;
    stats.update = ++update;
    std::vector<int> order(buffer.size());
    std::iota(order.begin(), order.end(), 0);
    int batches = 0;
    try {
      for (int epoch = 0; epoch < config.update_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(config.minibatch_size)) {
          const std::size_t end =
              std::min(order.size(), start + static_cast<std::size_t>(config.minibatch_size));
          std::vector<int> indices(order.begin() + static_cast<long>(start),
                                   order.begin() + static_cast<long>(end));
          PpoLossResult loss = PpoLoss(agent, MakeBatch(buffer, indices, advantages), config);
          if (batches == 0) stats.initial_ratio_deviation = loss.max_ratio_deviation;
          if (!loss.actor_grad.allFinite() || !loss.log_std_grad.allFinite() ||
              !loss.critic_grad.allFinite()) {
            throw NonFiniteError("PPO gradient is not finite");
          }
          agent.actor_adam.Step(agent.actor.parameters(), loss.actor_grad);
          agent.log_std_adam.Step(agent.log_std, loss.log_std_grad);
          agent.critic_adam.Step(agent.critic.parameters(), loss.critic_grad);
          agent.ClampLogStd();
          if (!agent.AllFinite()) throw NonFiniteError("parameters became non-finite");
          stats.policy_loss += loss.policy_loss;
          stats.value_loss += loss.value_loss;
          stats.entropy += loss.entropy;
          stats.approx_kl += loss.approx_kl;
          stats.clip_fraction += loss.clip_fraction;
          ++batches;
        }
      }
    } catch (const NonFiniteError& e) {
      agent = last_good;
      history.aborted = true;
      history.abort_reason = e.what();
      break;
    }
    if (batches > 0) {
      stats.policy_loss /= batches;
      stats.value_loss /= batches;
      stats.entropy /= batches;
      stats.approx_kl /= batches;
      stats.clip_fraction /= batches;
    }
    history.updates.push_back(stats);
    if (callbacks.on_update) callbacks.on_update(stats, agent);

    if (callbacks.on_episode_end) {
      const int finished = episode - (new_episode ? 0 : 1);
      for (int ep = episode_before + 1; ep <= finished; ++ep) {
        CheckpointMeta meta{ep, static_cast<long>(history.steps.size()), update};
        callbacks.on_episode_end(ep, agent, meta);
      }
    }
    if (callbacks.should_stop && callbacks.should_stop(agent)) break;
  }

  for (std::size_t i = 0; i < history.steps.size(); ++i) {
    const StepRecord& rec = history.steps[i];
    if (history.episode_best.size() < static_cast<std::size_t>(rec.episode)) {
      history.episode_best.push_back(i);
    } else if (rec.reward > history.steps[history.episode_best.back()].reward) {
      history.episode_best.back() = i;
    }
  }
  return history;
}

Eigen::VectorXd QuadraticBandit::Reset() {
  steps_ = 0;
  return Eigen::VectorXd::Ones(1);
}

EnvTransition QuadraticBandit::Step(const Eigen::VectorXd& action) {
  if (action.size() != 1) throw ShapeMismatchError("bandit action must have one entry");
  if (steps_ >= episode_length_) throw EpisodeFinishedError("bandit episode finished");
  ++steps_;
  const double miss = action[0] - target_;
  EnvTransition out;
  out.observation = Eigen::VectorXd::Ones(1);
  out.reward = -miss * miss;
  out.done = steps_ >= episode_length_;
  return out;
}

}  // namespace potrl
