#include "potrl/neural.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "json.hpp"

#include "potrl/error.hpp"

namespace potrl {
namespace {

using nlohmann::json;

constexpr const char* kCheckpointFormat = "potrl-checkpoint";

void CheckSameSize(Eigen::Index a, Eigen::Index b, const char* what) {
  if (a != b) {
    throw ShapeMismatchError(std::string(what) + ": size " + std::to_string(a) +
                             " does not match " + std::to_string(b));
  }
}

Eigen::MatrixXd OrthogonalMatrix(Eigen::Index rows, Eigen::Index cols,
                                 std::mt19937_64& rng) {
  const Eigen::Index tall = std::max(rows, cols);
  const Eigen::Index narrow = std::min(rows, cols);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd gaussian(tall, narrow);
  for (Eigen::Index j = 0; j < narrow; ++j) {
    for (Eigen::Index i = 0; i < tall; ++i) gaussian(i, j) = normal(rng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(tall, narrow);
  // sign fix makes the distribution uniform over orthogonal matrices
  Eigen::MatrixXd r = qr.matrixQR().topRows(narrow).triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < narrow; ++j) {
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  }
  if (rows >= cols) return q;
  return q.transpose();
}

json VectorJson(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

Eigen::VectorXd JsonVector(const json& j, const char* field) {
  if (!j.is_array()) throw ParseError(std::string(field) + ": expected an array");
  Eigen::VectorXd out(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) {
      throw ParseError(std::string(field) + "[" + std::to_string(i) +
                       "]: expected a number");
    }
    out[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return out;
}

json NetJson(const DenseNet& net) {
  return {{"layer_sizes", net.layer_sizes()},
          {"parameters", VectorJson(net.parameters())}};
}

DenseNet JsonNet(const json& j, const char* field) {
  DenseNet net(j.at("layer_sizes").get<std::vector<int>>());
  Eigen::VectorXd params = JsonVector(j.at("parameters"), field);
  if (params.size() != net.parameter_count()) {
    throw ParseError(std::string(field) + ": parameter count does not match layer_sizes");
  }
  net.parameters() = params;
  return net;
}

json AdamJson(const Adam& adam) {
  return {{"step", adam.step_count()},
          {"m", VectorJson(adam.first_moment())},
          {"v", VectorJson(adam.second_moment())}};
}

Adam JsonAdam(const json& j, const AdamConfig& config, Eigen::Index size,
              const char* field) {
  Adam adam(size, config);
  Eigen::VectorXd m = JsonVector(j.at("m"), field);
  Eigen::VectorXd v = JsonVector(j.at("v"), field);
  if (m.size() != size || v.size() != size) {
    throw ParseError(std::string(field) + ": moment size does not match parameters");
  }
  adam.Restore(std::move(m), std::move(v), j.at("step").get<long>());
  return adam;
}

}  // namespace

DenseNet::DenseNet(std::vector<int> layer_sizes)
    : layer_sizes_(std::move(layer_sizes)) {
  if (layer_sizes_.size() < 2) {
    throw InvalidConfigError("network needs an input and an output layer");
  }
  Eigen::Index total = 0;
  for (std::size_t k = 0; k + 1 < layer_sizes_.size(); ++k) {
    if (layer_sizes_[k] <= 0 || layer_sizes_[k + 1] <= 0) {
      throw InvalidConfigError("network layer sizes must be positive");
    }
    offsets_.push_back(total);
    total += static_cast<Eigen::Index>(layer_sizes_[k + 1]) * (layer_sizes_[k] + 1);
  }
  params_ = Eigen::VectorXd::Zero(total);
}

Eigen::Map<Eigen::MatrixXd> DenseNet::weight(std::size_t layer) {
  return {params_.data() + offsets_[layer], layer_sizes_[layer + 1],
          layer_sizes_[layer]};
}

Eigen::Map<const Eigen::MatrixXd> DenseNet::weight(std::size_t layer) const {
  return {params_.data() + offsets_[layer], layer_sizes_[layer + 1],
          layer_sizes_[layer]};
}

Eigen::Map<Eigen::VectorXd> DenseNet::bias(std::size_t layer) {
  const Eigen::Index start =
      offsets_[layer] + static_cast<Eigen::Index>(layer_sizes_[layer + 1]) * layer_sizes_[layer];
  return {params_.data() + start, layer_sizes_[layer + 1]};
}

Eigen::Map<const Eigen::VectorXd> DenseNet::bias(std::size_t layer) const {
  const Eigen::Index start =
      offsets_[layer] + static_cast<Eigen::Index>(layer_sizes_[layer + 1]) * layer_sizes_[layer];
  return {params_.data() + start, layer_sizes_[layer + 1]};
}

void DenseNet::InitializeOrthogonal(std::mt19937_64& rng, double hidden_gain,
                                    double output_gain) {
  for (std::size_t k = 0; k < layer_count(); ++k) {
    const double gain = k + 1 == layer_count() ? output_gain : hidden_gain;
    weight(k) = gain * OrthogonalMatrix(layer_sizes_[k + 1], layer_sizes_[k], rng);
    bias(k).setZero();
  }
}

void DenseNet::CheckInput(const Eigen::MatrixXd& inputs) const {
  if (layer_sizes_.empty()) throw UsageError("network has no layers");
  CheckSameSize(inputs.rows(), input_size(), "network input");
}

Eigen::MatrixXd DenseNet::Forward(const Eigen::MatrixXd& inputs) const {
  CheckInput(inputs);
  Eigen::MatrixXd a = inputs;
  for (std::size_t k = 0; k < layer_count(); ++k) {
    Eigen::MatrixXd z = weight(k) * a;
    z.colwise() += bias(k);
    a = k + 1 == layer_count() ? z : Eigen::MatrixXd(z.array().tanh());
  }
  return a;
}

Eigen::MatrixXd DenseNet::Forward(const Eigen::MatrixXd& inputs,
                                  ForwardCache& cache) const {
  CheckInput(inputs);
  cache.activations.clear();
  cache.activations.reserve(layer_sizes_.size());
  cache.activations.push_back(inputs);
  for (std::size_t k = 0; k < layer_count(); ++k) {
    Eigen::MatrixXd z = weight(k) * cache.activations.back();
    z.colwise() += bias(k);
    if (k + 1 < layer_count()) z = z.array().tanh();
    cache.activations.push_back(std::move(z));
  }
  return cache.activations.back();
}

Eigen::VectorXd DenseNet::Backward(const ForwardCache& cache,
                                   const Eigen::MatrixXd& upstream) const {
  if (cache.empty()) throw UsageError("backward pass needs a forward cache");
  if (cache.activations.size() != layer_sizes_.size()) {
    throw UsageError("forward cache belongs to a different network");
  }
  const Eigen::MatrixXd& output = cache.activations.back();
  CheckSameSize(upstream.rows(), output.rows(), "upstream gradient rows");
  CheckSameSize(upstream.cols(), output.cols(), "upstream gradient columns");

  Eigen::VectorXd grads = Eigen::VectorXd::Zero(params_.size());
  Eigen::MatrixXd delta = upstream;
  for (std::size_t k = layer_count(); k-- > 0;) {
    const Eigen::MatrixXd& a = cache.activations[k];
    const Eigen::Index rows = layer_sizes_[k + 1];
    const Eigen::Index cols = layer_sizes_[k];
    Eigen::Map<Eigen::MatrixXd>(grads.data() + offsets_[k], rows, cols).noalias() =
        delta * a.transpose();
    Eigen::Map<Eigen::VectorXd>(grads.data() + offsets_[k] + rows * cols, rows) =
        delta.rowwise().sum();
    if (k > 0) {
      Eigen::MatrixXd back = weight(k).transpose() * delta;
      delta = back.array() * (1.0 - a.array().square());
    }
  }
  return grads;
}

void AdamConfig::Validate() const {
  if (!(learning_rate > 0.0)) throw InvalidConfigError("adam.learning_rate: must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw InvalidConfigError("adam.beta1: must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw InvalidConfigError("adam.beta2: must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw InvalidConfigError("adam.epsilon: must be positive");
}

Adam::Adam(Eigen::Index size, AdamConfig config)
    : config_(config),
      m_(Eigen::VectorXd::Zero(size)),
      v_(Eigen::VectorXd::Zero(size)) {
  config_.Validate();
}

void Adam::Step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::VectorXd& grads) {
  CheckSameSize(params.size(), m_.size(), "adam parameters");
  CheckSameSize(grads.size(), m_.size(), "adam gradients");
  ++t_;
  m_ = config_.beta1 * m_ + (1.0 - config_.beta1) * grads;
  v_ = config_.beta2 * v_ + (1.0 - config_.beta2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  params.array() -= config_.learning_rate * (m_.array() / c1) /
                    ((v_.array() / c2).sqrt() + config_.epsilon);
}

void Adam::Restore(Eigen::VectorXd m, Eigen::VectorXd v, long t) {
  CheckSameSize(m.size(), m_.size(), "adam first moment");
  CheckSameSize(v.size(), v_.size(), "adam second moment");
  if (t < 0) throw ParseError("adam step count is negative");
  m_ = std::move(m);
  v_ = std::move(v);
  t_ = t;
}

double GaussianLogProb(const Eigen::VectorXd& mean, const Eigen::VectorXd& log_std,
                       const Eigen::VectorXd& action) {
  CheckSameSize(log_std.size(), mean.size(), "log_std");
  CheckSameSize(action.size(), mean.size(), "action");
  const double half_log_two_pi = 0.5 * std::log(2.0 * std::numbers::pi);
  double total = 0.0;
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    const double z = (action[i] - mean[i]) * std::exp(-log_std[i]);
    total += -0.5 * z * z - log_std[i] - half_log_two_pi;
  }
  return total;
}

double GaussianEntropy(const Eigen::VectorXd& log_std) {
  const double per_dim = 0.5 * (1.0 + std::log(2.0 * std::numbers::pi));
  return log_std.sum() + per_dim * static_cast<double>(log_std.size());
}

Eigen::VectorXd GaussianSample(const Eigen::VectorXd& mean,
                               const Eigen::VectorXd& log_std,
                               std::mt19937_64& rng) {
  CheckSameSize(log_std.size(), mean.size(), "log_std");
  if (!mean.allFinite() || !log_std.allFinite()) {
    throw NonFiniteError("gaussian parameters are not finite");
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd out(mean.size());
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    out[i] = mean[i] + std::exp(log_std[i]) * normal(rng);
  }
  return out;
}

Eigen::VectorXd GaussianSample(const Eigen::VectorXd& mean,
                               const Eigen::VectorXd& log_std,
                               std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return GaussianSample(mean, log_std, rng);
}

void NetworkConfig::Validate() const {
  if (hidden.empty()) throw InvalidConfigError("network.hidden: needs at least one layer");
  for (int h : hidden) {
    if (h <= 0) throw InvalidConfigError("network.hidden: sizes must be positive");
  }
  if (!(log_std_min < log_std_max)) {
    throw InvalidConfigError("network.log_std_min: must be below log_std_max");
  }
  if (!(log_std_init >= log_std_min && log_std_init <= log_std_max)) {
    throw InvalidConfigError("network.log_std_init: must lie in [log_std_min, log_std_max]");
  }
  for (double g : {hidden_gain, policy_output_gain, value_output_gain}) {
    if (!(std::isfinite(g) && g > 0.0)) {
      throw InvalidConfigError("network gains must be finite and positive");
    }
  }
}

ActorCritic::ActorCritic(Eigen::Index observation_size, Eigen::Index action_size,
                         const NetworkConfig& network_config,
                         const AdamConfig& adam, std::uint64_t seed)
    : network(network_config) {
  network.Validate();
  std::vector<int> sizes;
  sizes.push_back(static_cast<int>(observation_size));
  sizes.insert(sizes.end(), network.hidden.begin(), network.hidden.end());
  sizes.push_back(static_cast<int>(action_size));
  actor = DenseNet(sizes);
  sizes.back() = 1;
  critic = DenseNet(sizes);

  std::mt19937_64 rng(seed);
  actor.InitializeOrthogonal(rng, network.hidden_gain, network.policy_output_gain);
  critic.InitializeOrthogonal(rng, network.hidden_gain, network.value_output_gain);
  log_std = Eigen::VectorXd::Constant(action_size, network.log_std_init);

  actor_adam = Adam(actor.parameter_count(), adam);
  log_std_adam = Adam(action_size, adam);
  critic_adam = Adam(critic.parameter_count(), adam);
}

ActorOutput ActorCritic::Act(const Eigen::VectorXd& observation,
                             std::mt19937_64& rng) const {
  ActorOutput out;
  out.mean = Mean(observation);
  out.action = GaussianSample(out.mean, log_std, rng);
  out.log_prob = GaussianLogProb(out.mean, log_std, out.action);
  out.value = Value(observation);
  return out;
}

Eigen::VectorXd ActorCritic::Mean(const Eigen::VectorXd& observation) const {
  return actor.Forward(observation).col(0);
}

double ActorCritic::Value(const Eigen::VectorXd& observation) const {
  return critic.Forward(observation)(0, 0);
}

void ActorCritic::ClampLogStd() {
  log_std = log_std.cwiseMax(network.log_std_min).cwiseMin(network.log_std_max);
}

bool ActorCritic::AllFinite() const {
  return actor.parameters().allFinite() && critic.parameters().allFinite() &&
         log_std.allFinite();
}

std::string CheckpointText(const ActorCritic& agent, const CheckpointMeta& meta) {
  const AdamConfig& adam = agent.actor_adam.config();
  const NetworkConfig& net = agent.network;
  json j = {
      {"format", kCheckpointFormat},
      {"version", kCheckpointVersion},
      {"meta",
       {{"episode", meta.episode},
        {"global_step", meta.global_step},
        {"update", meta.update}}},
      {"network",
       {{"hidden", net.hidden},
        {"log_std_init", net.log_std_init},
        {"log_std_min", net.log_std_min},
        {"log_std_max", net.log_std_max},
        {"hidden_gain", net.hidden_gain},
        {"policy_output_gain", net.policy_output_gain},
        {"value_output_gain", net.value_output_gain}}},
      {"actor", NetJson(agent.actor)},
      {"critic", NetJson(agent.critic)},
      {"log_std", VectorJson(agent.log_std)},
      {"optimizer",
       {{"learning_rate", adam.learning_rate},
        {"beta1", adam.beta1},
        {"beta2", adam.beta2},
        {"epsilon", adam.epsilon},
        {"actor", AdamJson(agent.actor_adam)},
        {"log_std", AdamJson(agent.log_std_adam)},
        {"critic", AdamJson(agent.critic_adam)}}},
  };
  return j.dump() + "\n";
}

ActorCritic ParseCheckpoint(const std::string& text, CheckpointMeta* meta) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("format") != kCheckpointFormat) {
      throw ParseError("checkpoint: unknown format tag");
    }
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw ParseError("checkpoint: version " + std::to_string(version) +
                       " is not supported (expected " +
                       std::to_string(kCheckpointVersion) + ")");
    }
    ActorCritic agent;
    const json& net = j.at("network");
    agent.network.hidden = net.at("hidden").get<std::vector<int>>();
    agent.network.log_std_init = net.at("log_std_init").get<double>();
    agent.network.log_std_min = net.at("log_std_min").get<double>();
    agent.network.log_std_max = net.at("log_std_max").get<double>();
    agent.network.hidden_gain = net.at("hidden_gain").get<double>();
    agent.network.policy_output_gain = net.at("policy_output_gain").get<double>();
    agent.network.value_output_gain = net.at("value_output_gain").get<double>();
    agent.actor = JsonNet(j.at("actor"), "actor");
    agent.critic = JsonNet(j.at("critic"), "critic");
    agent.log_std = JsonVector(j.at("log_std"), "log_std");
    if (agent.log_std.size() != agent.actor.output_size()) {
      throw ParseError("log_std: size does not match the actor output");
    }
    const json& opt = j.at("optimizer");
    AdamConfig adam;
    adam.learning_rate = opt.at("learning_rate").get<double>();
    adam.beta1 = opt.at("beta1").get<double>();
    adam.beta2 = opt.at("beta2").get<double>();
    adam.epsilon = opt.at("epsilon").get<double>();
    agent.actor_adam = JsonAdam(opt.at("actor"), adam, agent.actor.parameter_count(), "optimizer.actor");
    agent.log_std_adam = JsonAdam(opt.at("log_std"), adam, agent.log_std.size(), "optimizer.log_std");
    agent.critic_adam = JsonAdam(opt.at("critic"), adam, agent.critic.parameter_count(), "optimizer.critic");
    if (meta) {
      const json& m = j.at("meta");
      meta->episode = m.at("episode").get<int>();
      meta->global_step = m.at("global_step").get<long>();
      meta->update = m.at("update").get<long>();
    }
    return agent;
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  } catch (const InvalidConfigError& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
}

void SaveCheckpoint(const std::filesystem::path& path, const ActorCritic& agent,
                    const CheckpointMeta& meta) {
  const std::string text = CheckpointText(agent, meta);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into " + path.string() + ": " + ec.message());
}

ActorCritic LoadCheckpoint(const std::filesystem::path& path, CheckpointMeta* meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return ParseCheckpoint(buf.str(), meta);
}

}  // namespace potrl
