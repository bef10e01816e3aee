#ifndef POTRL_NEURAL_HPP_
#define POTRL_NEURAL_HPP_

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace potrl {

// Activations of one batched forward pass, kept for the backward pass.
// Column j of every matrix belongs to sample j.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> activations;  // input, hidden..., output
  bool empty() const { return activations.empty(); }
};

// Fully connected network: tanh on every hidden layer, linear output.
// Parameters live in one flat vector (per layer: weight column-major, then
// bias) so optimisers and checkpoints treat them uniformly.
class DenseNet {
 public:
  DenseNet() = default;
  // layer_sizes = {input, hidden..., output}; needs at least two entries.
  explicit DenseNet(std::vector<int> layer_sizes);

  const std::vector<int>& layer_sizes() const { return layer_sizes_; }
  Eigen::Index input_size() const { return layer_sizes_.front(); }
  Eigen::Index output_size() const { return layer_sizes_.back(); }
  std::size_t layer_count() const { return layer_sizes_.size() - 1; }
  Eigen::Index parameter_count() const { return params_.size(); }

  Eigen::VectorXd& parameters() { return params_; }
  const Eigen::VectorXd& parameters() const { return params_; }
  Eigen::Map<Eigen::MatrixXd> weight(std::size_t layer);
  Eigen::Map<const Eigen::MatrixXd> weight(std::size_t layer) const;
  Eigen::Map<Eigen::VectorXd> bias(std::size_t layer);
  Eigen::Map<const Eigen::VectorXd> bias(std::size_t layer) const;

  // Orthogonal weights scaled by `hidden_gain` (last layer: `output_gain`),
  // zero biases.
  void InitializeOrthogonal(std::mt19937_64& rng, double hidden_gain,
                            double output_gain);

  Eigen::MatrixXd Forward(const Eigen::MatrixXd& inputs) const;
  Eigen::MatrixXd Forward(const Eigen::MatrixXd& inputs,
                          ForwardCache& cache) const;
  // Gradient of sum_j <upstream.col(j), output.col(j)> with respect to the
  // parameters, laid out like parameters(). Throws UsageError on an empty
  // cache and ShapeMismatchError when upstream does not match the output.
  Eigen::VectorXd Backward(const ForwardCache& cache,
                           const Eigen::MatrixXd& upstream) const;

 private:
  void CheckInput(const Eigen::MatrixXd& inputs) const;

  std::vector<int> layer_sizes_;
  std::vector<Eigen::Index> offsets_;  // start of each layer's weights
  Eigen::VectorXd params_;
};

struct AdamConfig {
  double learning_rate = 0.0007;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void Validate() const;
};

class Adam {
 public:
  Adam() = default;
  Adam(Eigen::Index size, AdamConfig config);

  // In-place bias-corrected update. Throws ShapeMismatchError on size
  // mismatch.
  void Step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::VectorXd& grads);

  const AdamConfig& config() const { return config_; }
  const Eigen::VectorXd& first_moment() const { return m_; }
  const Eigen::VectorXd& second_moment() const { return v_; }
  long step_count() const { return t_; }
  void Restore(Eigen::VectorXd m, Eigen::VectorXd v, long t);

 private:
  AdamConfig config_;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  long t_ = 0;
};

// Diagonal Gaussian with per-dimension log standard deviation.
double GaussianLogProb(const Eigen::VectorXd& mean,
                       const Eigen::VectorXd& log_std,
                       const Eigen::VectorXd& action);
double GaussianEntropy(const Eigen::VectorXd& log_std);
Eigen::VectorXd GaussianSample(const Eigen::VectorXd& mean,
                               const Eigen::VectorXd& log_std,
                               std::mt19937_64& rng);
Eigen::VectorXd GaussianSample(const Eigen::VectorXd& mean,
                               const Eigen::VectorXd& log_std,
                               std::uint64_t seed);

struct NetworkConfig {
  std::vector<int> hidden{256, 128, 64};
  double log_std_init = -0.5;
  double log_std_min = -5.0;
  double log_std_max = 2.0;
  double hidden_gain = 1.4142135623730951;
  double policy_output_gain = 0.01;
  double value_output_gain = 1.0;

  void Validate() const;
};

struct ActorOutput {
  Eigen::VectorXd action;
  Eigen::VectorXd mean;
  double log_prob = 0.0;
  double value = 0.0;
};

// Gaussian policy (mean network + state-independent log_std) and a separate
// value network, each with its own Adam state.
class ActorCritic {
 public:
  ActorCritic() = default;
  ActorCritic(Eigen::Index observation_size, Eigen::Index action_size,
              const NetworkConfig& network, const AdamConfig& adam,
              std::uint64_t seed);

  ActorOutput Act(const Eigen::VectorXd& observation, std::mt19937_64& rng) const;
  Eigen::VectorXd Mean(const Eigen::VectorXd& observation) const;
  double Value(const Eigen::VectorXd& observation) const;

  // Keeps log_std inside [log_std_min, log_std_max].
  void ClampLogStd();
  bool AllFinite() const;

  DenseNet actor;
  DenseNet critic;
  Eigen::VectorXd log_std;
  Adam actor_adam;
  Adam log_std_adam;
  Adam critic_adam;
  NetworkConfig network;
};

// Where training stood when a checkpoint was written.
struct CheckpointMeta {
  int episode = 0;
  long global_step = 0;
  long update = 0;
};

inline constexpr int kCheckpointVersion = 1;

// Structured text (JSON) holding the networks, log_std and optimiser state.
// Byte-identical for identical states.
std::string CheckpointText(const ActorCritic& agent, const CheckpointMeta& meta);
// Throws ParseError on malformed input or a version mismatch.
ActorCritic ParseCheckpoint(const std::string& text, CheckpointMeta* meta = nullptr);
// Writes through a temporary file so a crash never leaves a partial
// checkpoint at `path`. Throws IoError.
void SaveCheckpoint(const std::filesystem::path& path, const ActorCritic& agent,
                    const CheckpointMeta& meta);
ActorCritic LoadCheckpoint(const std::filesystem::path& path,
                           CheckpointMeta* meta = nullptr);

}  // namespace potrl

#endif  // POTRL_NEURAL_HPP_
