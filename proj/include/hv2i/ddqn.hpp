#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace hv2i::ddqn {

enum class Activation { kRelu, kLeakyRelu, kTanh };

std::string_view to_string(Activation activation);
std::optional<Activation> activation_from_string(std::string_view name);

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

// Fully connected Q-network: hidden layers use `activation`, the output
// layer is linear with one unit per action.
class QNetwork {
 public:
  QNetwork() = default;
  // All-zero parameters.
  QNetwork(std::vector<int> layer_sizes, Activation activation);
  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
  static QNetwork random(std::vector<int> layer_sizes, Activation activation, std::mt19937_64& rng);

  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  const std::vector<int>& layer_sizes() const { return sizes_; }
  Activation activation() const { return activation_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::size_t parameter_count() const;
  bool same_architecture(const QNetwork& other) const;
  bool all_finite() const;

  // Columns of `states` are samples; returns output_dim x batch.
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& states) const;

  friend bool operator==(const QNetwork& a, const QNetwork& b);

 private:
  std::vector<int> sizes_;
  Activation activation_ = Activation::kRelu;
  std::vector<DenseLayer> layers_;
};

using Gradients = std::vector<DenseLayer>;

struct LossAndGradients {
  double loss = 0.0;
  Gradients gradients;
};

// Mean over the batch of (Q(s_b, a_b) - target_b)^2 and its gradient with
// respect to every parameter (backpropagation).
LossAndGradients mse_loss_and_gradients(const QNetwork& net, const Eigen::MatrixXd& states,
                                        std::span<const int> actions,
                                        const Eigen::VectorXd& targets);

Eigen::VectorXd predict_q(const QNetwork& net, std::span<const double> state);

// Lowest index wins ties.
int argmax(const Eigen::VectorXd& values);

// Epsilon-greedy over predict_q.
int select_action(const QNetwork& net, std::span<const double> state, double epsilon,
                  std::mt19937_64& rng);

struct Transition {
  std::vector<double> state;
  int action = 0;
  double reward = 0.0;
  std::vector<double> next_state;
  bool terminal = false;
};

class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, std::uint64_t seed);

  void push(Transition transition);
  std::size_t size() const { return storage_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& at(std::size_t index) const { return storage_.at(index); }

  // Uniform without replacement within one batch. Requires size() >= batch.
  std::vector<std::size_t> sample_indices(std::size_t batch);
  std::vector<Transition> sample(std::size_t batch);

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<Transition> storage_;
  std::mt19937_64 rng_;
};

// r for terminal transitions, otherwise
// r + gamma * Q_target(s', argmax_a' Q_eval(s', a')).
Eigen::VectorXd compute_target(std::span<const Transition> batch, const QNetwork& eval_net,
                               const QNetwork& target_net, double gamma);

struct SgdConfig {
  double learning_rate = 1e-3;
  double momentum = 0.0;
  double clip_norm = 10.0;  // <= 0 disables clipping
};

class SgdOptimizer {
 public:
  explicit SgdOptimizer(SgdConfig config = {}) : config_(config) {}
  void apply(QNetwork& net, Gradients gradients);
  const SgdConfig& config() const { return config_; }

 private:
  SgdConfig config_;
  Gradients velocity_;
};

// One SGD step on a sampled batch. Returns the pre-step loss, or nullopt
// (no-op) when the buffer holds fewer than batch_size transitions.
std::optional<double> train_step(QNetwork& eval_net, const QNetwork& target_net,
                                 ReplayBuffer& buffer, std::size_t batch_size, double gamma,
                                 SgdOptimizer& optimizer);

enum class SyncMode { kHard, kSoft };

void hard_sync(const QNetwork& eval_net, QNetwork& target_net);
// target <- tau * eval + (1 - tau) * target
void soft_sync(const QNetwork& eval_net, QNetwork& target_net, double tau);

// Checkpoint: one line of JSON header (format, version, activation, layer
// sizes, payload layout) followed by little-endian float64 parameters,
// per layer weight row-major then bias.
inline constexpr int kCheckpointVersion = 1;
std::string serialize_checkpoint(const QNetwork& net);
QNetwork deserialize_checkpoint(std::string_view bytes);
void save_checkpoint(const QNetwork& net, const std::filesystem::path& path);
QNetwork load_checkpoint(const std::filesystem::path& path);

struct AgentConfig {
  std::vector<int> hidden = {64, 64};
  Activation activation = Activation::kRelu;
  double gamma = 0.95;
  SgdConfig sgd;
  std::size_t batch_size = 64;
  std::size_t buffer_capacity = 10'000;
  SyncMode sync_mode = SyncMode::kHard;
  int sync_every = 200;  // train steps between hard syncs
  double tau = 0.005;    // soft-sync rate, applied every train step
  std::size_t learning_starts = 64;
  int train_every = 1;

  void validate() const;
};

// Evaluation/target network pair with replay and a training schedule.
class DdqnAgent {
 public:
  DdqnAgent(int input_dim, int n_actions, AgentConfig config, std::uint64_t seed);

  int act(std::span<const double> state, double epsilon);
  int greedy_action(std::span<const double> state) const;
  // Stores the transition and trains when the schedule says so.
  std::optional<double> observe(Transition transition);

  const QNetwork& eval_net() const { return eval_; }
  const QNetwork& target_net() const { return target_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  const AgentConfig& config() const { return config_; }
  std::size_t env_steps() const { return env_steps_; }
  std::size_t train_steps() const { return train_steps_; }

 private:
  AgentConfig config_;
  std::mt19937_64 init_rng_;
  std::mt19937_64 explore_rng_;
  QNetwork eval_;
  QNetwork target_;
  ReplayBuffer buffer_;
  SgdOptimizer optimizer_;
  std::size_t env_steps_ = 0;
  std::size_t train_steps_ = 0;
};

}  // namespace hv2i::ddqn
