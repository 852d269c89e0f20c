#include "hv2i/ddqn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hv2i/errors.hpp"
#include "hv2i/rng.hpp"

namespace hv2i::ddqn {

namespace {

constexpr double kLeakySlope = 0.01;

Eigen::MatrixXd activate(const Eigen::MatrixXd& z, Activation a) {
  switch (a) {
    case Activation::kRelu:
      return z.cwiseMax(0.0);
    case Activation::kLeakyRelu:
      return z.unaryExpr([](double v) { return v > 0.0 ? v : kLeakySlope * v; });
    case Activation::kTanh:
      return z.array().tanh().matrix();
  }
  return z;
}

Eigen::MatrixXd activation_derivative(const Eigen::MatrixXd& z, Activation a) {
  switch (a) {
    case Activation::kRelu:
      return z.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
    case Activation::kLeakyRelu:
      return z.unaryExpr([](double v) { return v > 0.0 ? 1.0 : kLeakySlope; });
    case Activation::kTanh: {
      const Eigen::ArrayXXd t = z.array().tanh();
      return (1.0 - t * t).matrix();
    }
  }
  return Eigen::MatrixXd::Ones(z.rows(), z.cols());
}

Eigen::MatrixXd stack_states(std::span<const Transition> batch, bool next, int dim) {
  Eigen::MatrixXd m(dim, static_cast<Eigen::Index>(batch.size()));
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& s = next ? batch[b].next_state : batch[b].state;
    if (static_cast<int>(s.size()) != dim) throw ContractViolation("transition state has wrong dimension");
    m.col(static_cast<Eigen::Index>(b)) = Eigen::Map<const Eigen::VectorXd>(s.data(), dim);
  }
  return m;
}

void check_architecture(const QNetwork& a, const QNetwork& b) {
  if (!a.same_architecture(b)) throw ContractViolation("networks have different architectures");
}

void put_le(std::string& out, double value) {
  auto bits = std::bit_cast<std::uint64_t>(value);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

double get_le(std::string_view in, std::size_t offset) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) {
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
  }
  return std::bit_cast<double>(bits);
}

}  // namespace

std::string_view to_string(Activation activation) {
  switch (activation) {
    case Activation::kRelu:
      return "relu";
    case Activation::kLeakyRelu:
      return "leaky_relu";
    case Activation::kTanh:
      return "tanh";
  }
  return "relu";
}

std::optional<Activation> activation_from_string(std::string_view name) {
  for (Activation a : {Activation::kRelu, Activation::kLeakyRelu, Activation::kTanh}) {
    if (to_string(a) == name) return a;
  }
  return std::nullopt;
}

QNetwork::QNetwork(std::vector<int> layer_sizes, Activation activation)
    : sizes_(std::move(layer_sizes)), activation_(activation) {
  if (sizes_.size() < 2) throw ContractViolation("QNetwork needs at least input and output sizes");
  for (int s : sizes_) {
    if (s < 1) throw ContractViolation("QNetwork layer sizes must be >= 1");
  }
  for (std::size_t l = 1; l < sizes_.size(); ++l) {
    layers_.push_back({Eigen::MatrixXd::Zero(sizes_[l], sizes_[l - 1]), Eigen::VectorXd::Zero(sizes_[l])});
  }
}

QNetwork QNetwork::random(std::vector<int> layer_sizes, Activation activation, std::mt19937_64& rng) {
  QNetwork net(std::move(layer_sizes), activation);
  for (auto& layer : net.layers_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    // Row-major fill order so the draw sequence is independent of storage order.
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = dist(rng);
    }
  }
  return net;
}

std::size_t QNetwork::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

bool QNetwork::same_architecture(const QNetwork& other) const {
  return sizes_ == other.sizes_ && activation_ == other.activation_;
}

bool QNetwork::all_finite() const {
  return std::all_of(layers_.begin(), layers_.end(), [](const DenseLayer& l) {
    return l.weight.allFinite() && l.bias.allFinite();
  });
}

Eigen::MatrixXd QNetwork::forward_batch(const Eigen::MatrixXd& states) const {
  if (states.rows() != input_dim()) {
    throw ContractViolation("forward: state dimension " + std::to_string(states.rows()) +
                            " != network input " + std::to_string(input_dim()));
  }
  Eigen::MatrixXd a = states;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::MatrixXd z = layers_[l].weight * a;
    z.colwise() += layers_[l].bias;
    a = (l + 1 < layers_.size()) ? activate(z, activation_) : std::move(z);
  }
  return a;
}

bool operator==(const QNetwork& a, const QNetwork& b) {
  if (!a.same_architecture(b)) return false;
  for (std::size_t l = 0; l < a.layers_.size(); ++l) {
    if (a.layers_[l].weight != b.layers_[l].weight || a.layers_[l].bias != b.layers_[l].bias) {
      return false;
    }
  }
  return true;
}

LossAndGradients mse_loss_and_gradients(const QNetwork& net, const Eigen::MatrixXd& states,
                                        std::span<const int> actions,
                                        const Eigen::VectorXd& targets) {
  const Eigen::Index batch = states.cols();
  if (batch == 0 || static_cast<Eigen::Index>(actions.size()) != batch || targets.size() != batch) {
    throw ContractViolation("mse_loss_and_gradients: batch sizes disagree");
  }
  if (states.rows() != net.input_dim()) throw ContractViolation("mse_loss_and_gradients: bad state dimension");
  const auto& layers = net.layers();

  // Forward pass keeping pre-activations z and activations a.
  std::vector<Eigen::MatrixXd> acts{states};
  std::vector<Eigen::MatrixXd> pre;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Eigen::MatrixXd z = layers[l].weight * acts.back();
    z.colwise() += layers[l].bias;
    pre.push_back(z);
    acts.push_back(l + 1 < layers.size() ? activate(z, net.activation()) : z);
  }

  const Eigen::MatrixXd& q = acts.back();
  Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(q.rows(), q.cols());
  double loss = 0.0;
  for (Eigen::Index b = 0; b < batch; ++b) {
    const int a = actions[static_cast<std::size_t>(b)];
    if (a < 0 || a >= q.rows()) throw ContractViolation("mse_loss_and_gradients: action out of range");
    const double err = q(a, b) - targets(b);
    loss += err * err;
    delta(a, b) = 2.0 * err / static_cast<double>(batch);
  }
  loss /= static_cast<double>(batch);

  Gradients grads(layers.size());
  for (std::size_t l = layers.size(); l-- > 0;) {
    grads[l].weight = delta * acts[l].transpose();
    grads[l].bias = delta.rowwise().sum();
    if (l > 0) {
      delta = (layers[l].weight.transpose() * delta).cwiseProduct(
          activation_derivative(pre[l - 1], net.activation()));
    }
  }
  return {loss, std::move(grads)};
}

Eigen::VectorXd predict_q(const QNetwork& net, std::span<const double> state) {
  if (static_cast<int>(state.size()) != net.input_dim()) {
    throw ContractViolation("predict_q: state dimension " + std::to_string(state.size()) +
                            " != network input " + std::to_string(net.input_dim()));
  }
  Eigen::MatrixXd x = Eigen::Map<const Eigen::VectorXd>(state.data(), net.input_dim());
  return net.forward_batch(x).col(0);
}

int argmax(const Eigen::VectorXd& values) {
  int best = 0;
  for (Eigen::Index i = 1; i < values.size(); ++i) {
    if (values(i) > values(best)) best = static_cast<int>(i);
  }
  return best;
}

int select_action(const QNetwork& net, std::span<const double> state, double epsilon,
                  std::mt19937_64& rng) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ContractViolation("select_action: epsilon outside [0, 1]");
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (coin(rng) < epsilon) {
    std::uniform_int_distribution<int> pick(0, net.output_dim() - 1);
    return pick(rng);
  }
  return argmax(predict_q(net, state));
}

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::uint64_t seed)
    : capacity_(capacity), rng_(make_rng(seed, Stream::kReplay)) {
  if (capacity_ == 0) throw ContractViolation("ReplayBuffer capacity must be >= 1");
  storage_.reserve(std::min<std::size_t>(capacity_, 1 << 16));
}

void ReplayBuffer::push(Transition transition) {
  if (transition.action < 0) throw ContractViolation("ReplayBuffer: negative action");
  if (!std::isfinite(transition.reward)) throw ContractViolation("ReplayBuffer: non-finite reward");
  if (storage_.size() < capacity_) {
    storage_.push_back(std::move(transition));
  } else {
    storage_[next_] = std::move(transition);
  }
  next_ = (next_ + 1) % capacity_;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch) {
  if (batch > storage_.size()) throw ContractViolation("ReplayBuffer: batch larger than buffer");
  // Partial Fisher-Yates: uniform over ordered batch-subsets.
  std::vector<std::size_t> pool(storage_.size());
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < batch; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng_)]);
  }
  pool.resize(batch);
  return pool;
}

std::vector<Transition> ReplayBuffer::sample(std::size_t batch) {
  std::vector<Transition> out;
  out.reserve(batch);
  for (std::size_t i : sample_indices(batch)) out.push_back(storage_[i]);
  return out;
}

Eigen::VectorXd compute_target(std::span<const Transition> batch, const QNetwork& eval_net,
                               const QNetwork& target_net, double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ContractViolation("compute_target: gamma outside [0, 1)");
  check_architecture(eval_net, target_net);
  Eigen::VectorXd y(static_cast<Eigen::Index>(batch.size()));
  if (batch.empty()) return y;

  const Eigen::MatrixXd next = stack_states(batch, true, eval_net.input_dim());
  const Eigen::MatrixXd q_eval = eval_net.forward_batch(next);
  const Eigen::MatrixXd q_target = target_net.forward_batch(next);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto col = static_cast<Eigen::Index>(b);
    y(col) = batch[b].reward;
    if (!batch[b].terminal) {
      const int a_star = argmax(q_eval.col(col));
      y(col) += gamma * q_target(a_star, col);
    }
  }
  return y;
}

void SgdOptimizer::apply(QNetwork& net, Gradients gradients) {
  auto& layers = net.layers();
  if (gradients.size() != layers.size()) throw ContractViolation("SgdOptimizer: gradient shape mismatch");

  if (config_.clip_norm > 0.0) {
    double sq = 0.0;
    for (const auto& g : gradients) sq += g.weight.squaredNorm() + g.bias.squaredNorm();
    const double norm = std::sqrt(sq);
    if (norm > config_.clip_norm) {
      const double scale = config_.clip_norm / norm;
      for (auto& g : gradients) {
        g.weight *= scale;
        g.bias *= scale;
      }
    }
  }

  if (config_.momentum > 0.0) {
    if (velocity_.size() != gradients.size()) {
      velocity_.clear();
      for (const auto& g : gradients) {
        velocity_.push_back({Eigen::MatrixXd::Zero(g.weight.rows(), g.weight.cols()),
                             Eigen::VectorXd::Zero(g.bias.size())});
      }
    }
    for (std::size_t l = 0; l < gradients.size(); ++l) {
      velocity_[l].weight = config_.momentum * velocity_[l].weight + gradients[l].weight;
      velocity_[l].bias = config_.momentum * velocity_[l].bias + gradients[l].bias;
      layers[l].weight -= config_.learning_rate * velocity_[l].weight;
      layers[l].bias -= config_.learning_rate * velocity_[l].bias;
    }
    return;
  }
  for (std::size_t l = 0; l < gradients.size(); ++l) {
    layers[l].weight -= config_.learning_rate * gradients[l].weight;
    layers[l].bias -= config_.learning_rate * gradients[l].bias;
  }
}

std::optional<double> train_step(QNetwork& eval_net, const QNetwork& target_net,
                                 ReplayBuffer& buffer, std::size_t batch_size, double gamma,
                                 SgdOptimizer& optimizer) {
  if (batch_size == 0 || buffer.size() < batch_size) return std::nullopt;
  const std::vector<Transition> batch = buffer.sample(batch_size);
  const Eigen::VectorXd targets = compute_target(batch, eval_net, target_net, gamma);
  const Eigen::MatrixXd states = stack_states(batch, false, eval_net.input_dim());
  std::vector<int> actions(batch.size());
  std::transform(batch.begin(), batch.end(), actions.begin(), [](const Transition& t) { return t.action; });

  LossAndGradients lg = mse_loss_and_gradients(eval_net, states, actions, targets);
  if (lg.loss == 0.0) return 0.0;
  optimizer.apply(eval_net, std::move(lg.gradients));
  return lg.loss;
}

void hard_sync(const QNetwork& eval_net, QNetwork& target_net) {
  check_architecture(eval_net, target_net);
  target_net = eval_net;
}

void soft_sync(const QNetwork& eval_net, QNetwork& target_net, double tau) {
  check_architecture(eval_net, target_net);
  if (!(tau >= 0.0 && tau <= 1.0)) throw ContractViolation("soft_sync: tau outside [0, 1]");
  if (tau == 1.0) {
    target_net = eval_net;
    return;
  }
  for (std::size_t l = 0; l < eval_net.layers().size(); ++l) {
    auto& t = target_net.layers()[l];
    const auto& e = eval_net.layers()[l];
    t.weight = tau * e.weight + (1.0 - tau) * t.weight;
    t.bias = tau * e.bias + (1.0 - tau) * t.bias;
  }
}

std::string serialize_checkpoint(const QNetwork& net) {
  nlohmann::json header = {
      {"format", "hv2i-qnet"},
      {"version", kCheckpointVersion},
      {"activation", std::string(to_string(net.activation()))},
      {"layer_sizes", net.layer_sizes()},
      {"dtype", "float64-le"},
      {"layout", "per layer: weight row-major (out x in), then bias"},
      {"parameter_count", net.parameter_count()},
  };
  std::string out = header.dump();
  out.push_back('\n');
  out.reserve(out.size() + 8 * net.parameter_count());
  for (const auto& layer : net.layers()) {
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) put_le(out, layer.weight(r, c));
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) put_le(out, layer.bias(r));
  }
  return out;
}

QNetwork deserialize_checkpoint(std::string_view bytes) {
  const auto newline = bytes.find('\n');
  if (newline == std::string_view::npos) throw IoError("checkpoint: missing header line");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(0, newline));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint: malformed header: ") + e.what());
  }
  if (header.value("format", "") != "hv2i-qnet") throw IoError("checkpoint: not a Q-network file");
  if (header.value("version", 0) != kCheckpointVersion) {
    throw IoError("checkpoint: unsupported version " + header.value("version", nlohmann::json()).dump());
  }
  const auto activation = activation_from_string(header.value("activation", ""));
  if (!activation) throw IoError("checkpoint: unknown activation");
  QNetwork net(header.at("layer_sizes").get<std::vector<int>>(), *activation);

  std::size_t offset = newline + 1;
  if (bytes.size() - offset != 8 * net.parameter_count()) {
    throw IoError("checkpoint: payload size does not match layer sizes");
  }
  for (auto& layer : net.layers()) {
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c, offset += 8) {
        layer.weight(r, c) = get_le(bytes, offset);
      }
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r, offset += 8) layer.bias(r) = get_le(bytes, offset);
  }
  return net;
}

void save_checkpoint(const QNetwork& net, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
  const std::string bytes = serialize_checkpoint(net);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

QNetwork load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

void AgentConfig::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("ddqn.gamma must lie in [0, 1)");
  if (!(sgd.learning_rate > 0.0)) throw ConfigError("ddqn.lr must be > 0");
  if (!(sgd.momentum >= 0.0 && sgd.momentum < 1.0)) throw ConfigError("ddqn.momentum must lie in [0, 1)");
  if (batch_size < 1) throw ConfigError("ddqn.batch_size must be >= 1");
  if (buffer_capacity < batch_size) throw ConfigError("ddqn.buffer_capacity must be >= batch_size");
  if (sync_every < 1) throw ConfigError("ddqn.target_sync_every must be >= 1");
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("ddqn.tau must lie in (0, 1]");
  if (train_every < 1) throw ConfigError("ddqn.train_every must be >= 1");
  for (int h : hidden) {
    if (h < 1) throw ConfigError("ddqn.hidden sizes must be >= 1");
  }
}

DdqnAgent::DdqnAgent(int input_dim, int n_actions, AgentConfig config, std::uint64_t seed)
    : config_(std::move(config)),
      init_rng_(make_rng(seed, Stream::kNetworkInit)),
      explore_rng_(make_rng(seed, Stream::kExploration)),
      buffer_(config_.buffer_capacity, seed),
      optimizer_(config_.sgd) {
  config_.validate();
  std::vector<int> sizes{input_dim};
  sizes.insert(sizes.end(), config_.hidden.begin(), config_.hidden.end());
  sizes.push_back(n_actions);
  eval_ = QNetwork::random(sizes, config_.activation, init_rng_);
  target_ = eval_;
}

int DdqnAgent::act(std::span<const double> state, double epsilon) {
  return select_action(eval_, state, epsilon, explore_rng_);
}

int DdqnAgent::greedy_action(std::span<const double> state) const {
  return argmax(predict_q(eval_, state));
}

std::optional<double> DdqnAgent::observe(Transition transition) {
  if (transition.action >= eval_.output_dim()) throw ContractViolation("DdqnAgent: action out of range");
  buffer_.push(std::move(transition));
  ++env_steps_;
  if (buffer_.size() < std::max(config_.learning_starts, config_.batch_size)) return std::nullopt;
  if (env_steps_ % static_cast<std::size_t>(config_.train_every) != 0) return std::nullopt;

  auto loss = train_step(eval_, target_, buffer_, config_.batch_size, config_.gamma, optimizer_);
  if (!loss) return std::nullopt;
  ++train_steps_;
  if (config_.sync_mode == SyncMode::kSoft) {
    soft_sync(eval_, target_, config_.tau);
  } else if (train_steps_ % static_cast<std::size_t>(config_.sync_every) == 0) {
    hard_sync(eval_, target_);
  }
  if (!eval_.all_finite()) throw SimulationCorruption("DdqnAgent: non-finite network parameters");
  return loss;
}

}  // namespace hv2i::ddqn
