#include <doctest.h>

#include <array>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <random>
#include <vector>

#include "hv2i/ddqn.hpp"
#include "hv2i/errors.hpp"
#include "ddqn_oracles.hpp"

using namespace hv2i;
using namespace hv2i::ddqn;
using oracle::Chain;

namespace {

Transition make_transition(std::vector<double> s, int a, double r, std::vector<double> s2, bool term) {
  return Transition{std::move(s), a, r, std::move(s2), term};
}

}  // namespace

TEST_CASE("network construction and forward pass") {
  QNetwork zero({7, 4, 3}, Activation::kRelu);
  const std::vector<double> s = {0.2, 0.4, 0, 0, 1, 0, 0};
  CHECK(predict_q(zero, s) == Eigen::VectorXd::Zero(3));
  CHECK(zero.parameter_count() == 7 * 4 + 4 + 4 * 3 + 3);
  CHECK_THROWS_AS(predict_q(zero, std::vector<double>(6, 0.0)), ContractViolation);
  CHECK_THROWS_AS(QNetwork({7}, Activation::kRelu), ContractViolation);

  QNetwork lin({3, 3}, Activation::kRelu);
  lin.layers()[0].weight << 1, 2, 3, 4, 5, 6, 7, 8, 9;
  const auto q = predict_q(lin, std::vector<double>{1, 0, 0});
  CHECK(q == lin.layers()[0].weight.col(0));

  std::mt19937_64 rng(5);
  std::normal_distribution<double> n01;
  for (auto act : {Activation::kRelu, Activation::kLeakyRelu, Activation::kTanh}) {
    for (int trial = 0; trial < 50; ++trial) {
      const QNetwork net = QNetwork::random({7, 16, 8, 3}, act, rng);
      std::vector<double> x(7);
      for (auto& v : x) v = n01(rng);
      const auto got = predict_q(net, x);
      const auto expect = oracle::forward(net, x);
      for (int i = 0; i < 3; ++i) CHECK(got(i) == doctest::Approx(expect[static_cast<std::size_t>(i)]).epsilon(1e-12));
    }
  }
}

TEST_CASE("random init is fan-in scaled with zero biases") {
  std::mt19937_64 rng(9);
  const QNetwork net = QNetwork::random({7, 64, 3}, Activation::kRelu, rng);
  CHECK(net.layers()[0].weight.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(7.0));
  CHECK(net.layers()[1].weight.cwiseAbs().maxCoeff() <= 1.0 / 8.0);
  CHECK(net.layers()[0].bias.isZero());
  CHECK(net.all_finite());
}

TEST_CASE("argmax and epsilon-greedy selection") {
  Eigen::VectorXd v(3);
  v << 1, 3, 2;
  CHECK(argmax(v) == 1);
  v << 5, 5, 1;
  CHECK(argmax(v) == 0);

  QNetwork net({1, 3}, Activation::kRelu);
  net.layers()[0].bias << 1, 3, 2;
  std::mt19937_64 rng(1);
  const std::vector<double> s = {0.0};
  for (int i = 0; i < 100; ++i) CHECK(select_action(net, s, 0.0, rng) == 1);
  CHECK_THROWS_AS(select_action(net, s, 1.5, rng), ContractViolation);

  std::array<int, 3> counts{};
  const int n = 10'000;
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(select_action(net, s, 1.0, rng))];
  const double mean = n / 3.0;
  const double sigma = std::sqrt(n * (1.0 / 3.0) * (2.0 / 3.0));
  for (int c : counts) CHECK(std::abs(c - mean) < 3.0 * sigma);
}

TEST_CASE("backprop gradients match central finite differences") {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> n01;
  double worst = 0.0;
  for (auto act : {Activation::kTanh, Activation::kRelu, Activation::kLeakyRelu}) {
    for (int trial = 0; trial < 10; ++trial) {
      QNetwork net = QNetwork::random({5, 6, 4, 3}, act, rng);
      for (auto& l : net.layers()) {
        for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = 0.1 * n01(rng);
      }
      const int batch = 8;
      Eigen::MatrixXd states(5, batch);
      for (Eigen::Index i = 0; i < states.size(); ++i) states.data()[i] = n01(rng);
      std::vector<int> actions(batch);
      for (auto& a : actions) a = std::uniform_int_distribution<int>(0, 2)(rng);
      Eigen::VectorXd targets(batch);
      for (Eigen::Index i = 0; i < batch; ++i) targets(i) = n01(rng);

      const auto lg = mse_loss_and_gradients(net, states, actions, targets);
      CHECK(lg.loss == doctest::Approx(oracle::loss_of(net, states, actions, targets)).epsilon(1e-12));

      worst = std::max(worst, oracle::fd_worst_relative_error(net, states, actions, targets, lg));
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("compute_target") {
  QNetwork eval({2, 2}, Activation::kRelu);
  QNetwork target({2, 2}, Activation::kRelu);
  // eval prefers action 1 in state (0,1); target values that action at 4
  eval.layers()[0].weight << 1, 0, 0, 2;
  target.layers()[0].weight << 10, 3, 0, 4;
  std::vector<Transition> batch = {
      make_transition({1, 0}, 0, 5.0, {0, 1}, true),
      make_transition({1, 0}, 0, 1.0, {0, 1}, false),
      make_transition({0, 1}, 1, 2.0, {1, 0}, false),
  };
  const auto y = compute_target(batch, eval, target, 0.5);
  CHECK(y(0) == 5.0);
  // argmax eval(0,1) = action 1, target value 4 (not the target's own max 3)
  CHECK(y(1) == doctest::Approx(1.0 + 0.5 * 4.0));
  // argmax eval(1,0) = action 0, target value 10
  CHECK(y(2) == doctest::Approx(2.0 + 0.5 * 10.0));
  const auto y0 = compute_target(batch, eval, target, 0.0);
  CHECK(y0(1) == 1.0);
  CHECK(y0(2) == 2.0);
  CHECK_THROWS_AS(compute_target(batch, eval, target, 1.0), ContractViolation);
}

TEST_CASE("train step no-ops and exact fits") {
  QNetwork net({2, 2}, Activation::kRelu);
  QNetwork target = net;
  ReplayBuffer buffer(16, 3);
  SgdOptimizer opt;
  CHECK_FALSE(train_step(net, target, buffer, 4, 0.9, opt).has_value());

  // zero net, zero rewards, terminal: predictions equal targets
  for (int i = 0; i < 4; ++i) buffer.push(make_transition({1, 0}, 0, 0.0, {0, 1}, true));
  const QNetwork before = net;
  const auto loss = train_step(net, target, buffer, 4, 0.9, opt);
  REQUIRE(loss.has_value());
  CHECK(*loss == 0.0);
  CHECK(net == before);
}

TEST_CASE("repeated training on one transition drives the loss to zero") {
  std::mt19937_64 rng(21);
  QNetwork net = QNetwork::random({3, 8, 2}, Activation::kTanh, rng);
  QNetwork target = net;
  ReplayBuffer buffer(1, 4);
  buffer.push(make_transition({0.3, -0.2, 0.5}, 1, 2.0, {0, 0, 0}, true));
  SgdOptimizer opt({0.05, 0.0, 10.0});
  double prev = 1e300;
  for (int i = 0; i < 500; ++i) {
    const double l = *train_step(net, target, buffer, 1, 0.9, opt);
    CHECK(l <= prev);
    prev = l;
  }
  CHECK(prev < 1e-8);
}

TEST_CASE("target sync") {
  std::mt19937_64 rng(2);
  const QNetwork eval = QNetwork::random({3, 4, 3}, Activation::kRelu, rng);
  QNetwork target = QNetwork::random({3, 4, 3}, Activation::kRelu, rng);
  QNetwork soft = target;
  soft_sync(eval, soft, 1.0);
  hard_sync(eval, target);
  CHECK(target == eval);
  CHECK(soft == eval);

  QNetwork e({1, 1}, Activation::kRelu), t({1, 1}, Activation::kRelu);
  e.layers()[0].weight(0, 0) = 0.0;
  t.layers()[0].weight(0, 0) = 2.0;
  soft_sync(e, t, 0.5);
  CHECK(t.layers()[0].weight(0, 0) == 1.0);

  QNetwork other({3, 5, 3}, Activation::kRelu);
  CHECK_THROWS_AS(hard_sync(eval, other), ContractViolation);
  CHECK_THROWS_AS(soft_sync(eval, other, 0.1), ContractViolation);
}

TEST_CASE("gradient clipping bounds the step") {
  QNetwork net({1, 1}, Activation::kRelu);
  Gradients g(1);
  g[0].weight = Eigen::MatrixXd::Constant(1, 1, 300.0);
  g[0].bias = Eigen::VectorXd::Constant(1, 400.0);
  SgdOptimizer opt({1.0, 0.0, 10.0});
  opt.apply(net, g);
  CHECK(net.layers()[0].weight(0, 0) == doctest::Approx(-6.0));
  CHECK(net.layers()[0].bias(0) == doctest::Approx(-8.0));
}

TEST_CASE("replay buffer ring and sampling") {
  ReplayBuffer buf(5, 1);
  for (int i = 0; i < 8; ++i) buf.push(make_transition({static_cast<double>(i)}, 0, i, {0}, false));
  CHECK(buf.size() == 5);
  std::vector<double> rewards;
  for (std::size_t i = 0; i < buf.size(); ++i) rewards.push_back(buf.at(i).reward);
  std::sort(rewards.begin(), rewards.end());
  CHECK(rewards == std::vector<double>{3, 4, 5, 6, 7});

  for (int i = 0; i < 200; ++i) {
    auto idx = buf.sample_indices(5);
    std::sort(idx.begin(), idx.end());
    CHECK(std::adjacent_find(idx.begin(), idx.end()) == idx.end());
  }
  CHECK_THROWS_AS(buf.sample_indices(6), ContractViolation);
  CHECK_THROWS_AS(buf.push(make_transition({0}, 0, NAN, {0}, false)), ContractViolation);
}

TEST_CASE("replay sampling is uniform (chi-square)") {
  const std::size_t n = 100;
  ReplayBuffer buf(n, 77);
  for (std::size_t i = 0; i < n; ++i) buf.push(make_transition({0}, 0, 0, {0}, false));
  std::vector<int> counts(n, 0);
  const int draws = 100'000;
  for (int i = 0; i < draws / 10; ++i) {
    for (auto k : buf.sample_indices(10)) ++counts[k];
  }
  const double expect = static_cast<double>(draws) / n;
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - expect) * (c - expect) / expect;
  // Sampling without replacement lowers the variance slightly, so this is
  // conservative. It is the 0.99 quantile of chi-square with 99 dof.
  CHECK(chi2 < 134.642);
}

TEST_CASE("chain MDP converges to the value-iteration Q*") {
  const auto start = std::chrono::steady_clock::now();
  const double gamma = 0.9;
  const auto q_star = oracle::chain_q_star(gamma);

  DdqnAgent agent = oracle::train_chain(gamma, 123, 5);
  double worst = 0.0;
  for (int s = 0; s < 3; ++s) {
    const auto q = predict_q(agent.eval_net(), oracle::Chain::onehot(s));
    for (int a = 0; a < 2; ++a) worst = std::max(worst, std::abs(q(a) - q_star[s][a]) / std::abs(q_star[s][a]));
  }
  CHECK(worst < 0.05);
  CHECK(agent.greedy_action(oracle::Chain::onehot(0)) == 1);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(secs < 60.0);
}

TEST_CASE("agent is deterministic for a fixed seed") {
  auto run = [] {
    AgentConfig cfg;
    cfg.hidden = {16};
    cfg.batch_size = 8;
    cfg.learning_starts = 8;
    cfg.sync_every = 10;
    DdqnAgent agent(3, 2, cfg, 99);
    std::vector<double> losses;
    std::mt19937_64 rng(1);
    for (int t = 0; t < 300; ++t) {
      const int s = static_cast<int>(rng() % 3);
      const int a = agent.act(Chain::onehot(s), 0.5);
      const auto st = Chain::step(s, a);
      if (auto l = agent.observe(make_transition(Chain::onehot(s), a, st.reward, Chain::onehot(st.next), st.terminal))) {
        losses.push_back(*l);
      }
    }
    return losses;
  };
  const auto a = run();
  const auto b = run();
  CHECK(a.size() > 200);
  CHECK(a == b);
}

TEST_CASE("soft-sync agent tracks the eval net") {
  AgentConfig cfg;
  cfg.hidden = {4};
  cfg.batch_size = 4;
  cfg.learning_starts = 4;
  cfg.sync_mode = SyncMode::kSoft;
  cfg.tau = 1.0;
  DdqnAgent agent(3, 2, cfg, 7);
  for (int t = 0; t < 10; ++t) agent.observe(make_transition(Chain::onehot(t % 3), t % 2, 1.0, Chain::onehot(0), false));
  CHECK(agent.train_steps() == 7);
  CHECK(agent.target_net() == agent.eval_net());
  CHECK_THROWS_AS(agent.observe(make_transition(Chain::onehot(0), 2, 0.0, Chain::onehot(0), false)), ContractViolation);
}

TEST_CASE("agent config validation") {
  AgentConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.gamma = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = AgentConfig{};
  cfg.buffer_capacity = 10;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = AgentConfig{};
  cfg.tau = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("checkpoint round trip") {
  std::mt19937_64 rng(31);
  for (auto act : {Activation::kRelu, Activation::kLeakyRelu, Activation::kTanh}) {
    const QNetwork net = QNetwork::random({7, 5, 3}, act, rng);
    const std::string bytes = serialize_checkpoint(net);
    CHECK(deserialize_checkpoint(bytes) == net);
    CHECK(deserialize_checkpoint(bytes).activation() == act);
  }
  const QNetwork net = QNetwork::random({7, 5, 3}, Activation::kRelu, rng);
  const auto path = std::filesystem::temp_directory_path() / "hv2i_test_ckpt.bin";
  save_checkpoint(net, path);
  CHECK(load_checkpoint(path) == net);
  std::filesystem::remove(path);

  std::string bytes = serialize_checkpoint(net);
  CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), IoError);
  CHECK_THROWS_AS(deserialize_checkpoint("no header"), IoError);
  CHECK_THROWS_AS(deserialize_checkpoint("{\"format\":\"other\"}\n"), IoError);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/ckpt.bin"), IoError);
}
