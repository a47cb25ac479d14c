#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <fmt/format.h>

#include "phev/pdqn_td3.hpp"

using namespace phev;
using doctest::Approx;
using Eigen::MatrixXd;

namespace {

const Powertrain& pt() {
  static const Powertrain p = Powertrain::defaults();
  return p;
}

Transition make_transition(Rng& rng, bool done = false) {
  Transition t;
  for (auto& v : t.state) v = rng.uniform(-1, 1);
  for (auto& v : t.next_state) v = rng.uniform(-1, 1);
  for (auto& v : t.params) v = rng.uniform(-1, 1);
  t.discrete = static_cast<int>(rng.below(2));
  t.reward = rng.uniform(-0.05, 0.0);
  t.done = done;
  return t;
}

std::vector<const Transition*> pointers(const std::vector<Transition>& v) {
  std::vector<const Transition*> out;
  for (const auto& t : v) out.push_back(&t);
  return out;
}

// Constant critic: zero weights in the last layer, output bias q.
void make_constant(Mlp& critic, double q0, double q1) {
  critic.weights().back().setZero();
  critic.biases().back() << q0, q1;
}

DriveCycle short_cycle() {
  DriveCycle c = synth_cycle(0);
  c.speeds.resize(40);
  c.speeds.back() = c.speeds[c.speeds.size() - 2];
  return c;
}

}  // namespace

TEST_SUITE("pdqn_td3") {

TEST_CASE("hyperparameter defaults and validation") {
  AgentHyperparams hp;
  CHECK(hp.gamma == 0.99);
  CHECK(hp.tau == 0.001);
  CHECK(hp.buffer_capacity == 200000);
  CHECK(hp.batch == 128);
  CHECK(hp.warmup == 512);
  CHECK(hp.sigma_explore == 0.02);
  CHECK(hp.hidden == std::vector<int>{64, 64});
  CHECK_NOTHROW(hp.validate());
  hp.batch = 1024;
  CHECK_THROWS(hp.validate());
  hp = {};
  hp.policy_delay = 0;
  CHECK_THROWS(hp.validate());
  hp = {};
  auto back = AgentHyperparams::from_json(hp.to_json());
  CHECK(back.to_json() == hp.to_json());
}

TEST_CASE("network shapes") {
  PdqnAgent agent({}, 1);
  CHECK(agent.nets().actor.sizes() == std::vector<int>{3, 64, 64, 2});
  CHECK(agent.nets().critic1.sizes() == std::vector<int>{5, 64, 64, 2});
  CHECK(agent.nets().actor.output_activation() == Activation::tanh);
  CHECK(agent.nets().critic2.output_activation() == Activation::linear);
  CHECK(agent.nets().actor_target == agent.nets().actor);
  CHECK(agent.nets().critic1_target == agent.nets().critic1);
}

TEST_CASE("epsilon schedule") {
  PdqnAgent agent({}, 1);
  CHECK(agent.epsilon(0) == 1.0);
  CHECK(agent.epsilon(25000) == Approx(0.525));
  CHECK(agent.epsilon(50000) == Approx(0.05));
  CHECK(agent.epsilon(900000) == Approx(0.05));
}

TEST_CASE("action selection") {
  PdqnAgent agent({}, 3);
  const Observation s{0.3, 0.1, 0.6};
  int engaged = 0;
  for (int k = 0; k < 1000; ++k) engaged += agent.act(s, true, 1.0).discrete;
  CHECK(engaged / 1000.0 == Approx(0.5).epsilon(0.1));

  make_constant(agent.nets().critic1, 1.0, 0.0);
  for (int k = 0; k < 200; ++k) CHECK(agent.act(s, true, 0.0).action.clutch == Clutch::open);

  auto a = agent.act(s, false, 0.0), b = agent.act(s, false, 0.0);
  CHECK(a.action.engine_torque == b.action.engine_torque);
  CHECK(a.discrete == b.discrete);
  CHECK(a.action.engine_torque >= 0.0);
  CHECK(a.action.engine_torque <= 120.0);
  CHECK(agent.to_torque(-1.0) == 0.0);
  CHECK(agent.to_torque(1.0) == 120.0);
}

TEST_CASE("greedy choice is invariant to a common offset") {
  PdqnAgent agent({}, 4);
  Rng rng(1);
  std::vector<Observation> states(50);
  for (auto& s : states) s = {rng.uniform(0, 1), rng.uniform(-0.5, 0.5), rng.uniform(0.3, 0.9)};
  std::vector<int> before;
  for (const auto& s : states) before.push_back(agent.act(s, false, 0.0).discrete);
  agent.nets().critic1.biases().back().array() += 3.25;
  agent.nets().critic2.biases().back().array() += 3.25;
  for (std::size_t i = 0; i < states.size(); ++i) CHECK(agent.act(states[i], false, 0.0).discrete == before[i]);
}

TEST_CASE("targets: identical critics, zero noise, terminal samples") {
  AgentHyperparams hp;
  hp.sigma_target = 0.0;
  PdqnAgent agent(hp, 5);
  Rng rng(2);
  std::vector<Transition> batch;
  for (int k = 0; k < 16; ++k) batch.push_back(make_transition(rng, k % 4 == 0));
  auto& n = agent.nets();
  n.critic2_target = n.critic1_target;
  auto y = agent.compute_target(pointers(batch));

  MatrixXd next(3, 16);
  for (int j = 0; j < 16; ++j)
    for (int d = 0; d < 3; ++d) next(d, j) = batch[j].next_state[d];
  const MatrixXd mu = n.actor_target.predict(next);
  CHECK(agent.last_target_params() == mu);
  const MatrixXd q = agent.q_values(n.critic1_target, next, mu);
  for (int j = 0; j < 16; ++j) {
    const double expect = batch[j].done ? batch[j].reward : batch[j].reward + 0.99 * q.col(j).maxCoeff();
    CHECK(y[j] == Approx(expect).epsilon(1e-14));
  }
}

TEST_CASE("target on a hand-built network") {
  AgentHyperparams hp;
  hp.hidden = {2};
  hp.sigma_target = 0.0;
  hp.gamma = 0.5;
  PdqnAgent agent(hp, 6);
  auto& n = agent.nets();
  n.actor_target.weights()[0].setZero();
  n.actor_target.biases()[0] << 0.2, 0.0;
  n.actor_target.weights()[1] << 1.0, 0.0, 0.0, 1.0;
  n.actor_target.biases()[1] << 0.0, 0.0;  // hidden relu(0.2), relu(0) -> x = tanh(0.2), tanh(0)
  for (Mlp* c : {&n.critic1_target, &n.critic2_target}) {
    c->weights()[0].setZero();
    c->weights()[0](0, 3) = 1.0;  // hidden0 = relu(x_0)
    c->weights()[0](1, 2) = 1.0;  // hidden1 = relu(soc)
    c->biases()[0].setZero();
  }
  n.critic1_target.weights()[1] << 2.0, 0.0, 0.0, 1.0;
  n.critic1_target.biases()[1] << 0.0, 0.1;
  n.critic2_target.weights()[1] << 1.0, 0.0, 0.0, 3.0;
  n.critic2_target.biases()[1] << 0.0, 0.0;

  Transition t;
  t.next_state = {0.4, -0.1, 0.6};
  t.reward = -0.02;
  const double x0 = std::tanh(0.2);
  // critic1: (2 x0, 0.6 + 0.1); critic2: (x0, 1.8); min: (x0, 0.7); max over k: 0.7
  const double expect = -0.02 + 0.5 * std::max(std::min(2 * x0, x0), std::min(0.7, 1.8));
  CHECK(agent.compute_target({&t})[0] == Approx(expect).epsilon(1e-14));
}

TEST_CASE("clipped double-Q never exceeds either critic alone") {
  PdqnAgent agent({}, 7);
  Rng rng(3);
  std::vector<Transition> batch;
  for (int k = 0; k < 128; ++k) batch.push_back(make_transition(rng));
  auto& n = agent.nets();
  Rng other(99);
  n.critic2_target.init(other);

  const Rng saved = agent.target_rng();
  auto y = agent.compute_target(pointers(batch));
  const Mlp c1 = n.critic1_target, c2 = n.critic2_target;
  for (const Mlp* only : {&c1, &c2}) {
    n.critic1_target = *only;
    n.critic2_target = *only;
    agent.target_rng() = saved;
    auto yi = agent.compute_target(pointers(batch));
    for (int j = 0; j < 128; ++j) REQUIRE(y[j] <= yi[j]);
  }
}

TEST_CASE("target smoothing stays within the clip") {
  AgentHyperparams hp;
  hp.sigma_target = 1.0;  // heavy noise so the clip is active
  PdqnAgent agent(hp, 8);
  Rng rng(4);
  std::vector<Transition> batch;
  for (int k = 0; k < 256; ++k) batch.push_back(make_transition(rng));
  agent.compute_target(pointers(batch));
  MatrixXd next(3, 256);
  for (int j = 0; j < 256; ++j)
    for (int d = 0; d < 3; ++d) next(d, j) = batch[j].next_state[d];
  const MatrixXd mu = agent.nets().actor_target.predict(next);
  const MatrixXd gap = (agent.last_target_params() - mu).cwiseAbs();
  CHECK(gap.maxCoeff() <= hp.noise_clip + 1e-15);
  CHECK(agent.last_target_params().cwiseAbs().maxCoeff() <= 1.0);
}

TEST_CASE("replay buffer is FIFO") {
  ReplayBuffer buf(100);
  Rng rng(5);
  std::vector<Transition> all;
  for (int k = 0; k < 137; ++k) {
    all.push_back(make_transition(rng));
    all.back().reward = k;
    buf.push(all.back());
  }
  REQUIRE(buf.size() == 100);
  for (std::size_t i = 0; i < 100; ++i) CHECK(buf.at(i).reward == all[37 + i].reward);
  auto idx = buf.sample_indices(100, rng);
  std::sort(idx.begin(), idx.end());
  CHECK(std::adjacent_find(idx.begin(), idx.end()) == idx.end());
  CHECK_THROWS(buf.sample_indices(101, rng));
}

TEST_CASE("update is a no-op before warmup") {
  PdqnAgent agent({}, 9);
  ReplayBuffer buf(1000);
  Rng rng(6);
  for (int k = 0; k < 511; ++k) buf.push(make_transition(rng));
  const Mlp before = agent.nets().critic1;
  CHECK_FALSE(agent.update(buf).updated);
  CHECK(agent.nets().critic1 == before);
  buf.push(make_transition(rng));
  CHECK(agent.update(buf).updated);
}

TEST_CASE("perfect critics have zero loss") {
  AgentHyperparams hp;
  hp.gamma = 0.0;
  PdqnAgent agent(hp, 10);
  Rng rng(7);
  std::vector<Transition> batch;
  for (int k = 0; k < 32; ++k) {
    batch.push_back(make_transition(rng));
    batch.back().reward = -0.25;
  }
  make_constant(agent.nets().critic1, -0.25, -0.25);
  make_constant(agent.nets().critic2, -0.25, -0.25);
  auto l = agent.update_on(pointers(batch));
  CHECK(l.critic1 == 0.0);
  CHECK(l.critic2 == 0.0);
}

TEST_CASE("delayed actor updates") {
  PdqnAgent agent({}, 11);
  Rng rng(8);
  std::vector<Transition> batch;
  for (int k = 0; k < 64; ++k) batch.push_back(make_transition(rng));
  const auto b = pointers(batch);
  const Mlp actor0 = agent.nets().actor, target0 = agent.nets().critic1_target;
  const Mlp critic0 = agent.nets().critic1;
  auto l1 = agent.update_on(b);
  CHECK_FALSE(l1.actor.has_value());
  CHECK(agent.nets().actor == actor0);
  CHECK(agent.nets().critic1_target == target0);
  CHECK_FALSE(agent.nets().critic1 == critic0);
  auto l2 = agent.update_on(b);
  CHECK(l2.actor.has_value());
  CHECK_FALSE(agent.nets().actor == actor0);
  CHECK_FALSE(agent.nets().critic1_target == target0);
  const Mlp actor2 = agent.nets().actor;
  agent.update_on(b);
  CHECK(agent.nets().actor == actor2);
}

TEST_CASE("single-transition update matches a hand gradient step") {
  AgentHyperparams hp;
  hp.gamma = 0.0;
  PdqnAgent agent(hp, 12);
  Rng rng(9);
  Transition t = make_transition(rng);
  t.discrete = 1;
  MatrixXd in(5, 1);
  in << t.state[0], t.state[1], t.state[2], t.params[0], t.params[1];
  const double q = agent.nets().critic1.predict(in)(1, 0);
  const double diff = q - t.reward;  // dL/dQ for L = 1/2 diff^2
  const auto b_before = agent.nets().critic1.biases().back();
  agent.update_on({&t});
  const auto b_after = agent.nets().critic1.biases().back();
  // First Adam step moves each parameter by lr * g / (|g| + eps).
  CHECK(b_after[1] - b_before[1] == Approx(-1e-3 * diff / (std::abs(diff) + 1e-8)).epsilon(1e-9));
  CHECK(b_after[0] == b_before[0]);
}

TEST_CASE("critic regresses onto a deterministic reward with gamma 0") {
  AgentHyperparams hp;
  hp.gamma = 0.0;
  hp.batch = 64;
  hp.warmup = 64;
  PdqnAgent agent(hp, 13);
  ReplayBuffer buf(2000);
  Rng rng(10);
  const Observation states[2] = {{0.2, 0.1, 0.5}, {0.8, -0.3, 0.7}};
  const double reward[2][2] = {{0.3, -0.2}, {-0.4, 0.1}};
  for (int k = 0; k < 2000; ++k) {
    Transition t;
    const int s = static_cast<int>(rng.below(2));
    t.state = states[s];
    t.next_state = states[1 - s];
    t.params = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    t.discrete = static_cast<int>(rng.below(2));
    t.reward = reward[s][t.discrete];
    buf.push(t);
  }
  for (int k = 0; k < 5000; ++k) agent.update(buf);
  double worst = 0.0;
  for (std::size_t i = 0; i < buf.size(); i += 97) {
    const auto& t = buf.at(i);
    MatrixXd s(3, 1), x(2, 1);
    s << t.state[0], t.state[1], t.state[2];
    x << t.params[0], t.params[1];
    worst = std::max(worst, std::abs(agent.q_values(agent.nets().critic1, s, x)(t.discrete, 0) - t.reward));
  }
  CHECK(worst <= 1e-2);
}

TEST_CASE("training loop") {
  EmsEnv env(pt(), short_cycle());
  AgentHyperparams hp;
  hp.warmup = 128;
  hp.batch = 32;

  SUBCASE("warmup budget performs no updates but records the curve") {
    Trainer tr(env, hp, 1);
    TrainOptions opt;
    opt.total_steps = 128;
    tr.run(opt);
    CHECK(tr.agent().update_count() == 0);
    CHECK(tr.curve().size() == 128 / env.episode_length());
  }

  SUBCASE("same seed, same curve") {
    TrainOptions opt;
    opt.total_steps = 600;
    Trainer a(env, hp, 21), b(env, hp, 21), c(env, hp, 22);
    a.run(opt);
    b.run(opt);
    c.run(opt);
    REQUIRE(a.curve().size() == b.curve().size());
    for (std::size_t i = 0; i < a.curve().size(); ++i) CHECK(a.curve()[i].return_cny == b.curve()[i].return_cny);
    CHECK(a.curve().back().return_cny != c.curve().back().return_cny);
    CHECK(a.agent().nets().actor == b.agent().nets().actor);
  }

  SUBCASE("checkpoints resume with a monotone step counter") {
    auto dir = std::filesystem::temp_directory_path() / "phev_train_tests";
    std::filesystem::remove_all(dir);
    TrainOptions opt;
    opt.total_steps = 400;
    opt.checkpoint_every = 150;
    opt.checkpoint_dir = dir;
    Trainer a(env, hp, 5);
    a.run(opt);
    CHECK(std::filesystem::exists(dir / fmt::format("checkpoint_{:09d}.json", 156)));
    a.save_checkpoint(dir / "last.json");

    Trainer b(env, hp, 5);
    b.load_checkpoint(dir / "last.json");
    CHECK(b.steps() == a.steps());
    CHECK(b.curve().size() == a.curve().size());
    CHECK(b.agent().nets().actor == a.agent().nets().actor);
    CHECK(b.agent().nets().critic2_opt == a.agent().nets().critic2_opt);
    opt.total_steps = 700;
    opt.checkpoint_every = 0;
    b.run(opt);
    CHECK(b.steps() >= 700 - static_cast<long long>(env.episode_length()));
    for (std::size_t i = 1; i < b.curve().size(); ++i) CHECK(b.curve()[i].steps > b.curve()[i - 1].steps);

    auto agent = load_agent(dir / "last.json");
    CHECK(agent.nets().actor == a.agent().nets().actor);
  }
}

TEST_CASE("learning curve csv has one row per episode") {
  std::vector<EpisodeRecord> curve{{1, 39, -0.5, 0.4}, {2, 78, -0.4, 0.7}};
  auto p = std::filesystem::temp_directory_path() / "phev_curve.csv";
  write_learning_curve_csv(curve, p);
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  CHECK(line == "episode,steps,return_cny,soc_init");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 2);
}

}
