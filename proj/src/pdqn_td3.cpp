#include "phev/pdqn_td3.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include <fmt/format.h>
#include <fmt/os.h>

namespace phev {

namespace {

constexpr const char* kCheckpointFormat = "phev-ems-agent";

// Stream ids mixed into the master seed.
enum Stream : std::uint64_t { kInit = 1, kExplore = 2, kReplay = 3, kTarget = 4, kEnv = 5 };

std::uint64_t stream_seed(std::uint64_t seed, Stream s) { return mix_seed(mix_seed(seed) ^ s); }

std::vector<int> layer_sizes(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> sizes{in};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  return sizes;
}

}  // namespace

// ---------------------------------------------------------------- hyperparameters

void AgentHyperparams::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must be in [0, 1]");
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("tau must be in [0, 1]");
  if (!(lr_actor > 0.0 && lr_critic > 0.0)) throw std::invalid_argument("learning rates must be positive");
  if (!(batch >= 1 && batch <= warmup && warmup <= buffer_capacity)) {
    throw std::invalid_argument("hyperparameters must satisfy 1 <= batch <= warmup <= buffer_capacity");
  }
  if (policy_delay < 1) throw std::invalid_argument("policy_delay must be at least 1");
  if (!(noise_clip > 0.0)) throw std::invalid_argument("noise_clip must be positive");
  if (!(sigma_explore >= 0.0 && sigma_target >= 0.0)) throw std::invalid_argument("noise scales must be non-negative");
  if (!(eps_start >= 0.0 && eps_start <= 1.0 && eps_end >= 0.0 && eps_end <= 1.0 && eps_decay_steps >= 0)) {
    throw std::invalid_argument("epsilon schedule must stay within [0, 1]");
  }
  if (hidden.empty()) throw std::invalid_argument("at least one hidden layer is required");
  if (!(reward_scale > 0.0)) throw std::invalid_argument("reward_scale must be positive");
}

nlohmann::json AgentHyperparams::to_json() const {
  return {{"gamma", gamma},
          {"tau", tau},
          {"lr_actor", lr_actor},
          {"lr_critic", lr_critic},
          {"buffer_capacity", buffer_capacity},
          {"batch", batch},
          {"warmup", warmup},
          {"sigma_explore", sigma_explore},
          {"sigma_target", sigma_target},
          {"noise_clip", noise_clip},
          {"policy_delay", policy_delay},
          {"eps_start", eps_start},
          {"eps_end", eps_end},
          {"eps_decay_steps", eps_decay_steps},
          {"hidden", hidden},
          {"reward_scale", reward_scale}};
}

AgentHyperparams AgentHyperparams::from_json(const nlohmann::json& j) {
  AgentHyperparams hp;
  hp.gamma = j.at("gamma").get<double>();
  hp.tau = j.at("tau").get<double>();
  hp.lr_actor = j.at("lr_actor").get<double>();
  hp.lr_critic = j.at("lr_critic").get<double>();
  hp.buffer_capacity = j.at("buffer_capacity").get<std::size_t>();
  hp.batch = j.at("batch").get<std::size_t>();
  hp.warmup = j.at("warmup").get<std::size_t>();
  hp.sigma_explore = j.at("sigma_explore").get<double>();
  hp.sigma_target = j.at("sigma_target").get<double>();
  hp.noise_clip = j.at("noise_clip").get<double>();
  hp.policy_delay = j.at("policy_delay").get<int>();
  hp.eps_start = j.at("eps_start").get<double>();
  hp.eps_end = j.at("eps_end").get<double>();
  hp.eps_decay_steps = j.at("eps_decay_steps").get<long long>();
  hp.hidden = j.at("hidden").get<std::vector<int>>();
  hp.reward_scale = j.at("reward_scale").get<double>();
  hp.validate();
  return hp;
}

// ---------------------------------------------------------------- networks

AgentNets AgentNets::create(const AgentHyperparams& hp, Rng& rng) {
  AgentNets n;
  n.actor = Mlp(layer_sizes(kStateDim, hp.hidden, kDiscreteActions), Activation::tanh);
  n.critic1 = Mlp(layer_sizes(kStateDim + kDiscreteActions, hp.hidden, kDiscreteActions), Activation::linear);
  n.critic2 = n.critic1;
  n.actor.init(rng);
  n.critic1.init(rng);
  n.critic2.init(rng);
  n.actor_target = n.actor;
  n.critic1_target = n.critic1;
  n.critic2_target = n.critic2;
  n.actor_opt = Adam(n.actor, hp.lr_actor);
  n.critic1_opt = Adam(n.critic1, hp.lr_critic);
  n.critic2_opt = Adam(n.critic2, hp.lr_critic);
  return n;
}

nlohmann::json AgentNets::to_json() const {
  return {{"actor", actor.to_json()},
          {"critic1", critic1.to_json()},
          {"critic2", critic2.to_json()},
          {"actor_target", actor_target.to_json()},
          {"critic1_target", critic1_target.to_json()},
          {"critic2_target", critic2_target.to_json()},
          {"actor_opt", actor_opt.to_json()},
          {"critic1_opt", critic1_opt.to_json()},
          {"critic2_opt", critic2_opt.to_json()}};
}

AgentNets AgentNets::from_json(const nlohmann::json& j) {
  AgentNets n;
  n.actor = Mlp::from_json(j.at("actor"));
  n.critic1 = Mlp::from_json(j.at("critic1"));
  n.critic2 = Mlp::from_json(j.at("critic2"));
  n.actor_target = Mlp::from_json(j.at("actor_target"));
  n.critic1_target = Mlp::from_json(j.at("critic1_target"));
  n.critic2_target = Mlp::from_json(j.at("critic2_target"));
  n.actor_opt = Adam::from_json(j.at("actor_opt"));
  n.critic1_opt = Adam::from_json(j.at("critic1_opt"));
  n.critic2_opt = Adam::from_json(j.at("critic2_opt"));
  return n;
}

// ---------------------------------------------------------------- replay

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw std::invalid_argument("replay capacity must be positive");
}

void ReplayBuffer::push(const Transition& t) {
  if (data_.size() < capacity_) {
    data_.push_back(t);
    return;
  }
  data_[head_] = t;
  head_ = (head_ + 1) % capacity_;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  if (i >= data_.size()) throw std::out_of_range("replay index out of range");
  return data_[(head_ + i) % data_.size()];
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t n, Rng& rng) const {
  if (n > data_.size()) throw std::invalid_argument("cannot sample more transitions than stored");
  std::vector<std::size_t> out;
  out.reserve(n);
  while (out.size() < n) {
    const auto k = static_cast<std::size_t>(rng.below(data_.size()));
    if (std::find(out.begin(), out.end(), k) == out.end()) out.push_back(k);
  }
  return out;
}

// ---------------------------------------------------------------- agent

PdqnAgent::PdqnAgent(const AgentHyperparams& hp, std::uint64_t seed, double max_engine_torque)
    : hp_(hp),
      max_torque_(max_engine_torque),
      explore_rng_(stream_seed(seed, kExplore)),
      replay_rng_(stream_seed(seed, kReplay)),
      target_rng_(stream_seed(seed, kTarget)) {
  hp_.validate();
  Rng init(stream_seed(seed, kInit));
  nets_ = AgentNets::create(hp_, init);
}

double PdqnAgent::epsilon(long long env_step) const {
  if (hp_.eps_decay_steps <= 0 || env_step >= hp_.eps_decay_steps) return hp_.eps_end;
  const double frac = static_cast<double>(env_step) / static_cast<double>(hp_.eps_decay_steps);
  return hp_.eps_start + (hp_.eps_end - hp_.eps_start) * frac;
}

Eigen::MatrixXd PdqnAgent::q_values(const Mlp& critic, const Eigen::MatrixXd& states,
                                    const Eigen::MatrixXd& params) const {
  Eigen::MatrixXd in(kStateDim + kDiscreteActions, states.cols());
  in << states, params;
  return critic.predict(in);
}

AgentAction PdqnAgent::act(const Observation& s, bool explore, double epsilon) {
  Eigen::MatrixXd state(kStateDim, 1);
  state << s[0], s[1], s[2];
  Eigen::MatrixXd x = nets_.actor.predict(state);
  if (explore) {
    for (int k = 0; k < kDiscreteActions; ++k) {
      x(k, 0) = std::clamp(x(k, 0) + explore_rng_.normal(0.0, hp_.sigma_explore), -1.0, 1.0);
    }
  }
  AgentAction out;
  if (explore && explore_rng_.uniform() < epsilon) {
    out.discrete = static_cast<int>(explore_rng_.below(kDiscreteActions));
  } else {
    const Eigen::MatrixXd q = q_values(nets_.critic1, state, x);
    out.discrete = 0;
    for (int k = 1; k < kDiscreteActions; ++k) {
      if (q(k, 0) > q(out.discrete, 0)) out.discrete = k;
    }
  }
  for (int k = 0; k < kDiscreteActions; ++k) out.params[k] = x(k, 0);
  out.action.engine_torque = to_torque(x(out.discrete, 0));
  out.action.clutch = out.discrete == 1 ? Clutch::engaged : Clutch::open;
  return out;
}

Eigen::VectorXd PdqnAgent::compute_target(const std::vector<const Transition*>& batch) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  Eigen::MatrixXd next(kStateDim, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (int d = 0; d < kStateDim; ++d) next(d, j) = batch[j]->next_state[d];
  }
  Eigen::MatrixXd x = nets_.actor_target.predict(next);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (int k = 0; k < kDiscreteActions; ++k) {
      const double noise = std::clamp(target_rng_.normal(0.0, hp_.sigma_target), -hp_.noise_clip, hp_.noise_clip);
      x(k, j) = std::clamp(x(k, j) + noise, -1.0, 1.0);
    }
  }
  last_target_params_ = x;
  const Eigen::MatrixXd q = q_values(nets_.critic1_target, next, x).cwiseMin(q_values(nets_.critic2_target, next, x));
  Eigen::VectorXd y(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double best = q.col(j).maxCoeff();
    y[j] = batch[j]->reward + (batch[j]->done ? 0.0 : hp_.gamma * best);
  }
  return y;
}

Losses PdqnAgent::update(const ReplayBuffer& buffer) {
  if (buffer.size() < hp_.warmup || buffer.size() < hp_.batch) return {};
  const auto idx = buffer.sample_indices(hp_.batch, replay_rng_);
  std::vector<const Transition*> batch;
  batch.reserve(idx.size());
  for (auto i : idx) batch.push_back(&buffer.at(i));
  return update_on(batch);
}

Losses PdqnAgent::update_on(const std::vector<const Transition*>& batch) {
  if (batch.empty()) return {};
  const auto n = static_cast<Eigen::Index>(batch.size());
  const double inv_n = 1.0 / static_cast<double>(n);
  Eigen::MatrixXd input(kStateDim + kDiscreteActions, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (int d = 0; d < kStateDim; ++d) input(d, j) = batch[j]->state[d];
    for (int k = 0; k < kDiscreteActions; ++k) input(kStateDim + k, j) = batch[j]->params[k];
  }
  const Eigen::VectorXd y = compute_target(batch);

  Losses out;
  out.updated = true;
  auto fit = [&](Mlp& critic, Adam& opt) {
    const Eigen::MatrixXd q = critic.forward(input);
    Eigen::MatrixXd upstream = Eigen::MatrixXd::Zero(q.rows(), q.cols());
    double loss = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const int k = batch[j]->discrete;
      const double diff = q(k, j) - y[j];
      loss += 0.5 * diff * diff * inv_n;
      upstream(k, j) = diff * inv_n;
    }
    opt.step(critic, critic.backward(upstream));
    return loss;
  };
  out.critic1 = fit(nets_.critic1, nets_.critic1_opt);
  out.critic2 = fit(nets_.critic2, nets_.critic2_opt);
  ++updates_;

  if (updates_ % hp_.policy_delay == 0) {
    const Eigen::MatrixXd states = input.topRows(kStateDim);
    const Eigen::MatrixXd x = nets_.actor.forward(states);
    Eigen::MatrixXd critic_in(kStateDim + kDiscreteActions, n);
    critic_in << states, x;
    const Eigen::MatrixXd q = nets_.critic1.forward(critic_in);
    out.actor = -q.sum() * inv_n;
    Eigen::MatrixXd grad_in;
    nets_.critic1.backward(Eigen::MatrixXd::Constant(q.rows(), q.cols(), -inv_n), &grad_in);
    const Eigen::MatrixXd grad_x = grad_in.bottomRows(kDiscreteActions);
    nets_.actor_opt.step(nets_.actor, nets_.actor.backward(grad_x));
    nets_.actor_target.soft_update_from(nets_.actor, hp_.tau);
    nets_.critic1_target.soft_update_from(nets_.critic1, hp_.tau);
    nets_.critic2_target.soft_update_from(nets_.critic2, hp_.tau);
  }
  return out;
}

nlohmann::json PdqnAgent::to_json() const {
  return {{"hyperparams", hp_.to_json()},
          {"max_torque", max_torque_},
          {"nets", nets_.to_json()},
          {"updates", updates_},
          {"rng", {{"explore", explore_rng_.serialize()},
                   {"replay", replay_rng_.serialize()},
                   {"target", target_rng_.serialize()}}}};
}

void PdqnAgent::load_json(const nlohmann::json& j) {
  hp_ = AgentHyperparams::from_json(j.at("hyperparams"));
  max_torque_ = j.at("max_torque").get<double>();
  nets_ = AgentNets::from_json(j.at("nets"));
  updates_ = j.at("updates").get<long long>();
  explore_rng_.deserialize(j.at("rng").at("explore").get<std::string>());
  replay_rng_.deserialize(j.at("rng").at("replay").get<std::string>());
  target_rng_.deserialize(j.at("rng").at("target").get<std::string>());
}

HybridAction AgentController::act(const EnvState& s) {
  return agent_->act(normalize(s, scale_), false, 0.0).action;
}

// ---------------------------------------------------------------- training loop

Trainer::Trainer(EmsEnv& env, const AgentHyperparams& hp, std::uint64_t seed)
    : env_(&env),
      agent_(hp, seed, env.powertrain().engine.max_torque()),
      buffer_(hp.buffer_capacity),
      env_rng_(stream_seed(seed, kEnv)),
      seed_(seed) {}

void Trainer::run(const TrainOptions& opt) {
  const auto& hp = agent_.hyperparams();
  if (opt.total_steps < static_cast<long long>(hp.warmup)) {
    throw std::invalid_argument("total_steps must be at least the warmup size");
  }
  long long next_checkpoint =
      opt.checkpoint_every > 0 ? (steps_ / opt.checkpoint_every + 1) * opt.checkpoint_every : -1;
  while (steps_ < opt.total_steps) {
    const double soc0 = env_->reset_random(env_rng_).soc;
    double ret = 0.0;
    Losses last;
    while (!env_->done() && steps_ < opt.total_steps) {
      const Observation obs = env_->observe();
      const auto a = agent_.act(obs, true, agent_.epsilon(steps_));
      const auto r = env_->step(a.action);
      buffer_.push(Transition{obs, a.params, a.discrete, r.cost.reward * hp.reward_scale, env_->observe(), r.done});
      ret += r.cost.reward;
      ++steps_;
      if (buffer_.size() > hp.warmup) {
        const auto l = agent_.update(buffer_);
        if (l.updated) last = l;
      }
    }
    if (!env_->done()) break;  // budget ran out mid-episode
    ++episodes_;
    curve_.push_back({episodes_, steps_, ret, soc0});
    if (opt.on_episode) opt.on_episode(curve_.back(), last);
    if (next_checkpoint > 0 && steps_ >= next_checkpoint) {
      std::filesystem::create_directories(opt.checkpoint_dir);
      save_checkpoint(opt.checkpoint_dir / fmt::format("checkpoint_{:09d}.json", steps_));
      next_checkpoint = (steps_ / opt.checkpoint_every + 1) * opt.checkpoint_every;
    }
  }
}

void Trainer::save_checkpoint(const std::filesystem::path& path) const {
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& e : curve_) curve.push_back({e.episode, e.steps, e.return_cny, e.soc_init});
  nlohmann::json j{{"format", kCheckpointFormat},
                   {"version", kCheckpointVersion},
                   {"agent", agent_.to_json()},
                   {"trainer", {{"seed", seed_},
                                {"steps", steps_},
                                {"episodes", episodes_},
                                {"env_rng", env_rng_.serialize()},
                                {"curve", curve}}}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot write checkpoint {}", path.string()));
  out << j.dump(1) << '\n';
}

namespace {

nlohmann::json read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open checkpoint {}", path.string()));
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(fmt::format("{}: {}", path.string(), e.what()));
  }
  if (j.value("format", "") != kCheckpointFormat) {
    throw std::runtime_error(fmt::format("{} is not an agent checkpoint", path.string()));
  }
  if (j.value("version", 0) != kCheckpointVersion) {
    throw std::runtime_error(fmt::format("{}: unsupported checkpoint version", path.string()));
  }
  return j;
}

}  // namespace

void Trainer::load_checkpoint(const std::filesystem::path& path) {
  const auto j = read_checkpoint(path);
  agent_.load_json(j.at("agent"));
  const auto& t = j.at("trainer");
  seed_ = t.at("seed").get<std::uint64_t>();
  steps_ = t.at("steps").get<long long>();
  episodes_ = t.at("episodes").get<long long>();
  env_rng_.deserialize(t.at("env_rng").get<std::string>());
  curve_.clear();
  for (const auto& e : t.at("curve")) {
    curve_.push_back({e.at(0).get<long long>(), e.at(1).get<long long>(), e.at(2).get<double>(), e.at(3).get<double>()});
  }
  buffer_ = ReplayBuffer(agent_.hyperparams().buffer_capacity);
}

PdqnAgent load_agent(const std::filesystem::path& path, double max_engine_torque) {
  const auto j = read_checkpoint(path);
  PdqnAgent agent(AgentHyperparams::from_json(j.at("agent").at("hyperparams")), 0, max_engine_torque);
  agent.load_json(j.at("agent"));
  return agent;
}

void write_learning_curve_csv(const std::vector<EpisodeRecord>& curve, const std::filesystem::path& path) {
  auto out = fmt::output_file(path.string());
  out.print("episode,steps,return_cny,soc_init\n");
  for (const auto& e : curve) out.print("{},{},{},{}\n", e.episode, e.steps, e.return_cny, e.soc_init);
}

}  // namespace phev
