#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "phev/ems_env.hpp"
#include "phev/neural.hpp"
#include "phev/rng.hpp"

namespace phev {

inline constexpr int kStateDim = 3;
inline constexpr int kDiscreteActions = 2;  // clutch open, clutch engaged

struct AgentHyperparams {
  double gamma = 0.99;
  double tau = 0.001;
  double lr_actor = 1e-4;
  double lr_critic = 1e-3;
  std::size_t buffer_capacity = 200000;
  std::size_t batch = 128;
  std::size_t warmup = 512;
  double sigma_explore = 0.02;
  double sigma_target = 0.05;
  double noise_clip = 0.1;
  int policy_delay = 2;
  double eps_start = 1.0;
  double eps_end = 0.05;
  long long eps_decay_steps = 50000;
  std::vector<int> hidden{64, 64};
  double reward_scale = 100.0;  // rewards are multiplied by this before storage

  void validate() const;
  nlohmann::json to_json() const;
  static AgentHyperparams from_json(const nlohmann::json& j);
};

/// Online and target networks plus optimizer state.
struct AgentNets {
  Mlp actor;       // state -> one continuous parameter per discrete action, tanh head
  Mlp critic1;     // state ++ all parameters -> one Q per discrete action
  Mlp critic2;
  Mlp actor_target;
  Mlp critic1_target;
  Mlp critic2_target;
  Adam actor_opt;
  Adam critic1_opt;
  Adam critic2_opt;

  static AgentNets create(const AgentHyperparams& hp, Rng& rng);
  nlohmann::json to_json() const;
  static AgentNets from_json(const nlohmann::json& j);
};

/// Fixed-capacity FIFO of transitions.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(const Transition& t);
  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  // i = 0 is the oldest stored transition.
  const Transition& at(std::size_t i) const;
  // Distinct indices (oldest-first numbering) drawn uniformly.
  std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;  // next slot to overwrite once full
  std::vector<Transition> data_;
};

struct Losses {
  bool updated = false;
  double critic1 = 0.0;
  double critic2 = 0.0;
  std::optional<double> actor;
};

struct AgentAction {
  HybridAction action;
  std::array<double, kDiscreteActions> params{};
  int discrete = 0;
};

/// Parametrized-action agent with twin critics, target smoothing and
/// delayed actor updates.
class PdqnAgent {
 public:
  PdqnAgent(const AgentHyperparams& hp, std::uint64_t seed, double max_engine_torque = 120.0);

  AgentAction act(const Observation& s, bool explore, double epsilon);
  double epsilon(long long env_step) const;

  // Continuous parameters to engine torque: (x + 1) / 2 * max.
  double to_torque(double x) const { return 0.5 * (x + 1.0) * max_torque_; }

  // TD targets for a batch (ordered like `batch`). Draws smoothing noise from the target stream.
  Eigen::VectorXd compute_target(const std::vector<const Transition*>& batch);
  // Critic Q-values, kDiscreteActions x n, for states and parameter vectors.
  Eigen::MatrixXd q_values(const Mlp& critic, const Eigen::MatrixXd& states, const Eigen::MatrixXd& params) const;

  // One gradient step on a sampled batch; a no-op before warmup.
  Losses update(const ReplayBuffer& buffer);
  // Same, on an explicit batch (used by update and by tests).
  Losses update_on(const std::vector<const Transition*>& batch);

  AgentNets& nets() { return nets_; }
  const AgentNets& nets() const { return nets_; }
  const AgentHyperparams& hyperparams() const { return hp_; }
  long long update_count() const { return updates_; }

  Rng& explore_rng() { return explore_rng_; }
  Rng& replay_rng() { return replay_rng_; }
  Rng& target_rng() { return target_rng_; }

  nlohmann::json to_json() const;
  void load_json(const nlohmann::json& j);

  // Last smoothed target parameters, kDiscreteActions x n (for checks).
  const Eigen::MatrixXd& last_target_params() const { return last_target_params_; }

 private:
  AgentHyperparams hp_;
  double max_torque_;
  AgentNets nets_;
  Rng explore_rng_;
  Rng replay_rng_;
  Rng target_rng_;
  long long updates_ = 0;
  Eigen::MatrixXd last_target_params_;
};

/// Greedy evaluation of a trained agent.
class AgentController : public Controller {
 public:
  explicit AgentController(PdqnAgent& agent) : agent_(&agent) {}
  void begin_episode(const EmsEnv& env) override { scale_ = env.scale(); }
  HybridAction act(const EnvState& s) override;

 private:
  PdqnAgent* agent_;
  StateScale scale_;
};

struct EpisodeRecord {
  long long episode = 0;
  long long steps = 0;  // cumulative environment steps at episode end
  double return_cny = 0.0;
  double soc_init = 0.0;
};

struct TrainOptions {
  long long total_steps = 170000;
  long long checkpoint_every = 0;  // env steps; 0 disables
  std::filesystem::path checkpoint_dir;
  // Called at the end of every episode.
  std::function<void(const EpisodeRecord&, const Losses&)> on_episode;
};

/// Training loop state. Checkpoints are written at the first episode
/// boundary after each `checkpoint_every` steps, so resuming always starts
/// a fresh episode; the replay buffer is not saved.
class Trainer {
 public:
  Trainer(EmsEnv& env, const AgentHyperparams& hp, std::uint64_t seed);

  void run(const TrainOptions& opt);

  PdqnAgent& agent() { return agent_; }
  const std::vector<EpisodeRecord>& curve() const { return curve_; }
  long long steps() const { return steps_; }
  long long episodes() const { return episodes_; }
  const ReplayBuffer& buffer() const { return buffer_; }

  void save_checkpoint(const std::filesystem::path& path) const;
  void load_checkpoint(const std::filesystem::path& path);

 private:
  EmsEnv* env_;
  PdqnAgent agent_;
  ReplayBuffer buffer_;
  Rng env_rng_;
  std::uint64_t seed_;
  long long steps_ = 0;
  long long episodes_ = 0;
  std::vector<EpisodeRecord> curve_;
};

inline constexpr int kCheckpointVersion = 1;

// `episode,steps,return_cny,soc_init`
void write_learning_curve_csv(const std::vector<EpisodeRecord>& curve, const std::filesystem::path& path);

// Loads just the agent (networks, hyperparameters, RNG state) from a checkpoint.
PdqnAgent load_agent(const std::filesystem::path& path, double max_engine_torque = 120.0);

}  // namespace phev
