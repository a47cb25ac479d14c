#include "phev/harness.hpp"

#include <charconv>
#include <sstream>

#include <fmt/format.h>
#include <fmt/os.h>

namespace phev {

namespace {

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    int v = 0;
    auto b = item.find_first_not_of(' ');
    auto e = item.find_last_not_of(' ');
    if (b == std::string::npos) throw ConfigError(fmt::format("bad integer list '{}'", text));
    item = item.substr(b, e - b + 1);
    auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc{} || ptr != item.data() + item.size()) {
      throw ConfigError(fmt::format("bad integer list '{}'", text));
    }
    out.push_back(v);
  }
  return out;
}

std::size_t non_negative(long long v, const char* what) {
  if (v < 0) throw ConfigError(fmt::format("{} must be non-negative", what));
  return static_cast<std::size_t>(v);
}

std::uint64_t soc_draw_seed(std::uint64_t seed) { return mix_seed(seed ^ 0x5ec0ffeeULL); }

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error(fmt::format("cannot create output directory {}: {}", dir.string(), ec.message()));
}

PdqnAgent agent_from(const ExperimentConfig& cfg) {
  if (cfg.checkpoint.empty()) throw ConfigError("an agent checkpoint is required (--checkpoint)");
  if (!std::filesystem::exists(cfg.checkpoint)) {
    throw ConfigError(fmt::format("checkpoint not found: {}", cfg.checkpoint.string()));
  }
  return load_agent(cfg.checkpoint, cfg.powertrain.engine.max_torque());
}

}  // namespace

void ExperimentConfig::validate() const {
  try {
    reward.validate();
    dp.validate();
    rules.validate();
    agent.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (repeats < 1) throw ConfigError("repeats must be at least 1");
  if (soc_init && !(*soc_init >= 0.0 && *soc_init <= 1.0)) throw ConfigError("soc must be in [0, 1]");
  if (controller != "cdcs" && controller != "agent" && controller != "dp") {
    throw ConfigError(fmt::format("unknown controller '{}' (expected cdcs, agent or dp)", controller));
  }
  if (train_steps < 1 || checkpoint_every < 0) throw ConfigError("train steps must be positive");
}

std::optional<double> parse_soc(const std::string& text) {
  if (text == "random") return std::nullopt;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size() || !(v >= 0.0 && v <= 1.0)) {
    throw ConfigError(fmt::format("soc must be 'random' or a number in [0, 1], got '{}'", text));
  }
  return v;
}

ExperimentConfig load_experiment(const ConfigFile& file) {
  ExperimentConfig cfg;
  cfg.powertrain = load_powertrain(file);

  const auto& ex = file.section("experiment");
  cfg.cycle = ex.string("cycle", cfg.cycle);
  if (cfg.cycle != "synth") cfg.cycle = file.resolve(cfg.cycle).string();
  cfg.synth_seed = static_cast<std::uint64_t>(ex.integer("synth_seed", 0));
  if (auto u = ex.text("unit")) {
    try {
      cfg.unit = parse_speed_unit(*u);
    } catch (const CycleError& e) {
      throw ConfigError(e.what());
    }
  }
  cfg.repeats = static_cast<int>(ex.integer("repeats", cfg.repeats));
  if (auto s = ex.text("soc")) cfg.soc_init = parse_soc(*s);
  if (ex.has("seed")) cfg.seed = static_cast<std::uint64_t>(ex.integer("seed", 0));
  cfg.out_dir = ex.string("out", cfg.out_dir.string());
  cfg.controller = ex.string("controller", cfg.controller);
  if (auto c = ex.text("checkpoint")) cfg.checkpoint = file.resolve(*c);

  const auto& rw = file.section("reward");
  auto& r = cfg.reward;
  r.fuel_price = rw.number("fuel_price", r.fuel_price);
  r.elec_price = rw.number("elec_price", r.elec_price);
  r.battery_eff = rw.number("battery_eff", r.battery_eff);
  r.charger_eff = rw.number("charger_eff", r.charger_eff);
  r.penalty_max = rw.number("penalty_max", r.penalty_max);
  r.soc_low = rw.number("soc_low", r.soc_low);
  r.soc_high = rw.number("soc_high", r.soc_high);
  r.fuel_density = rw.number("fuel_density", r.fuel_density);
  cfg.scale.speed = rw.number("state_speed_scale", cfg.scale.speed);
  cfg.scale.torque = rw.number("state_torque_scale", cfg.scale.torque);

  const auto& dp = file.section("dp");
  auto& d = cfg.dp;
  d.soc_points = non_negative(dp.integer("soc_points", static_cast<long long>(d.soc_points)), "soc_points");
  d.soc_min = dp.number("soc_min", d.soc_min);
  d.soc_max = dp.number("soc_max", d.soc_max);
  d.torque_points = non_negative(dp.integer("torque_points", static_cast<long long>(d.torque_points)), "torque_points");
  d.torque_max = cfg.powertrain.engine.max_torque();
  d.allow_engaged = dp.flag("allow_engaged", d.allow_engaged);
  d.infeasible_cost = dp.number("infeasible_cost", d.infeasible_cost);
  d.workers = static_cast<unsigned>(non_negative(dp.integer("workers", 0), "workers"));
  const double target = dp.number("terminal_soc", d.soc_min);
  const double weight = dp.number("terminal_weight", 0.0);
  if (weight > 0.0) d.terminal_cost = [target, weight](double soc) { return weight * std::max(0.0, target - soc); };

  const auto& ru = file.section("rules");
  cfg.rules.soc_cd_floor = ru.number("soc_cd_floor", cfg.rules.soc_cd_floor);
  cfg.rules.soc_ceiling = ru.number("soc_ceiling", cfg.rules.soc_ceiling);
  cfg.rules.v_parallel = ru.number("v_parallel_kmh", cfg.rules.v_parallel * 3.6) / 3.6;
  cfg.rules.min_torque_margin = ru.number("min_torque_margin", cfg.rules.min_torque_margin);

  const auto& ag = file.section("agent");
  auto& h = cfg.agent;
  h.gamma = ag.number("gamma", h.gamma);
  h.tau = ag.number("tau", h.tau);
  h.lr_actor = ag.number("lr_actor", h.lr_actor);
  h.lr_critic = ag.number("lr_critic", h.lr_critic);
  h.buffer_capacity = non_negative(ag.integer("buffer_capacity", static_cast<long long>(h.buffer_capacity)), "buffer_capacity");
  h.batch = non_negative(ag.integer("batch", static_cast<long long>(h.batch)), "batch");
  h.warmup = non_negative(ag.integer("warmup", static_cast<long long>(h.warmup)), "warmup");
  h.sigma_explore = ag.number("sigma_explore", h.sigma_explore);
  h.sigma_target = ag.number("sigma_target", h.sigma_target);
  h.noise_clip = ag.number("noise_clip", h.noise_clip);
  h.policy_delay = static_cast<int>(ag.integer("policy_delay", h.policy_delay));
  h.eps_start = ag.number("eps_start", h.eps_start);
  h.eps_end = ag.number("eps_end", h.eps_end);
  h.eps_decay_steps = ag.integer("eps_decay_steps", h.eps_decay_steps);
  if (auto hidden = ag.text("hidden")) h.hidden = parse_int_list(*hidden);
  h.reward_scale = ag.number("reward_scale", h.reward_scale);

  const auto& tr = file.section("train");
  cfg.train_steps = tr.integer("steps", cfg.train_steps);
  cfg.checkpoint_every = tr.integer("checkpoint_every", cfg.checkpoint_every);

  file.check_consumed();
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) { return load_experiment(ConfigFile::load(path)); }

DriveCycle build_cycle(const ExperimentConfig& cfg) {
  DriveCycle base = cfg.cycle == "synth" ? synth_cycle(cfg.synth_seed) : load_cycle(cfg.cycle, cfg.unit);
  return repeat(base, cfg.repeats);
}

double resolve_soc(const ExperimentConfig& cfg) {
  if (cfg.soc_init) return *cfg.soc_init;
  if (!cfg.seed) throw ConfigError("a random initial soc needs --seed");
  Rng rng(soc_draw_seed(*cfg.seed));
  return rng.uniform(kRandomSocLow, kRandomSocHigh);
}

const ControllerResult& ComparisonReport::find(const std::string& name) const {
  for (const auto& r : results) {
    if (r.name == name) return r;
  }
  throw std::out_of_range(fmt::format("no result for controller '{}'", name));
}

void write_summary(const RolloutTotals& t, double soc_init, const std::filesystem::path& path) {
  auto out = fmt::output_file(path.string());
  out.print("soc_init={}\n", soc_init);
  out.print("steps={}\n", t.steps);
  out.print("cost_cny={}\n", t.cost_cny);
  out.print("fuel_l={}\n", t.fuel_l);
  out.print("electricity_kwh={}\n", t.electricity_kwh);
  out.print("engagement_pct={}\n", t.engagement_pct);
  out.print("reward={}\n", t.reward);
  out.print("soc_final={}\n", t.soc_final);
  out.print("soc_in_bounds_pct={}\n", t.soc_in_bounds_pct);
  out.print("violations={}\n", t.violations);
}

void write_operating_points(const Rollout& r, const Powertrain& pt, const std::filesystem::path& engine,
                            const std::filesystem::path& motor) {
  auto e = fmt::output_file(engine.string());
  e.print("t,speed_rpm,torque_nm,bsfc\n");
  auto m = fmt::output_file(motor.string());
  m.print("t,speed_rpm,torque_nm,efficiency\n");
  for (const auto& row : r.trace) {
    const auto& s = row.step;
    if (s.engine_torque > 0.0 && s.engine_speed > 0.0) {
      e.print("{},{},{},{}\n", row.t, rad_s_to_rpm(s.engine_speed), s.engine_torque,
              pt.engine.bsfc()(s.engine_speed, s.engine_torque));
    }
    if (s.motor_torque != 0.0) {
      m.print("{},{},{},{}\n", row.t, rad_s_to_rpm(s.motor_speed), s.motor_torque,
              pt.motor.efficiency(s.motor_speed, s.motor_torque));
    }
  }
}

SimulateResult cmd_simulate(const ExperimentConfig& cfg) {
  const auto cycle = build_cycle(cfg);
  const double soc = resolve_soc(cfg);
  EmsEnv env(cfg.powertrain, cycle, cfg.reward, cfg.scale);
  ensure_dir(cfg.out_dir);
  SimulateResult res;
  if (cfg.controller == "cdcs") {
    CdcsController ctl(cfg.powertrain, cfg.rules);
    res.rollout = rollout(ctl, env, soc);
  } else if (cfg.controller == "agent") {
    auto agent = agent_from(cfg);
    AgentController ctl(agent);
    res.rollout = rollout(ctl, env, soc);
  } else {
    res.rollout = solve_dp(env, cfg.dp, soc).trajectory;
  }
  res.trace = cfg.out_dir / fmt::format("trace_{}.csv", cfg.controller);
  write_trace_csv(res.rollout, res.trace);
  write_soc_csv(res.rollout, cfg.out_dir / fmt::format("soc_{}.csv", cfg.controller));
  write_summary(res.rollout.totals, soc, cfg.out_dir / fmt::format("summary_{}.txt", cfg.controller));
  return res;
}

DpSolution cmd_dp(const ExperimentConfig& cfg) {
  const auto cycle = build_cycle(cfg);
  const double soc = resolve_soc(cfg);
  EmsEnv env(cfg.powertrain, cycle, cfg.reward, cfg.scale);
  ensure_dir(cfg.out_dir);
  auto sol = solve_dp(env, cfg.dp, soc);
  write_trace_csv(sol.trajectory, cfg.out_dir / "trace_dp.csv");
  write_soc_csv(sol.trajectory, cfg.out_dir / "soc_dp.csv");
  write_cost_to_go_csv(sol, cfg.out_dir / "cost_to_go.csv");
  write_summary(sol.trajectory.totals, soc, cfg.out_dir / "summary_dp.txt");
  return sol;
}

std::vector<EpisodeRecord> cmd_train(const ExperimentConfig& cfg) {
  if (!cfg.seed) throw ConfigError("train needs --seed");
  EmsEnv env(cfg.powertrain, build_cycle(cfg), cfg.reward, cfg.scale);
  ensure_dir(cfg.out_dir);
  Trainer trainer(env, cfg.agent, *cfg.seed);
  if (!cfg.checkpoint.empty()) trainer.load_checkpoint(cfg.checkpoint);
  TrainOptions opt;
  opt.total_steps = cfg.train_steps;
  opt.checkpoint_every = cfg.checkpoint_every;
  opt.checkpoint_dir = cfg.out_dir / "checkpoints";
  trainer.run(opt);
  write_learning_curve_csv(trainer.curve(), cfg.out_dir / "learning_curve.csv");
  trainer.save_checkpoint(cfg.out_dir / "agent.json");
  return trainer.curve();
}

ComparisonReport cmd_compare(const ExperimentConfig& cfg) {
  const auto cycle = build_cycle(cfg);
  const double soc = resolve_soc(cfg);
  auto agent = agent_from(cfg);
  EmsEnv env(cfg.powertrain, cycle, cfg.reward, cfg.scale);
  ensure_dir(cfg.out_dir);

  ComparisonReport report;
  report.soc_init = soc;
  report.cycle = cycle.name;

  const auto sol = solve_dp(env, cfg.dp, soc);
  write_cost_to_go_csv(sol, cfg.out_dir / "cost_to_go.csv");
  AgentController agent_ctl(agent);
  CdcsController rules(cfg.powertrain, cfg.rules);
  const std::vector<std::pair<std::string, Rollout>> runs{
      {"dp", sol.trajectory}, {"agent", rollout(agent_ctl, env, soc)}, {"cdcs", rollout(rules, env, soc)}};

  const double dp_cost = sol.trajectory.totals.cost_cny;
  for (const auto& [name, run] : runs) {
    write_trace_csv(run, cfg.out_dir / fmt::format("trace_{}.csv", name));
    write_soc_csv(run, cfg.out_dir / fmt::format("soc_{}.csv", name));
    write_operating_points(run, cfg.powertrain, cfg.out_dir / fmt::format("engine_points_{}.csv", name),
                           cfg.out_dir / fmt::format("motor_points_{}.csv", name));
    report.results.push_back({name, run.totals, 100.0 * (run.totals.cost_cny - dp_cost) / dp_cost});
  }
  save_map_csv(cfg.powertrain.engine.bsfc(), cfg.out_dir / "bsfc_map.csv");
  save_map_csv(cfg.powertrain.motor.efficiency_map(), cfg.out_dir / "motor_efficiency_map.csv");
  write_report(report, cfg.out_dir / "report.csv", cfg.out_dir / "report.txt");
  return report;
}

void write_report(const ComparisonReport& r, const std::filesystem::path& csv, const std::filesystem::path& text) {
  {
    auto out = fmt::output_file(csv.string());
    out.print("controller,cost_cny,fuel_l,electricity_kwh,engagement_pct,gap_pct,soc_final,soc_in_bounds_pct\n");
    for (const auto& c : r.results) {
      out.print("{},{},{},{},{},{},{},{}\n", c.name, c.totals.cost_cny, c.totals.fuel_l, c.totals.electricity_kwh,
                c.totals.engagement_pct, c.gap_pct, c.totals.soc_final, c.totals.soc_in_bounds_pct);
    }
  }
  auto out = fmt::output_file(text.string());
  out.print("cycle {}  initial soc {}\n\n", r.cycle, r.soc_init);
  out.print("{:<10}{:>12}{:>10}{:>14}{:>12}{:>10}\n", "controller", "cost CNY", "fuel L", "battery kWh", "clutch %",
            "gap %");
  for (const auto& c : r.results) {
    out.print("{:<10}{:>12.4f}{:>10.4f}{:>14.4f}{:>12.2f}{:>10.2f}\n", c.name, c.totals.cost_cny, c.totals.fuel_l,
              c.totals.electricity_kwh, c.totals.engagement_pct, c.gap_pct);
  }
}

std::string cmd_cycle_info(const ExperimentConfig& cfg) {
  const auto c = build_cycle(cfg);
  double max_accel = 0.0;
  for (std::size_t t = 0; t + 1 < c.size(); ++t) max_accel = std::max(max_accel, std::abs(c.accel(t)));
  return fmt::format(
      "name={}\nsamples={}\nduration_s={}\nrepeats={}\nmax_speed_ms={}\nmax_abs_accel_ms2={}\ndistance_m={}\n"
      "checksum={:016x}\n",
      c.name, c.size(), static_cast<double>(c.size() - 1) * c.dt, c.repeats, c.max_speed(), max_accel, c.distance(),
      cycle_checksum(c));
}

}  // namespace phev
