#include "cav/harness.hpp"

#include <algorithm>
#include <array>
#include <climits>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "cav/checkpoint.hpp"
#include "cav/comms.hpp"
#include "cav/encoder.hpp"

namespace fs = std::filesystem;

namespace cav::harness {

namespace {

std::string fmt_g(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

std::string fmt_f(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

const char* onoff(bool b) { return b ? "on" : "off"; }

const char* role_name(scen::Role r) {
  switch (r) {
    case scen::Role::cav: return "cav";
    case scen::Role::ucv: return "ucv";
    default: return "hazv";
  }
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return {};
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

double parse_double(const std::string& field, const std::string& v) {
  try {
    std::size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return d;
  } catch (const std::exception&) {
    throw ConfigError(field, "expected a number, got '" + v + "'");
  }
}

int parse_int(const std::string& field, const std::string& v) {
  try {
    std::size_t pos = 0;
    long long n = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    if (n < INT_MIN || n > INT_MAX) throw std::out_of_range("int");
    return int(n);
  } catch (const std::exception&) {
    throw ConfigError(field, "expected an integer, got '" + v + "'");
  }
}

std::uint64_t parse_u64(const std::string& field, const std::string& v) {
  try {
    if (!v.empty() && v.front() == '-') throw std::invalid_argument("negative");
    std::size_t pos = 0;
    unsigned long long n = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return n;
  } catch (const std::exception&) {
    throw ConfigError(field, "expected a non-negative integer, got '" + v + "'");
  }
}

bool parse_bool(const std::string& field, const std::string& v) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw ConfigError(field, "expected on/off, got '" + v + "'");
}

void apply_key(RunConfig& c, const std::string& section, const std::string& key,
               const std::string& val) {
  std::string field = section.empty() ? key : section + "." + key;
  if (section == "run") {
    if (key == "scenario") {
      try {
        c.scenario = scen::kind_from_name(val);
      } catch (const std::exception&) {
        throw ConfigError(field, "unknown scenario '" + val + "'");
      }
    } else if (key == "train_episodes") {
      c.train_episodes = parse_int(field, val);
    } else if (key == "eval_episodes") {
      c.eval_episodes = parse_int(field, val);
    } else if (key == "seed") {
      c.seed = parse_u64(field, val);
    } else if (key == "shield") {
      c.shield_on = parse_bool(field, val);
    } else if (key == "comm") {
      c.comm_on = parse_bool(field, val);
    } else if (key == "out") {
      c.out = val;
    } else if (key == "checkpoint") {
      c.checkpoint = val;
    } else {
      throw ConfigError(field, "unknown key");
    }
  } else if (section == "encoder") {
    if (key == "kind") {
      try {
        c.encoder = marl::encoder_from_name(val);
      } catch (const std::exception&) {
        throw ConfigError(field, "unknown encoder '" + val + "'");
      }
    } else {
      throw ConfigError(field, "unknown key");
    }
  } else if (section == "trainer") {
    marl::TrainerConfig& t = c.trainer;
    if (key == "gamma_r") t.gamma_r = parse_double(field, val);
    else if (key == "gamma_c") t.gamma_c = parse_double(field, val);
    else if (key == "zeta") t.zeta = parse_double(field, val);
    else if (key == "cycle_len") t.cycle_len = parse_int(field, val);
    else if (key == "batch") t.batch = parse_int(field, val);
    else if (key == "sigma") t.sigma = parse_double(field, val);
    else if (key == "rho") t.rho = parse_double(field, val);
    else if (key == "gamma_reg") t.gamma_reg = parse_double(field, val);
    else if (key == "critic_lr") t.critic_lr = parse_double(field, val);
    else if (key == "eps_start") t.eps_start = parse_double(field, val);
    else if (key == "eps_end") t.eps_end = parse_double(field, val);
    else if (key == "eps_frac") t.eps_frac = parse_double(field, val);
    else throw ConfigError(field, "unknown key");
  } else if (section == "shield") {
    shield::ShieldConfig& s = c.shield;
    if (key == "c1") s.c1 = parse_double(field, val);
    else if (key == "c2") s.c2 = parse_double(field, val);
    else if (key == "d") s.D = parse_double(field, val);
    else if (key == "gamma_cbf") s.gamma_cbf = parse_double(field, val);
    else if (key == "horizon_check") s.horizon_check = parse_int(field, val);
    else if (key == "keep_band") s.keep_band = parse_double(field, val);
    else throw ConfigError(field, "unknown key");
  } else {
    throw ConfigError(field, section.empty() ? "key outside any section" : "unknown section");
  }
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << text;
}

void write_configs(const RunConfig& c) {
  fs::create_directories(c.out);
  write_file(fs::path(c.out) / "default.cfg", serialize_config(RunConfig{}));
  write_file(fs::path(c.out) / "effective.cfg", serialize_config(c));
}

}  // namespace

std::string serialize_config(const RunConfig& c) {
  std::ostringstream s;
  s << "# cavsim run configuration: one key per line, sections in brackets\n";
  s << "[run]\n";
  s << "scenario = " << scen::kind_name(c.scenario) << "\n";
  s << "train_episodes = " << c.train_episodes << "\n";
  s << "eval_episodes = " << c.eval_episodes << "\n";
  s << "seed = " << c.seed << "\n";
  s << "shield = " << onoff(c.shield_on) << "\n";
  s << "comm = " << onoff(c.comm_on) << "\n";
  s << "out = " << c.out << "\n";
  s << "checkpoint = " << c.checkpoint << "\n";
  s << "\n[encoder]\n";
  s << "kind = " << marl::encoder_name(c.encoder) << "\n";
  const marl::TrainerConfig& t = c.trainer;
  s << "\n[trainer]\n";
  s << "gamma_r = " << fmt_g(t.gamma_r) << "\n";
  s << "gamma_c = " << fmt_g(t.gamma_c) << "\n";
  s << "zeta = " << fmt_g(t.zeta) << "\n";
  s << "cycle_len = " << t.cycle_len << "\n";
  s << "batch = " << t.batch << "\n";
  s << "sigma = " << fmt_g(t.sigma) << "\n";
  s << "rho = " << fmt_g(t.rho) << "\n";
  s << "gamma_reg = " << fmt_g(t.gamma_reg) << "\n";
  s << "critic_lr = " << fmt_g(t.critic_lr) << "\n";
  s << "eps_start = " << fmt_g(t.eps_start) << "\n";
  s << "eps_end = " << fmt_g(t.eps_end) << "\n";
  s << "eps_frac = " << fmt_g(t.eps_frac) << "\n";
  const shield::ShieldConfig& sh = c.shield;
  s << "\n[shield]\n";
  s << "c1 = " << fmt_g(sh.c1) << "\n";
  s << "c2 = " << fmt_g(sh.c2) << "\n";
  s << "d = " << fmt_g(sh.D) << "\n";
  s << "gamma_cbf = " << fmt_g(sh.gamma_cbf) << "\n";
  s << "horizon_check = " << sh.horizon_check << "\n";
  s << "keep_band = " << fmt_g(sh.keep_band) << "\n";
  return s.str();
}

void apply_config_file(RunConfig& c, const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config", "cannot open '" + path + "'");
  std::string line, section;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::string body = trim(line);
    if (body.empty()) continue;
    if (body.front() == '[') {
      if (body.back() != ']')
        throw ConfigError("config", "bad section header at line " + std::to_string(lineno));
      section = trim(body.substr(1, body.size() - 2));
      continue;
    }
    std::size_t eq = body.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config", "expected key = value at line " + std::to_string(lineno));
    apply_key(c, section, trim(body.substr(0, eq)), trim(body.substr(eq + 1)));
  }
}

void validate(const RunConfig& c) {
  auto bad = [](const char* f, const char* m) { throw ConfigError(f, m); };
  if (c.train_episodes < 1) bad("run.train_episodes", "must be >= 1");
  if (c.eval_episodes < 1) bad("run.eval_episodes", "must be >= 1");
  const marl::TrainerConfig& t = c.trainer;
  if (!(t.gamma_r > 0.0 && t.gamma_r < 1.0)) bad("trainer.gamma_r", "must be in (0, 1)");
  if (!(t.gamma_c > 0.0 && t.gamma_c < 1.0)) bad("trainer.gamma_c", "must be in (0, 1)");
  if (t.cycle_len < 1) bad("trainer.cycle_len", "must be >= 1");
  if (t.batch < 1) bad("trainer.batch", "must be >= 1");
  if (!(t.sigma >= 0.0)) bad("trainer.sigma", "must be >= 0");
  if (!(t.rho >= 0.0)) bad("trainer.rho", "must be >= 0");
  if (!(t.gamma_reg >= 0.0 && t.gamma_reg <= 1.0)) bad("trainer.gamma_reg", "must be in [0, 1]");
  if (!(t.critic_lr > 0.0)) bad("trainer.critic_lr", "must be > 0");
  if (!(t.eps_start >= 0.0 && t.eps_start <= 1.0)) bad("trainer.eps_start", "must be in [0, 1]");
  if (!(t.eps_end >= 0.0 && t.eps_end <= 1.0)) bad("trainer.eps_end", "must be in [0, 1]");
  if (!(t.eps_frac >= 0.0 && t.eps_frac <= 1.0)) bad("trainer.eps_frac", "must be in [0, 1]");
  const shield::ShieldConfig& s = c.shield;
  if (!(s.c1 >= 0.0)) bad("shield.c1", "must be >= 0");
  if (!(s.c2 > 0.0)) bad("shield.c2", "must be > 0");
  if (!(s.D >= 0.0)) bad("shield.d", "must be >= 0");
  if (!(s.gamma_cbf > 0.0 && s.gamma_cbf <= 1.0)) bad("shield.gamma_cbf", "must be in (0, 1]");
  if (s.horizon_check < 1) bad("shield.horizon_check", "must be >= 1");
  if (!(s.keep_band >= 0.0)) bad("shield.keep_band", "must be >= 0");
}

TrainOutput train(const RunConfig& c) {
  scen::ScenarioSpec probe = scen::ScenarioSpec::builtin(c.scenario, c.seed);
  TrainOutput out;
  out.agents = marl::make_agents(probe.n_cav, c.encoder, c.seed);
  marl::TrainState ts;
  ts.cfg = c.trainer;
  num::Rng rng = num::Rng{c.seed}.spawn(0x747261696eull);
  std::ostringstream csv;
  csv << "episode,agent,return,cost_return,collided,lambda,epsilon\n";
  for (int ep = 0; ep < c.train_episodes; ++ep) {
    double eps = marl::epsilon_at(c.trainer, ep, c.train_episodes);
    scen::World w =
        scen::spawn(scen::ScenarioSpec::builtin(c.scenario, c.seed + std::uint64_t(ep)));
    w.shield_cfg = c.shield;
    marl::EpisodeResult res =
        marl::run_episode(w, out.agents, c.shield_on, c.comm_on, eps, rng, &ts);
    for (int i = 0; i < probe.n_cav; ++i) {
      csv << ep << ',' << i << ',' << fmt_f(res.returns[std::size_t(i)]) << ','
          << fmt_f(res.cost_returns[std::size_t(i)]) << ',' << (res.collided ? 1 : 0) << ','
          << fmt_f(out.agents[std::size_t(i)].lambda) << ',' << fmt_f(eps) << '\n';
    }
  }
  out.curve_csv = csv.str();
  return out;
}

EvalReport evaluate(const std::vector<marl::AgentParams>& params, const RunConfig& c, int n,
                    std::uint64_t base_seed) {
  EvalReport rep;
  rep.episodes.assign(std::size_t(n), EpisodeRecord{});
  auto run_one = [&](int e) {
    std::uint64_t s = base_seed + std::uint64_t(e);
    scen::World w = scen::spawn(scen::ScenarioSpec::builtin(c.scenario, s));
    w.shield_cfg = c.shield;
    std::vector<marl::AgentParams> local = params;
    num::Rng rng = num::Rng{s}.spawn(0x6576616cull);
    marl::EpisodeResult res = marl::run_episode(w, local, c.shield_on, c.comm_on, 0.0, rng);
    double sum = 0.0;
    for (double r : res.returns) sum += r;
    double avg = res.returns.empty() ? 0.0 : sum / double(res.returns.size());
    rep.episodes[std::size_t(e)] = EpisodeRecord{e, s, res.collided, avg};
  };
  unsigned hw = std::thread::hardware_concurrency();
  int workers = std::clamp(hw == 0 ? 1 : int(hw), 1, 8);
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (int e = 0; e < n; ++e) run_one(e);
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < workers; ++k)
      pool.emplace_back([&, k] {
        for (int e = k; e < n; e += workers) run_one(e);
      });
    for (std::thread& th : pool) th.join();
  }
  int clean = 0;
  double total = 0.0;
  for (const EpisodeRecord& r : rep.episodes) {
    clean += r.collided ? 0 : 1;
    total += r.episode_return;
  }
  if (n > 0) {
    rep.collision_free_rate = double(clean) / double(n);
    rep.mean_episode_return = total / double(n);
  }
  return rep;
}

std::vector<marl::AgentParams> load_params(const RunConfig& c, int n_agents) {
  if (c.checkpoint.empty()) throw ArtifactError("no checkpoint given");
  if (!fs::exists(c.checkpoint)) throw ArtifactError("checkpoint not found: " + c.checkpoint);
  try {
    num::NamedBlocks nb = num::load_checkpoint(c.checkpoint);
    return marl::params_from_named(nb, c.encoder, n_agents);
  } catch (const std::runtime_error& e) {
    throw ArtifactError("unusable checkpoint " + c.checkpoint + ": " + e.what());
  }
}

std::string eval_csv(const EvalReport& r) {
  std::ostringstream s;
  s << "episode,seed,collided,episode_return\n";
  for (const EpisodeRecord& e : r.episodes)
    s << e.episode << ',' << e.seed << ',' << (e.collided ? 1 : 0) << ','
      << fmt_f(e.episode_return) << '\n';
  return s.str();
}

std::vector<TraceRow> trace_episode(scen::World w, std::vector<marl::AgentParams> params,
                                    bool shield_on, bool comm_on, num::Rng rng) {
  int n = w.spec.n_cav;
  if (int(params.size()) != n) throw std::invalid_argument("trace_episode: agent count mismatch");
  w.spec.shield_enabled = shield_on;
  w.spec.comm_enabled = comm_on;

  std::vector<TraceRow> rows;
  auto log_state = [&](int step) {
    for (const scen::Vehicle& veh : w.vehicles)
      rows.push_back(
          TraceRow{step, veh.id, veh.role, veh.state.x, veh.state.y, veh.state.psi, veh.state.v});
  };

  std::vector<enc::GraphWindow> windows{std::size_t(n)};
  auto push_graphs = [&] {
    std::vector<comms::AgentView> views = w.views();
    for (int i = 0; i < n; ++i) {
      comms::ObservationBundle b = comms::build_observation(w.net, views, i, comm_on, w.t);
      windows[std::size_t(i)].push(comms::build_scene_graph(b, w.net));
    }
  };
  push_graphs();
  log_state(0);

  std::array<bool, marl::kNumActions> all;
  all.fill(true);
  std::array<bool, marl::kNumActions> brake_only{};
  brake_only[std::size_t(shield::Action::brake)] = true;

  for (int step = 1;; ++step) {
    std::vector<shield::Action> actions{std::size_t(n)};
    for (int i = 0; i < n; ++i) {
      std::array<bool, marl::kNumActions> mask = all;
      if (shield_on) {
        shield::AgentShieldResult sr = scen::agent_shield(w, i);
        mask = sr.safe_set.emergency ? brake_only : sr.safe_set.mask();
      }
      std::vector<double> probs =
          marl::policy_probs(windows[std::size_t(i)], params[std::size_t(i)].actor);
      actions[std::size_t(i)] = shield::Action(marl::select_action(probs, mask, 0.0, rng));
    }
    scen::StepOutcome out = scen::step_world(w, actions, rng);
    push_graphs();
    log_state(step);
    if (out.done) break;
  }
  return rows;
}

std::string trace_csv(const std::vector<TraceRow>& rows) {
  std::ostringstream s;
  s << "step,vehicle,role,x,y,psi,v\n";
  for (const TraceRow& r : rows)
    s << r.step << ',' << r.vehicle << ',' << role_name(r.role) << ',' << fmt_f(r.x) << ','
      << fmt_f(r.y) << ',' << fmt_f(r.psi) << ',' << fmt_f(r.v) << '\n';
  return s.str();
}

namespace {

int run_train_cmd(const RunConfig& c) {
  write_configs(c);
  TrainOutput t = train(c);
  fs::path dir(c.out);
  write_file(dir / "training_curve.csv", t.curve_csv);
  num::save_checkpoint((dir / "checkpoint.bin").string(), marl::named_params(t.agents));
  std::printf("trained %d episodes on %s, wrote %s\n", c.train_episodes,
              scen::kind_name(c.scenario), (dir / "checkpoint.bin").string().c_str());
  return 0;
}

int run_eval_cmd(const RunConfig& c) {
  if (c.checkpoint.empty()) throw ConfigError("run.checkpoint", "eval needs a checkpoint");
  scen::ScenarioSpec probe = scen::ScenarioSpec::builtin(c.scenario, c.seed);
  std::vector<marl::AgentParams> params = load_params(c, probe.n_cav);
  EvalReport rep = evaluate(params, c, c.eval_episodes, c.seed);
  write_configs(c);
  write_file(fs::path(c.out) / "eval.csv", eval_csv(rep));
  std::printf("episodes %d collision_free_rate %.4f mean_episode_return %.4f\n", c.eval_episodes,
              rep.collision_free_rate, rep.mean_episode_return);
  return 0;
}

int run_ablate_cmd(const RunConfig& c) {
  write_configs(c);
  fs::path dir(c.out);
  std::ostringstream csv;
  csv << "scenario,shield,encoder,comm,rate,mean_return,n_episodes\n";
  for (bool sh : {true, false}) {
    for (marl::EncoderKind ek : {marl::EncoderKind::gcn_transformer, marl::EncoderKind::fc}) {
      for (bool cm : {true, false}) {
        RunConfig cell = c;
        cell.shield_on = sh;
        cell.encoder = ek;
        cell.comm_on = cm;
        cell.checkpoint.clear();
        std::string tag = std::string("shield-") + onoff(sh) + "_" + marl::encoder_name(ek) +
                          "_comm-" + onoff(cm);
        cell.out = (dir / tag).string();
        fs::create_directories(cell.out);
        TrainOutput t = train(cell);
        write_file(fs::path(cell.out) / "training_curve.csv", t.curve_csv);
        num::save_checkpoint((fs::path(cell.out) / "checkpoint.bin").string(),
                             marl::named_params(t.agents));
        // eval seeds live far from the training block so no episode is reused
        EvalReport rep = evaluate(t.agents, cell, cell.eval_episodes, cell.seed + 1000000ull);
        write_file(fs::path(cell.out) / "eval.csv", eval_csv(rep));
        csv << scen::kind_name(cell.scenario) << ',' << onoff(sh) << ',' << marl::encoder_name(ek)
            << ',' << onoff(cm) << ',' << fmt_f(rep.collision_free_rate) << ','
            << fmt_f(rep.mean_episode_return) << ',' << cell.eval_episodes << '\n';
        std::printf("cell %-40s rate %.4f mean_return %.4f\n", tag.c_str(),
                    rep.collision_free_rate, rep.mean_episode_return);
        std::fflush(stdout);
      }
    }
  }
  write_file(dir / "ablation.csv", csv.str());
  return 0;
}

int run_trace_cmd(const RunConfig& c) {
  scen::ScenarioSpec spec = scen::ScenarioSpec::builtin(c.scenario, c.seed);
  std::vector<marl::AgentParams> params = c.checkpoint.empty()
                                              ? marl::make_agents(spec.n_cav, c.encoder, c.seed)
                                              : load_params(c, spec.n_cav);
  scen::World w = scen::spawn(spec);
  w.shield_cfg = c.shield;
  std::size_t nveh = w.vehicles.size();
  std::vector<TraceRow> rows = trace_episode(std::move(w), std::move(params), c.shield_on,
                                             c.comm_on, num::Rng{c.seed}.spawn(0x7472616365ull));
  write_configs(c);
  write_file(fs::path(c.out) / "trace.csv", trace_csv(rows));
  std::printf("trace: %d steps, %zu vehicles, %zu rows\n", int(rows.size() / nveh) - 1, nveh,
              rows.size());
  return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"constrained multi-agent driving: train, evaluate, ablate, trace"};
  app.require_subcommand(1);

  std::string scenario, encoder, config, out, checkpoint;
  int episodes = 0;
  std::int64_t seed = 0;
  bool no_shield = false, no_comm = false;

  auto add_common = [&](CLI::App* s) {
    s->add_option("--scenario", scenario, "builtin scenario name");
    s->add_option("--episodes", episodes, "episode count for this command");
    s->add_option("--seed", seed, "master seed");
    s->add_flag("--no-shield", no_shield, "disable the safety shield");
    s->add_flag("--no-comm", no_comm, "disable vehicle-to-vehicle communication");
    s->add_option("--encoder", encoder, "gcn-transformer or fc");
    s->add_option("--config", config, "config file to apply before flags");
    s->add_option("--out", out, "output directory");
    s->add_option("--checkpoint", checkpoint, "checkpoint file to load");
  };
  CLI::App* cmd_train = app.add_subcommand("train", "train agents and save a checkpoint");
  CLI::App* cmd_eval = app.add_subcommand("eval", "greedy evaluation of a checkpoint");
  CLI::App* cmd_ablate = app.add_subcommand("ablate", "shield x encoder x comm grid");
  CLI::App* cmd_trace = app.add_subcommand("trace", "dump one episode state trajectory");
  for (CLI::App* s : {cmd_train, cmd_eval, cmd_ablate, cmd_trace}) add_common(s);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    auto given = [&](const char* name) { return sub->count(name) > 0; };

    RunConfig c;
    if (!config.empty()) apply_config_file(c, config);
    if (!scenario.empty()) {
      try {
        c.scenario = scen::kind_from_name(scenario);
      } catch (const std::exception&) {
        throw ConfigError("run.scenario", "unknown scenario '" + scenario + "'");
      }
    }
    if (given("--episodes")) {
      if (sub == cmd_eval) c.eval_episodes = episodes;
      else c.train_episodes = episodes;
    }
    if (given("--seed")) {
      if (seed < 0) throw ConfigError("run.seed", "must be >= 0");
      c.seed = std::uint64_t(seed);
    }
    if (no_shield) c.shield_on = false;
    if (no_comm) c.comm_on = false;
    if (!encoder.empty()) {
      try {
        c.encoder = marl::encoder_from_name(encoder);
      } catch (const std::exception&) {
        throw ConfigError("encoder.kind", "unknown encoder '" + encoder + "'");
      }
    }
    if (!out.empty()) c.out = out;
    if (!checkpoint.empty()) c.checkpoint = checkpoint;
    validate(c);

    if (sub == cmd_train) return run_train_cmd(c);
    if (sub == cmd_eval) return run_eval_cmd(c);
    if (sub == cmd_ablate) return run_ablate_cmd(c);
    return run_trace_cmd(c);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: invalid config field '%s': %s\n", e.field.c_str(), e.what());
    return 2;
  } catch (const ArtifactError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

}  // namespace cav::harness
