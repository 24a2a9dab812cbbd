#pragma once

// run harness: config parsing, train/eval/ablate/trace drivers, and the CLI.
// Everything funnels through RunConfig so a run is reproducible from one file.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "cav/marl.hpp"
#include "cav/rng.hpp"
#include "cav/scenario.hpp"
#include "cav/shield.hpp"

namespace cav::harness {

struct RunConfig {
  scen::Kind scenario = scen::Kind::highway;
  int train_episodes = 2000;
  int eval_episodes = 100;
  std::uint64_t seed = 1;
  bool shield_on = true;
  bool comm_on = true;
  marl::EncoderKind encoder = marl::EncoderKind::gcn_transformer;
  marl::TrainerConfig trainer;
  shield::ShieldConfig shield;
  std::string out = "out";
  std::string checkpoint;  // empty means none given
};

// invalid configuration; `field` names the offending entry ("section.key")
struct ConfigError : std::runtime_error {
  std::string field;
  ConfigError(std::string f, const std::string& msg)
      : std::runtime_error(msg), field(std::move(f)) {}
};

// missing or unreadable input artifact (checkpoint file)
struct ArtifactError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void validate(const RunConfig& c);  // throws ConfigError
void apply_config_file(RunConfig& c, const std::string& path);  // throws ConfigError
std::string serialize_config(const RunConfig& c);

struct EpisodeRecord {
  int episode = 0;
  std::uint64_t seed = 0;
  bool collided = false;
  double episode_return = 0.0;  // per-agent average of summed rewards
};

struct EvalReport {
  double collision_free_rate = 0.0;
  double mean_episode_return = 0.0;
  std::vector<EpisodeRecord> episodes;
};

// greedy rollouts over eval seeds base_seed + 0 .. n-1; episodes may run on
// parallel workers but the report is ordered and worker-count independent
EvalReport evaluate(const std::vector<marl::AgentParams>& params, const RunConfig& c, int n,
                    std::uint64_t base_seed);

struct TrainOutput {
  std::vector<marl::AgentParams> agents;
  std::string curve_csv;  // header + one row per (episode, agent)
};
TrainOutput train(const RunConfig& c);

// reads c.checkpoint; throws ArtifactError when missing or malformed
std::vector<marl::AgentParams> load_params(const RunConfig& c, int n_agents);

std::string eval_csv(const EvalReport& r);

struct TraceRow {
  int step = 0;
  int vehicle = 0;
  scen::Role role = scen::Role::cav;
  double x = 0.0;
  double y = 0.0;
  double psi = 0.0;
  double v = 0.0;
};

// one greedy episode, every vehicle logged at every step (steps + 1 rows each)
std::vector<TraceRow> trace_episode(scen::World w, std::vector<marl::AgentParams> params,
                                    bool shield_on, bool comm_on, num::Rng rng);
std::string trace_csv(const std::vector<TraceRow>& rows);

// full command-line entry point; returns the process exit code
// (0 success, 2 bad config, 3 missing artifact)
int cli_main(int argc, const char* const* argv);

}  // namespace cav::harness
