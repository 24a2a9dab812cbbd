#pragma once
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cav/checkpoint.hpp"
#include "cav/encoder.hpp"
#include "cav/scenario.hpp"
#include "cav/shield.hpp"
#include "cav/tape.hpp"

namespace cav::marl {

inline constexpr int kPolicyHidden = 64;
inline constexpr int kHeadHidden = 64;
inline constexpr int kNumActions = shield::kNumActions;

enum class EncoderKind { gcn_transformer, fc };
const char* encoder_name(EncoderKind k);
EncoderKind encoder_from_name(const std::string& s);  // throws std::invalid_argument

using Blocks = std::vector<num::Matrix>;

// theta: the chosen encoder plus the policy head E -> 64 -> |A|
struct ActorParams {
  EncoderKind kind = EncoderKind::gcn_transformer;
  enc::EncoderParams gcn;  // active iff kind == gcn_transformer
  enc::FcParams fc;        // active iff kind == fc
  num::Matrix pw1, pb1, pw2, pb2;
  static ActorParams init(EncoderKind kind, num::Rng& rng);
};

std::vector<num::Matrix*> actor_blocks(ActorParams& a);
std::vector<const num::Matrix*> actor_blocks(const ActorParams& a);
std::vector<std::string> actor_block_names(const ActorParams& a);
Blocks copy_blocks(const ActorParams& a);
void assign_blocks(ActorParams& a, const Blocks& b);

// critic (phi) or cost net (omega): joint embedding -> 64 -> 1
struct HeadParams {
  num::Matrix w1, b1, w2, b2;
  static HeadParams init(int in_dim, num::Rng& rng);
};

struct AgentParams {
  ActorParams actor;
  HeadParams critic, cost;
  Blocks vartheta;  // gradient tracker, zero-init, shaped like the actor blocks
  double lambda = 0.0;
  // dual value one cycle back; the old-side tracking gradient is taken at the
  // old multiplier so the tracker increments carry dual motion as well
  double lambda_prev = 0.0;
  static AgentParams init(EncoderKind kind, int n_agents, num::Rng& rng);
};
std::vector<AgentParams> make_agents(int n, EncoderKind kind, std::uint64_t seed);

struct TrainerConfig {
  double gamma_r = 0.99;
  double gamma_c = 0.9;
  double zeta = 10.0;
  int cycle_len = 16;
  int batch = 8;
  double sigma = 3e-4;      // primal stepsize (constant schedule)
  double rho = 1e-2;        // dual stepsize
  double gamma_reg = 0.99;  // dual regularizer base
  double critic_lr = 1e-3;
  double eps_start = 0.5;
  double eps_end = 0.05;
  double eps_frac = 0.6;
};
double epsilon_at(const TrainerConfig& cfg, int episode, int total_episodes);
num::Matrix consensus_weights(int n);  // uniform 1/n, doubly stochastic

struct Transition {
  enc::GraphWindow window;
  int action = 0;
  double reward = 0.0;
  double cost = 0.0;
  enc::GraphWindow next_window;
  std::array<bool, kNumActions> mask{};  // safe set at selection time
  bool done = false;
};

struct StepRecord {
  std::vector<Transition> agents;  // CAV order
  bool done() const { return !agents.empty() && agents.front().done; }
};
using Memory = std::vector<StepRecord>;  // cycle-local

struct Batch {
  int start = 0;
  int len = 0;
};

std::vector<double> policy_forward(const num::Matrix& embedding, const ActorParams& theta);
std::vector<double> policy_probs(const enc::GraphWindow& w, const ActorParams& theta);
int select_action(const std::vector<double>& dist, const std::array<bool, kNumActions>& safe,
                  double epsilon, num::Rng& rng);

struct ActorLeaves {
  EncoderKind kind = EncoderKind::gcn_transformer;
  enc::EncoderLeaves gcn{};
  enc::FcLeaves fc{};
  num::Tape::Handle pw1 = -1, pb1 = -1, pw2 = -1, pb2 = -1;
};
ActorLeaves insert_actor_leaves(num::Tape& t, const ActorParams& p);
std::vector<num::Tape::Handle> actor_leaf_list(const ActorLeaves& l);  // actor_blocks order
num::Tape::Handle encode_window(num::Tape& t, const enc::GraphWindow& w, const ActorLeaves& p);
num::Tape::Handle policy_logits(num::Tape& t, num::Tape::Handle embedding, const ActorLeaves& p);

num::Matrix embed_value(const enc::GraphWindow& w, const ActorParams& theta);  // 1 x E
num::Matrix joint_embedding(const StepRecord& rec, const ActorParams& theta, bool next);
double head_value(const HeadParams& h, const num::Matrix& x);

struct Estimates {
  std::vector<double> R, Rc, A, Ac;
};

// batch slice frozen into values: joint embeddings, raw rewards/costs, estimates
struct BatchEval {
  Estimates est;
  std::vector<num::Matrix> X;  // one 1 x nE row per transition
  num::Matrix x_boot;
  bool boot = false;
  std::vector<double> rewards, costs;
  std::vector<char> dones;
};
BatchEval eval_batch(const Memory& mem, Batch b, int agent, const AgentParams& me,
                     const TrainerConfig& cfg);
Estimates returns_and_advantages(const Memory& mem, Batch b, int agent, const AgentParams& me,
                                 const TrainerConfig& cfg);
void refresh_estimates(BatchEval& be, const AgentParams& me, const TrainerConfig& cfg);

struct CriticLosses {
  double critic = 0.0;
  double cost = 0.0;
};
CriticLosses critic_cost_losses(const BatchEval& be, const AgentParams& me);
// one plain gradient step on phi and omega; returns the pre-step losses
CriticLosses critic_cost_step(const BatchEval& be, AgentParams& me, double lr);

// mean grad of log pi(a|s) * (A - lambda * A^C) over the batch, actor-blocks order
Blocks primal_gradient(const Memory& mem, Batch b, int agent, const ActorParams& theta,
                       double lambda, const Estimates& est);
double dual_gradient(const Estimates& est, double zeta);

std::vector<Blocks> consensus_update(const std::vector<Blocks>& thetas,
                                     const std::vector<Blocks>& varthetas,
                                     const num::Matrix& W, double sigma);
std::vector<Blocks> gradient_tracking_update(const std::vector<Blocks>& varthetas,
                                             const num::Matrix& W,
                                             const std::vector<Blocks>& grad_new,
                                             const std::vector<Blocks>& grad_old);
double dual_update(double lambda, double dual_grad, double rho, double gamma_reg, int tau);

struct CycleMetrics {
  bool skipped = false;
  std::string warning;
  double critic_loss = 0.0;
  double cost_loss = 0.0;
  double grad_norm = 0.0;
  double mean_lambda = 0.0;
};
CycleMetrics train_cycle(const Memory& mem, std::vector<AgentParams>& agents,
                         const TrainerConfig& cfg, int tau, num::Rng& rng);

struct TrainState {
  TrainerConfig cfg;
  int tau = 0;
  Memory cycle;
  CycleMetrics last;
  int cycles = 0;
  int skipped = 0;
};

struct EpisodeResult {
  std::vector<double> returns;       // per agent, summed stepwise reward
  std::vector<double> cost_returns;  // per agent, summed stepwise cost
  bool collided = false;
  scen::DoneReason reason = scen::DoneReason::none;
  int steps = 0;
  Memory trace;  // filled when keep_trace
};
EpisodeResult run_episode(scen::World& w, std::vector<AgentParams>& agents, bool shield_on,
                          bool comm_on, double epsilon, num::Rng& rng,
                          TrainState* train = nullptr, bool keep_trace = false);

// checkpoint layout: agent{i}.actor.* / .critic.* / .cost.* / .lambda
num::NamedBlocks named_params(const std::vector<AgentParams>& agents);
std::vector<AgentParams> params_from_named(const num::NamedBlocks& nb, EncoderKind kind,
                                           int n_agents);  // throws std::runtime_error

}  // namespace cav::marl
