#include "cav/marl.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace cav::marl {

using num::Matrix;
using num::Rng;
using num::Tape;

const char* encoder_name(EncoderKind k) {
  return k == EncoderKind::gcn_transformer ? "gcn-transformer" : "fc";
}

EncoderKind encoder_from_name(const std::string& s) {
  if (s == "gcn-transformer") return EncoderKind::gcn_transformer;
  if (s == "fc") return EncoderKind::fc;
  throw std::invalid_argument("encoder_from_name: unknown encoder '" + s + "'");
}

ActorParams ActorParams::init(EncoderKind kind, Rng& rng) {
  ActorParams p;
  p.kind = kind;
  if (kind == EncoderKind::gcn_transformer)
    p.gcn = enc::EncoderParams::init(rng);
  else
    p.fc = enc::FcParams::init(rng);
  double s1 = std::sqrt(1.0 / enc::kEmbed);
  double s2 = std::sqrt(1.0 / kPolicyHidden);
  p.pw1 = num::rand_matrix(rng, enc::kEmbed, kPolicyHidden, -s1, s1);
  p.pb1 = Matrix::zeros(1, kPolicyHidden);
  p.pw2 = num::rand_matrix(rng, kPolicyHidden, kNumActions, -s2, s2);
  p.pb2 = Matrix::zeros(1, kNumActions);
  return p;
}

std::vector<Matrix*> actor_blocks(ActorParams& a) {
  std::vector<Matrix*> v;
  if (a.kind == EncoderKind::gcn_transformer)
    v = {&a.gcn.w1, &a.gcn.w2, &a.gcn.wq, &a.gcn.wk, &a.gcn.wv, &a.gcn.wo};
  else
    v = {&a.fc.w1, &a.fc.b1, &a.fc.w2, &a.fc.b2};
  v.push_back(&a.pw1);
  v.push_back(&a.pb1);
  v.push_back(&a.pw2);
  v.push_back(&a.pb2);
  return v;
}

std::vector<const Matrix*> actor_blocks(const ActorParams& a) {
  auto mut = actor_blocks(const_cast<ActorParams&>(a));
  return std::vector<const Matrix*>(mut.begin(), mut.end());
}

std::vector<std::string> actor_block_names(const ActorParams& a) {
  std::vector<std::string> v;
  if (a.kind == EncoderKind::gcn_transformer)
    v = {"enc.w1", "enc.w2", "enc.wq", "enc.wk", "enc.wv", "enc.wo"};
  else
    v = {"enc.w1", "enc.b1", "enc.w2", "enc.b2"};
  v.insert(v.end(), {"pi.w1", "pi.b1", "pi.w2", "pi.b2"});
  return v;
}

Blocks copy_blocks(const ActorParams& a) {
  Blocks b;
  for (const Matrix* m : actor_blocks(a)) b.push_back(*m);
  return b;
}

void assign_blocks(ActorParams& a, const Blocks& b) {
  auto ptrs = actor_blocks(a);
  if (ptrs.size() != b.size()) throw std::invalid_argument("assign_blocks: block count mismatch");
  for (std::size_t i = 0; i < ptrs.size(); ++i) {
    if (!ptrs[i]->same_shape(b[i]))
      throw std::invalid_argument("assign_blocks: block shape mismatch");
    *ptrs[i] = b[i];
  }
}

HeadParams HeadParams::init(int in_dim, Rng& rng) {
  HeadParams p;
  double s1 = std::sqrt(1.0 / in_dim);
  double s2 = std::sqrt(1.0 / kHeadHidden);
  p.w1 = num::rand_matrix(rng, in_dim, kHeadHidden, -s1, s1);
  p.b1 = Matrix::zeros(1, kHeadHidden);
  p.w2 = num::rand_matrix(rng, kHeadHidden, 1, -s2, s2);
  p.b2 = Matrix::zeros(1, 1);
  return p;
}

AgentParams AgentParams::init(EncoderKind kind, int n_agents, Rng& rng) {
  if (n_agents < 1) throw std::invalid_argument("AgentParams::init: n_agents < 1");
  AgentParams p;
  p.actor = ActorParams::init(kind, rng);
  p.critic = HeadParams::init(n_agents * enc::kEmbed, rng);
  p.cost = HeadParams::init(n_agents * enc::kEmbed, rng);
  for (const Matrix* m : actor_blocks(p.actor)) p.vartheta.push_back(Matrix::zeros(m->rows, m->cols));
  p.lambda = 0.0;
  return p;
}

std::vector<AgentParams> make_agents(int n, EncoderKind kind, std::uint64_t seed) {
  Rng root(seed);
  std::vector<AgentParams> agents;
  agents.reserve(std::size_t(n));
  for (int i = 0; i < n; ++i) {
    Rng ri = root.spawn(std::uint64_t(i));
    agents.push_back(AgentParams::init(kind, n, ri));
  }
  return agents;
}

double epsilon_at(const TrainerConfig& cfg, int episode, int total_episodes) {
  int k = int(cfg.eps_frac * total_episodes);
  if (k < 1 || episode >= k) return cfg.eps_end;
  return cfg.eps_start + (cfg.eps_end - cfg.eps_start) * double(episode) / double(k);
}

Matrix consensus_weights(int n) {
  if (n < 1) throw std::invalid_argument("consensus_weights: n < 1");
  Matrix w(n, n);
  w.fill(1.0 / n);
  return w;
}

std::vector<double> policy_forward(const Matrix& embedding, const ActorParams& theta) {
  if (embedding.rows != 1 || embedding.cols != theta.pw1.rows)
    throw std::invalid_argument("policy_forward: bad embedding shape");
  std::vector<double> h(std::size_t(kPolicyHidden), 0.0);
  for (int j = 0; j < kPolicyHidden; ++j) {
    double acc = theta.pb1(0, j);
    for (int k = 0; k < embedding.cols; ++k) acc += embedding(0, k) * theta.pw1(k, j);
    h[std::size_t(j)] = std::max(0.0, acc);
  }
  std::vector<double> logits(std::size_t(kNumActions), 0.0);
  double mx = -1e300;
  for (int a = 0; a < kNumActions; ++a) {
    double acc = theta.pb2(0, a);
    for (int j = 0; j < kPolicyHidden; ++j) acc += h[std::size_t(j)] * theta.pw2(j, a);
    logits[std::size_t(a)] = acc;
    mx = std::max(mx, acc);
  }
  double total = 0.0;
  std::vector<double> p(std::size_t(kNumActions), 0.0);
  for (int a = 0; a < kNumActions; ++a) {
    p[std::size_t(a)] = std::exp(logits[std::size_t(a)] - mx);
    total += p[std::size_t(a)];
  }
  for (double& x : p) x /= total;
  return p;
}

ActorLeaves insert_actor_leaves(Tape& t, const ActorParams& p) {
  ActorLeaves l;
  l.kind = p.kind;
  if (p.kind == EncoderKind::gcn_transformer)
    l.gcn = enc::insert_leaves(t, p.gcn);
  else
    l.fc = enc::insert_leaves(t, p.fc);
  l.pw1 = t.leaf(p.pw1);
  l.pb1 = t.leaf(p.pb1);
  l.pw2 = t.leaf(p.pw2);
  l.pb2 = t.leaf(p.pb2);
  return l;
}

std::vector<Tape::Handle> actor_leaf_list(const ActorLeaves& l) {
  std::vector<Tape::Handle> v;
  if (l.kind == EncoderKind::gcn_transformer)
    v = {l.gcn.w1, l.gcn.w2, l.gcn.wq, l.gcn.wk, l.gcn.wv, l.gcn.wo};
  else
    v = {l.fc.w1, l.fc.b1, l.fc.w2, l.fc.b2};
  v.insert(v.end(), {l.pw1, l.pb1, l.pw2, l.pb2});
  return v;
}

num::Tape::Handle encode_window(Tape& t, const enc::GraphWindow& w, const ActorLeaves& p) {
  return p.kind == EncoderKind::gcn_transformer ? enc::encode(t, w, p.gcn)
                                                : enc::encode_fc(t, w, p.fc);
}

namespace {

// GCN ego rows are shared between overlapping windows of one episode, so they
// are cached by graph timestep within a tape.
Tape::Handle encode_window_cached(Tape& t, const enc::GraphWindow& w, const ActorLeaves& p,
                                  std::map<int, Tape::Handle>& rows) {
  if (p.kind == EncoderKind::fc) return enc::encode_fc(t, w, p.fc);
  if (w.graphs.empty()) throw std::invalid_argument("encode: empty window");
  std::vector<Tape::Handle> ego_rows;
  for (const comms::SceneGraph& g : w.graphs) {
    auto it = rows.find(g.timestep);
    if (it == rows.end()) {
      int idx = g.ego_node_index();
      if (idx < 0) throw std::invalid_argument("encode: ego node missing");
      Tape::Handle h2 = enc::gcn_forward(t, g, p.gcn.w1, p.gcn.w2);
      it = rows.emplace(g.timestep, t.slice_rows(h2, idx, idx + 1)).first;
    }
    ego_rows.push_back(it->second);
  }
  Tape::Handle seq = ego_rows.size() == 1 ? ego_rows[0] : t.concat_rows(ego_rows);
  enc::Attention att = enc::temporal_attention(t, seq, p.gcn.wq, p.gcn.wk, p.gcn.wv);
  return t.tanh(t.matmul(att.context, p.gcn.wo));
}

Matrix neg_col(const std::vector<double>& xs) {
  Matrix m(int(xs.size()), 1);
  for (std::size_t i = 0; i < xs.size(); ++i) m(int(i), 0) = -xs[i];
  return m;
}

// fused log-softmax: log(softmax(x)) underflows for starved actions and its
// backward divides by the vanished probability, so build x - lse(x) instead
Tape::Handle log_softmax_row(Tape& t, Tape::Handle logits) {
  const Matrix& lv = t.value(logits);
  double m = lv.data[0];
  for (double x : lv.data) m = std::max(m, x);
  Matrix shift = Matrix::zeros(lv.rows, lv.cols);
  shift.fill(-m);
  Tape::Handle shifted = t.add(logits, t.leaf(shift));
  Tape::Handle lse = t.log(t.sum(t.exp(shifted)));
  Matrix ones = Matrix::zeros(lv.rows, lv.cols);
  ones.fill(1.0);
  return t.add(shifted, t.scale(t.matmul(lse, t.leaf(ones)), -1.0));
}

struct HeadLeaves {
  Tape::Handle w1, b1, w2, b2;
};

HeadLeaves insert_head_leaves(Tape& t, const HeadParams& p) {
  return {t.leaf(p.w1), t.leaf(p.b1), t.leaf(p.w2), t.leaf(p.b2)};
}

Tape::Handle head_mse(Tape& t, Tape::Handle x, const std::vector<double>& targets,
                      const HeadLeaves& h) {
  Tape::Handle pred = t.add_row(t.matmul(t.relu(t.add_row(t.matmul(x, h.w1), h.b1)), h.w2), h.b2);
  Tape::Handle diff = t.add(pred, t.leaf(neg_col(targets)));
  return t.scale(t.matmul(t.transpose(diff), diff), 1.0 / double(targets.size()));
}

Matrix stack_rows(const std::vector<Matrix>& rows) {
  Matrix x(int(rows.size()), rows.front().cols);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (int j = 0; j < x.cols; ++j) x(int(i), j) = rows[i](0, j);
  return x;
}

void sgd_step(Matrix& w, const Matrix& g, double lr) {
  for (std::size_t i = 0; i < w.data.size(); ++i) w.data[i] -= lr * g.data[i];
}

double block_norm(const Blocks& b) {
  double s = 0.0;
  for (const Matrix& m : b)
    for (double x : m.data) s += x * x;
  return std::sqrt(s);
}

Blocks negated(Blocks b) {
  for (Matrix& m : b)
    for (double& x : m.data) x = -x;
  return b;
}

void check_family(const std::vector<Blocks>& xs, const num::Matrix& w, const char* who) {
  int n = int(xs.size());
  if (n == 0) throw std::invalid_argument(std::string(who) + ": no agents");
  if (w.rows != n || w.cols != n) throw std::invalid_argument(std::string(who) + ": bad W shape");
  for (const Blocks& b : xs) {
    if (b.size() != xs.front().size())
      throw std::invalid_argument(std::string(who) + ": block count mismatch");
    for (std::size_t k = 0; k < b.size(); ++k)
      if (!b[k].same_shape(xs.front()[k]))
        throw std::invalid_argument(std::string(who) + ": block shape mismatch");
  }
}

}  // namespace

std::vector<double> policy_probs(const enc::GraphWindow& w, const ActorParams& theta) {
  Tape t;
  ActorLeaves l = insert_actor_leaves(t, theta);
  Tape::Handle sm = t.softmax(policy_logits(t, encode_window(t, w, l), l));
  const Matrix& v = t.value(sm);
  return std::vector<double>(v.data.begin(), v.data.end());
}

Tape::Handle policy_logits(Tape& t, Tape::Handle embedding, const ActorLeaves& p) {
  Tape::Handle h = t.relu(t.add_row(t.matmul(embedding, p.pw1), p.pb1));
  return t.add_row(t.matmul(h, p.pw2), p.pb2);
}

int select_action(const std::vector<double>& dist, const std::array<bool, kNumActions>& safe,
                  double epsilon, Rng& rng) {
  if (int(dist.size()) != kNumActions)
    throw std::invalid_argument("select_action: bad distribution size");
  std::vector<int> allowed;
  for (int a = 0; a < kNumActions; ++a)
    if (safe[std::size_t(a)]) allowed.push_back(a);
  if (allowed.empty()) throw std::invalid_argument("select_action: empty safe set");
  if (rng.uniform() < epsilon) return allowed[std::size_t(rng.uniform_int(int(allowed.size())))];
  double total = 0.0;
  for (int a : allowed) total += dist[std::size_t(a)];
  if (!(total > 0.0)) return allowed[std::size_t(rng.uniform_int(int(allowed.size())))];
  double u = rng.uniform() * total;
  for (int a : allowed) {
    u -= dist[std::size_t(a)];
    if (u <= 0.0) return a;
  }
  return allowed.back();
}

Matrix embed_value(const enc::GraphWindow& w, const ActorParams& theta) {
  Tape t;
  ActorLeaves l = insert_actor_leaves(t, theta);
  return t.value(encode_window(t, w, l));
}

Matrix joint_embedding(const StepRecord& rec, const ActorParams& theta, bool next) {
  int n = int(rec.agents.size());
  Matrix x(1, n * enc::kEmbed);
  for (int j = 0; j < n; ++j) {
    Matrix e = embed_value(next ? rec.agents[std::size_t(j)].next_window
                                : rec.agents[std::size_t(j)].window,
                           theta);
    for (int k = 0; k < enc::kEmbed; ++k) x(0, j * enc::kEmbed + k) = e(0, k);
  }
  return x;
}

double head_value(const HeadParams& p, const Matrix& x) {
  if (x.rows != 1 || x.cols != p.w1.rows) throw std::invalid_argument("head_value: bad input shape");
  double y = p.b2(0, 0);
  for (int j = 0; j < p.w1.cols; ++j) {
    double acc = p.b1(0, j);
    for (int k = 0; k < x.cols; ++k) acc += x(0, k) * p.w1(k, j);
    y += std::max(0.0, acc) * p.w2(j, 0);
  }
  return y;
}

BatchEval eval_batch(const Memory& mem, Batch b, int agent, const AgentParams& me,
                     const TrainerConfig& cfg) {
  if (b.start < 0 || b.len < 1 || std::size_t(b.start + b.len) > mem.size())
    throw std::invalid_argument("eval_batch: bad batch bounds");
  int n = int(mem[std::size_t(b.start)].agents.size());
  if (agent < 0 || agent >= n) throw std::invalid_argument("eval_batch: bad agent index");

  Tape t;
  ActorLeaves leaves = insert_actor_leaves(t, me.actor);
  std::vector<std::map<int, Tape::Handle>> cache{std::size_t(n)};
  auto joint_row = [&](const StepRecord& rec, bool next) {
    Matrix x(1, n * enc::kEmbed);
    for (int j = 0; j < n; ++j) {
      const Transition& tr = rec.agents[std::size_t(j)];
      Tape::Handle e =
          encode_window_cached(t, next ? tr.next_window : tr.window, leaves, cache[std::size_t(j)]);
      const Matrix& v = t.value(e);
      for (int k = 0; k < enc::kEmbed; ++k) x(0, j * enc::kEmbed + k) = v(0, k);
    }
    return x;
  };

  BatchEval be;
  for (int k = 0; k < b.len; ++k) {
    const StepRecord& rec = mem[std::size_t(b.start + k)];
    const Transition& tr = rec.agents[std::size_t(agent)];
    be.X.push_back(joint_row(rec, false));
    be.rewards.push_back(tr.reward);
    be.costs.push_back(tr.cost);
    be.dones.push_back(tr.done ? 1 : 0);
  }
  if (!be.dones.back()) {
    be.x_boot = joint_row(mem[std::size_t(b.start + b.len - 1)], true);
    be.boot = true;
  }
  refresh_estimates(be, me, cfg);
  return be;
}

Estimates returns_and_advantages(const Memory& mem, Batch b, int agent, const AgentParams& me,
                                 const TrainerConfig& cfg) {
  return eval_batch(mem, b, agent, me, cfg).est;
}

void refresh_estimates(BatchEval& be, const AgentParams& me, const TrainerConfig& cfg) {
  int len = int(be.X.size());
  be.est.R.assign(std::size_t(len), 0.0);
  be.est.Rc.assign(std::size_t(len), 0.0);
  be.est.A.assign(std::size_t(len), 0.0);
  be.est.Ac.assign(std::size_t(len), 0.0);
  double acc = be.boot ? head_value(me.critic, be.x_boot) : 0.0;
  double accc = be.boot ? head_value(me.cost, be.x_boot) : 0.0;
  for (int k = len - 1; k >= 0; --k) {
    bool done = be.dones[std::size_t(k)] != 0;
    acc = be.rewards[std::size_t(k)] + cfg.gamma_r * (done ? 0.0 : acc);
    accc = be.costs[std::size_t(k)] + cfg.gamma_c * (done ? 0.0 : accc);
    be.est.R[std::size_t(k)] = acc;
    be.est.Rc[std::size_t(k)] = accc;
  }
  for (int k = 0; k < len; ++k) {
    be.est.A[std::size_t(k)] = be.est.R[std::size_t(k)] - head_value(me.critic, be.X[std::size_t(k)]);
    be.est.Ac[std::size_t(k)] = be.est.Rc[std::size_t(k)] - head_value(me.cost, be.X[std::size_t(k)]);
  }
}

CriticLosses critic_cost_losses(const BatchEval& be, const AgentParams& me) {
  Tape t;
  Tape::Handle x = t.leaf(stack_rows(be.X));
  Tape::Handle lc = head_mse(t, x, be.est.R, insert_head_leaves(t, me.critic));
  Tape::Handle lk = head_mse(t, x, be.est.Rc, insert_head_leaves(t, me.cost));
  return {t.value(lc)(0, 0), t.value(lk)(0, 0)};
}

CriticLosses critic_cost_step(const BatchEval& be, AgentParams& me, double lr) {
  Tape t;
  Tape::Handle x = t.leaf(stack_rows(be.X));
  HeadLeaves hc = insert_head_leaves(t, me.critic);
  HeadLeaves hk = insert_head_leaves(t, me.cost);
  Tape::Handle lc = head_mse(t, x, be.est.R, hc);
  Tape::Handle lk = head_mse(t, x, be.est.Rc, hk);
  CriticLosses out{t.value(lc)(0, 0), t.value(lk)(0, 0)};
  t.backward(lc);
  sgd_step(me.critic.w1, t.grad(hc.w1), lr);
  sgd_step(me.critic.b1, t.grad(hc.b1), lr);
  sgd_step(me.critic.w2, t.grad(hc.w2), lr);
  sgd_step(me.critic.b2, t.grad(hc.b2), lr);
  t.backward(lk);
  sgd_step(me.cost.w1, t.grad(hk.w1), lr);
  sgd_step(me.cost.b1, t.grad(hk.b1), lr);
  sgd_step(me.cost.w2, t.grad(hk.w2), lr);
  sgd_step(me.cost.b2, t.grad(hk.b2), lr);
  return out;
}

Blocks primal_gradient(const Memory& mem, Batch b, int agent, const ActorParams& theta,
                       double lambda, const Estimates& est) {
  if (b.len < 1 || std::size_t(b.start + b.len) > mem.size())
    throw std::invalid_argument("primal_gradient: bad batch bounds");
  if (int(est.A.size()) != b.len || int(est.Ac.size()) != b.len)
    throw std::invalid_argument("primal_gradient: estimate size mismatch");

  Tape t;
  ActorLeaves leaves = insert_actor_leaves(t, theta);
  std::map<int, Tape::Handle> cache;
  Tape::Handle total = -1;
  for (int k = 0; k < b.len; ++k) {
    const Transition& tr = mem[std::size_t(b.start + k)].agents[std::size_t(agent)];
    Tape::Handle emb = encode_window_cached(t, tr.window, leaves, cache);
    Tape::Handle lsm = log_softmax_row(t, policy_logits(t, emb, leaves));
    Matrix onehot = Matrix::zeros(kNumActions, 1);
    onehot(tr.action, 0) = 1.0;
    Tape::Handle pick = t.matmul(lsm, t.leaf(onehot));
    double coef = (est.A[std::size_t(k)] - lambda * est.Ac[std::size_t(k)]) / double(b.len);
    Tape::Handle term = t.scale(pick, coef);
    total = (total < 0) ? term : t.add(total, term);
  }
  t.backward(total);
  Blocks g;
  for (Tape::Handle h : actor_leaf_list(leaves)) g.push_back(t.grad(h));
  return g;
}

double dual_gradient(const Estimates& est, double zeta) {
  if (est.Rc.empty()) throw std::invalid_argument("dual_gradient: empty batch");
  double mean = 0.0;
  for (double x : est.Rc) mean += x;
  mean /= double(est.Rc.size());
  return zeta - mean;
}

std::vector<Blocks> consensus_update(const std::vector<Blocks>& thetas,
                                     const std::vector<Blocks>& varthetas, const Matrix& w,
                                     double sigma) {
  check_family(thetas, w, "consensus_update");
  if (varthetas.size() != thetas.size())
    throw std::invalid_argument("consensus_update: vartheta count mismatch");
  int n = int(thetas.size());
  std::vector<Blocks> out{std::size_t(n)};
  for (int i = 0; i < n; ++i) {
    Blocks acc;
    for (const Matrix& m : thetas.front()) acc.push_back(Matrix::zeros(m.rows, m.cols));
    for (int j = 0; j < n; ++j) {
      double wij = w(i, j);
      for (std::size_t k = 0; k < acc.size(); ++k)
        for (std::size_t e = 0; e < acc[k].data.size(); ++e)
          acc[k].data[e] += wij * thetas[std::size_t(j)][k].data[e];
    }
    for (std::size_t k = 0; k < acc.size(); ++k)
      for (std::size_t e = 0; e < acc[k].data.size(); ++e)
        acc[k].data[e] -= sigma * varthetas[std::size_t(i)][k].data[e];
    out[std::size_t(i)] = std::move(acc);
  }
  return out;
}

std::vector<Blocks> gradient_tracking_update(const std::vector<Blocks>& varthetas, const Matrix& w,
                                             const std::vector<Blocks>& grad_new,
                                             const std::vector<Blocks>& grad_old) {
  check_family(varthetas, w, "gradient_tracking_update");
  if (grad_new.size() != varthetas.size() || grad_old.size() != varthetas.size())
    throw std::invalid_argument("gradient_tracking_update: gradient count mismatch");
  int n = int(varthetas.size());
  std::vector<Blocks> out{std::size_t(n)};
  for (int i = 0; i < n; ++i) {
    Blocks acc;
    for (const Matrix& m : varthetas.front()) acc.push_back(Matrix::zeros(m.rows, m.cols));
    for (int j = 0; j < n; ++j) {
      double wij = w(i, j);
      for (std::size_t k = 0; k < acc.size(); ++k)
        for (std::size_t e = 0; e < acc[k].data.size(); ++e)
          acc[k].data[e] += wij * varthetas[std::size_t(j)][k].data[e];
    }
    for (std::size_t k = 0; k < acc.size(); ++k)
      for (std::size_t e = 0; e < acc[k].data.size(); ++e)
        acc[k].data[e] += grad_new[std::size_t(i)][k].data[e] - grad_old[std::size_t(i)][k].data[e];
    out[std::size_t(i)] = std::move(acc);
  }
  return out;
}

double dual_update(double lambda, double dual_grad, double rho, double gamma_reg, int tau) {
  double reg = std::pow(gamma_reg, double(tau));
  return std::max(0.0, (1.0 - rho * reg) * lambda + rho * dual_grad);
}

CycleMetrics train_cycle(const Memory& mem, std::vector<AgentParams>& agents,
                         const TrainerConfig& cfg, int tau, Rng& rng) {
  CycleMetrics m;
  if (mem.empty()) {
    m.skipped = true;
    m.warning = "train_cycle: empty memory, no update";
    for (const AgentParams& a : agents) m.mean_lambda += a.lambda;
    if (!agents.empty()) m.mean_lambda /= double(agents.size());
    return m;
  }
  int n = int(agents.size());
  if (n == 0) throw std::invalid_argument("train_cycle: no agents");
  Matrix w = consensus_weights(n);

  std::vector<Blocks> old_thetas, varthetas;
  std::vector<ActorParams> old_actors;
  for (AgentParams& a : agents) {
    old_thetas.push_back(copy_blocks(a.actor));
    varthetas.push_back(a.vartheta);
    old_actors.push_back(a.actor);
  }
  std::vector<Blocks> mixed = consensus_update(old_thetas, varthetas, w, cfg.sigma);
  for (int i = 0; i < n; ++i) assign_blocks(agents[std::size_t(i)].actor, mixed[std::size_t(i)]);

  std::vector<Blocks> fed_new, fed_old;
  std::vector<double> duals(std::size_t(n), 0.0);
  int len = std::min<int>(cfg.batch, int(mem.size()));
  for (int i = 0; i < n; ++i) {
    AgentParams& me = agents[std::size_t(i)];
    Batch b{rng.uniform_int(int(mem.size()) - len + 1), len};
    BatchEval be = eval_batch(mem, b, i, me, cfg);
    CriticLosses losses = critic_cost_step(be, me, cfg.critic_lr);
    refresh_estimates(be, me, cfg);
    // the tracker carries the descent direction of the saddle objective, so
    // the consensus step's -sigma*vartheta ascends reward and constraint value
    fed_new.push_back(negated(primal_gradient(mem, b, i, me.actor, -me.lambda, be.est)));
    if (tau == 0) {
      // zero trackers need a zero old gradient on the first cycle, otherwise
      // the tracked average stays offset by the initial gradient for good
      Blocks z;
      for (const Matrix& g : fed_new.back()) z.push_back(Matrix::zeros(g.rows, g.cols));
      fed_old.push_back(std::move(z));
    } else {
      fed_old.push_back(negated(
          primal_gradient(mem, b, i, old_actors[std::size_t(i)], -me.lambda_prev, be.est)));
    }
    duals[std::size_t(i)] = dual_gradient(be.est, cfg.zeta);
    m.critic_loss += losses.critic;
    m.cost_loss += losses.cost;
    m.grad_norm += block_norm(fed_new.back());
  }
  std::vector<Blocks> tracked = gradient_tracking_update(varthetas, w, fed_new, fed_old);
  for (int i = 0; i < n; ++i) {
    AgentParams& me = agents[std::size_t(i)];
    me.vartheta = std::move(tracked[std::size_t(i)]);
    me.lambda_prev = me.lambda;
    me.lambda = dual_update(me.lambda, duals[std::size_t(i)], cfg.rho, cfg.gamma_reg, tau);
    m.mean_lambda += me.lambda;
  }
  m.critic_loss /= double(n);
  m.cost_loss /= double(n);
  m.grad_norm /= double(n);
  m.mean_lambda /= double(n);
  return m;
}

EpisodeResult run_episode(scen::World& w, std::vector<AgentParams>& agents, bool shield_on,
                          bool comm_on, double epsilon, Rng& rng, TrainState* train,
                          bool keep_trace) {
  int n = w.spec.n_cav;
  if (int(agents.size()) != n) throw std::invalid_argument("run_episode: agent count mismatch");
  w.spec.shield_enabled = shield_on;
  w.spec.comm_enabled = comm_on;

  EpisodeResult res;
  res.returns.assign(std::size_t(n), 0.0);
  res.cost_returns.assign(std::size_t(n), 0.0);

  std::vector<enc::GraphWindow> windows{std::size_t(n)};
  auto push_graphs = [&]() {
    std::vector<comms::AgentView> views = w.views();
    for (int i = 0; i < n; ++i) {
      comms::ObservationBundle bundle = comms::build_observation(w.net, views, i, comm_on, w.t);
      windows[std::size_t(i)].push(comms::build_scene_graph(bundle, w.net));
    }
  };
  push_graphs();

  bool record = train != nullptr || keep_trace;
  std::array<bool, kNumActions> all;
  all.fill(true);
  std::array<bool, kNumActions> brake_only{};
  brake_only[std::size_t(shield::Action::brake)] = true;

  for (;;) {
    std::vector<shield::Action> actions{std::size_t(n)};
    std::vector<std::array<bool, kNumActions>> masks{std::size_t(n)};
    for (int i = 0; i < n; ++i) {
      std::array<bool, kNumActions> mask = all;
      if (shield_on) {
        shield::AgentShieldResult sr = scen::agent_shield(w, i);
        mask = sr.safe_set.emergency ? brake_only : sr.safe_set.mask();
      }
      std::vector<double> probs = policy_probs(windows[std::size_t(i)], agents[std::size_t(i)].actor);
      int a = select_action(probs, mask, epsilon, rng);
      actions[std::size_t(i)] = shield::Action(a);
      masks[std::size_t(i)] = mask;
    }

    std::vector<enc::GraphWindow> prev;
    if (record) prev = windows;
    scen::StepOutcome out = scen::step_world(w, actions, rng);
    push_graphs();
    for (int i = 0; i < n; ++i) {
      res.returns[std::size_t(i)] += out.rewards[std::size_t(i)];
      res.cost_returns[std::size_t(i)] += out.costs[std::size_t(i)];
    }
    res.steps += 1;

    if (record) {
      StepRecord rec;
      for (int i = 0; i < n; ++i) {
        Transition tr;
        tr.window = prev[std::size_t(i)];
        tr.action = int(actions[std::size_t(i)]);
        tr.reward = out.rewards[std::size_t(i)];
        tr.cost = out.costs[std::size_t(i)];
        tr.next_window = windows[std::size_t(i)];
        tr.mask = masks[std::size_t(i)];
        tr.done = out.done;
        rec.agents.push_back(std::move(tr));
      }
      if (train != nullptr) train->cycle.push_back(rec);
      if (keep_trace) res.trace.push_back(std::move(rec));
    }
    if (train != nullptr && int(train->cycle.size()) >= train->cfg.cycle_len) {
      train->last = train_cycle(train->cycle, agents, train->cfg, train->tau, rng);
      train->tau += 1;
      train->cycles += 1;
      if (train->last.skipped) train->skipped += 1;
      train->cycle.clear();
    }
    if (out.done) {
      res.reason = out.reason;
      res.collided = out.reason == scen::DoneReason::collision;
      break;
    }
  }
  // flush the terminal partial cycle so collision costs reach the learner
  if (train != nullptr && !train->cycle.empty()) {
    train->last = train_cycle(train->cycle, agents, train->cfg, train->tau, rng);
    train->tau += 1;
    train->cycles += 1;
    if (train->last.skipped) train->skipped += 1;
    train->cycle.clear();
  }
  return res;
}

num::NamedBlocks named_params(const std::vector<AgentParams>& agents) {
  num::NamedBlocks nb;
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const AgentParams& a = agents[i];
    std::string pre = "agent" + std::to_string(i) + ".";
    auto ptrs = actor_blocks(a.actor);
    auto names = actor_block_names(a.actor);
    for (std::size_t k = 0; k < ptrs.size(); ++k)
      nb.emplace_back(pre + "actor." + names[k], *ptrs[k]);
    nb.emplace_back(pre + "critic.w1", a.critic.w1);
    nb.emplace_back(pre + "critic.b1", a.critic.b1);
    nb.emplace_back(pre + "critic.w2", a.critic.w2);
    nb.emplace_back(pre + "critic.b2", a.critic.b2);
    nb.emplace_back(pre + "cost.w1", a.cost.w1);
    nb.emplace_back(pre + "cost.b1", a.cost.b1);
    nb.emplace_back(pre + "cost.w2", a.cost.w2);
    nb.emplace_back(pre + "cost.b2", a.cost.b2);
    Matrix lam(1, 1);
    lam(0, 0) = a.lambda;
    nb.emplace_back(pre + "lambda", lam);
  }
  return nb;
}

std::vector<AgentParams> params_from_named(const num::NamedBlocks& nb, EncoderKind kind,
                                           int n_agents) {
  std::map<std::string, const Matrix*> lut;
  for (const auto& [name, m] : nb) lut[name] = &m;
  auto fetch = [&](const std::string& name, Matrix& dst) {
    auto it = lut.find(name);
    if (it == lut.end()) throw std::runtime_error("checkpoint: missing block " + name);
    if (!dst.same_shape(*it->second))
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    dst = *it->second;
  };
  std::vector<AgentParams> agents = make_agents(n_agents, kind, 0);
  for (int i = 0; i < n_agents; ++i) {
    AgentParams& a = agents[std::size_t(i)];
    std::string pre = "agent" + std::to_string(i) + ".";
    auto ptrs = actor_blocks(a.actor);
    auto names = actor_block_names(a.actor);
    for (std::size_t k = 0; k < ptrs.size(); ++k) fetch(pre + "actor." + names[k], *ptrs[k]);
    fetch(pre + "critic.w1", a.critic.w1);
    fetch(pre + "critic.b1", a.critic.b1);
    fetch(pre + "critic.w2", a.critic.w2);
    fetch(pre + "critic.b2", a.critic.b2);
    fetch(pre + "cost.w1", a.cost.w1);
    fetch(pre + "cost.b1", a.cost.b1);
    fetch(pre + "cost.w2", a.cost.w2);
    fetch(pre + "cost.b2", a.cost.b2);
    auto it = lut.find(pre + "lambda");
    if (it == lut.end()) throw std::runtime_error("checkpoint: missing block " + pre + "lambda");
    if (it->second->rows != 1 || it->second->cols != 1)
      throw std::runtime_error("checkpoint: shape mismatch for " + pre + "lambda");
    a.lambda = (*it->second)(0, 0);
    if (a.lambda < 0.0) throw std::runtime_error("checkpoint: negative lambda for " + pre);
    a.lambda_prev = a.lambda;
    for (Matrix& v : a.vartheta) v.fill(0.0);
  }
  return agents;
}

}  // namespace cav::marl
