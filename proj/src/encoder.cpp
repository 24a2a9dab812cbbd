#include "cav/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cav::enc {

using comms::kFeatureDim;
using comms::NodeKind;
using comms::SceneGraph;
using num::Matrix;
using num::Rng;
using num::Tape;

EncoderParams EncoderParams::init(Rng& rng) {
  EncoderParams p;
  double a1 = std::sqrt(1.0 / kFeatureDim);
  double ah = std::sqrt(1.0 / kHidden);
  p.w1 = num::rand_matrix(rng, kFeatureDim, kHidden, -a1, a1);
  p.w2 = num::rand_matrix(rng, kHidden, kHidden, -ah, ah);
  p.wq = num::rand_matrix(rng, kHidden, kHidden, -ah, ah);
  p.wk = num::rand_matrix(rng, kHidden, kHidden, -ah, ah);
  p.wv = num::rand_matrix(rng, kHidden, kHidden, -ah, ah);
  p.wo = num::rand_matrix(rng, kHidden, kEmbed, -ah, ah);
  return p;
}

FcParams FcParams::init(Rng& rng) {
  FcParams p;
  double a1 = std::sqrt(1.0 / kFcInput);
  double a2 = std::sqrt(1.0 / kFcHidden);
  p.w1 = num::rand_matrix(rng, kFcInput, kFcHidden, -a1, a1);
  p.b1 = Matrix::zeros(1, kFcHidden);
  p.w2 = num::rand_matrix(rng, kFcHidden, kEmbed, -a2, a2);
  p.b2 = Matrix::zeros(1, kEmbed);
  return p;
}

void GraphWindow::push(comms::SceneGraph g) {
  if (graphs.empty()) {
    graphs.assign(kWindow, g);
    return;
  }
  graphs.erase(graphs.begin());
  graphs.push_back(std::move(g));
}

EncoderLeaves insert_leaves(Tape& t, const EncoderParams& p) {
  return {t.leaf(p.w1), t.leaf(p.w2), t.leaf(p.wq), t.leaf(p.wk), t.leaf(p.wv), t.leaf(p.wo)};
}

FcLeaves insert_leaves(Tape& t, const FcParams& p) {
  return {t.leaf(p.w1), t.leaf(p.b1), t.leaf(p.w2), t.leaf(p.b2)};
}

Matrix normalized_adjacency(const SceneGraph& g) {
  int n = int(g.nodes.size());
  if (n == 0) throw std::invalid_argument("gcn_forward: empty graph");
  Matrix a = Matrix::zeros(n, n);
  for (int i = 0; i < n; ++i) a(i, i) = 1.0;
  for (auto [u, v] : g.edges) {
    a(u, v) = 1.0;
    a(v, u) = 1.0;
  }
  std::vector<double> dinv(n);
  for (int i = 0; i < n; ++i) {
    double d = 0;
    for (int j = 0; j < n; ++j) d += a(i, j);
    dinv[i] = 1.0 / std::sqrt(d);
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) *= dinv[i] * dinv[j];
  return a;
}

Matrix feature_matrix(const SceneGraph& g) {
  int n = int(g.nodes.size());
  Matrix x = Matrix::zeros(n, kFeatureDim);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < kFeatureDim; ++j) x(i, j) = g.nodes[i].f[j];
  return x;
}

Tape::Handle gcn_forward(Tape& t, const SceneGraph& g, Tape::Handle w1, Tape::Handle w2) {
  Tape::Handle ahat = t.leaf(normalized_adjacency(g));
  Tape::Handle x = t.leaf(feature_matrix(g));
  Tape::Handle h1 = t.relu(t.matmul(t.matmul(ahat, x), w1));
  return t.relu(t.matmul(t.matmul(ahat, h1), w2));
}

Attention temporal_attention(Tape& t, Tape::Handle seq, Tape::Handle wq, Tape::Handle wk,
                             Tape::Handle wv) {
  int rows = t.value(seq).rows;
  if (rows == 0) throw std::invalid_argument("temporal_attention: empty sequence");
  Tape::Handle q = t.matmul(t.slice_rows(seq, rows - 1, rows), wq);
  Tape::Handle k = t.matmul(seq, wk);
  Tape::Handle v = t.matmul(seq, wv);
  double dk = double(t.value(k).cols);
  Tape::Handle scores = t.scale(t.matmul(q, t.transpose(k)), 1.0 / std::sqrt(dk));
  Tape::Handle weights = t.softmax(scores);
  return {t.matmul(weights, v), weights};
}

Tape::Handle encode(Tape& t, const GraphWindow& w, const EncoderLeaves& p) {
  if (w.graphs.empty()) throw std::invalid_argument("encode: empty window");
  std::vector<Tape::Handle> ego_rows;
  for (const SceneGraph& g : w.graphs) {
    int idx = g.ego_node_index();
    if (idx < 0) throw std::invalid_argument("encode: ego node missing");
    Tape::Handle h2 = gcn_forward(t, g, p.w1, p.w2);
    ego_rows.push_back(t.slice_rows(h2, idx, idx + 1));
  }
  Tape::Handle seq =
      ego_rows.size() == 1 ? ego_rows[0] : t.concat_rows(ego_rows);
  Attention att = temporal_attention(t, seq, p.wq, p.wk, p.wv);
  return t.tanh(t.matmul(att.context, p.wo));
}

Matrix fc_input(const SceneGraph& g) {
  int ego = g.ego_node_index();
  if (ego < 0) throw std::invalid_argument("fc_input: ego node missing");
  struct Slot {
    double d2;
    int ref_id;
    int node;
  };
  std::vector<Slot> others;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const auto& nd = g.nodes[i];
    if (nd.kind != NodeKind::vehicle || int(i) == ego) continue;
    others.push_back({nd.f[0] * nd.f[0] + nd.f[1] * nd.f[1], nd.ref_id, int(i)});
  }
  std::sort(others.begin(), others.end(), [](const Slot& a, const Slot& b) {
    return a.d2 != b.d2 ? a.d2 < b.d2 : a.ref_id < b.ref_id;
  });

  Matrix x = Matrix::zeros(1, kFcInput);
  for (int j = 0; j < kFeatureDim; ++j) x(0, j) = g.nodes[ego].f[j];
  for (int s = 0; s < kNearest && s < int(others.size()); ++s)
    for (int j = 0; j < kFeatureDim; ++j)
      x(0, (s + 1) * kFeatureDim + j) = g.nodes[others[s].node].f[j];
  return x;
}

Tape::Handle encode_fc_input(Tape& t, Tape::Handle x, const FcLeaves& p) {
  Tape::Handle h = t.relu(t.add_row(t.matmul(x, p.w1), p.b1));
  return t.tanh(t.add_row(t.matmul(h, p.w2), p.b2));
}

Tape::Handle encode_fc(Tape& t, const GraphWindow& w, const FcLeaves& p) {
  if (w.graphs.empty()) throw std::invalid_argument("encode_fc: empty window");
  return encode_fc_input(t, t.leaf(fc_input(w.graphs.back())), p);
}

Matrix encode_value(const GraphWindow& w, const EncoderParams& p) {
  Tape t;
  return t.value(encode(t, w, insert_leaves(t, p)));
}

}  // namespace cav::enc
