#pragma once

#include "cav/comms.hpp"
#include "cav/rng.hpp"
#include "cav/tape.hpp"

namespace cav::enc {

inline constexpr int kHidden = 32;  // GCN width H
inline constexpr int kEmbed = 32;   // embedding width E
inline constexpr int kWindow = 5;   // temporal window T_w
inline constexpr int kNearest = 6;  // FC baseline slot count
inline constexpr int kFcHidden = 64;
inline constexpr int kFcInput = (kNearest + 1) * comms::kFeatureDim;

struct EncoderParams {
  num::Matrix w1, w2;          // GCN layers, F x H and H x H
  num::Matrix wq, wk, wv;      // attention projections, H x H
  num::Matrix wo;              // output projection, H x E
  static EncoderParams init(num::Rng& rng);
};

struct FcParams {
  num::Matrix w1, b1, w2, b2;  // kFcInput x kFcHidden, then kFcHidden x E
  static FcParams init(num::Rng& rng);
};

// sliding window of per-agent scene graphs, oldest first; the first push
// fills the whole window so warm-up steps repeat the first graph
struct GraphWindow {
  std::vector<comms::SceneGraph> graphs;
  void push(comms::SceneGraph g);
};

struct EncoderLeaves {
  num::Tape::Handle w1, w2, wq, wk, wv, wo;
};
struct FcLeaves {
  num::Tape::Handle w1, b1, w2, b2;
};

EncoderLeaves insert_leaves(num::Tape& t, const EncoderParams& p);
FcLeaves insert_leaves(num::Tape& t, const FcParams& p);

num::Matrix normalized_adjacency(const comms::SceneGraph& g);  // D^-1/2 (A+I) D^-1/2
num::Matrix feature_matrix(const comms::SceneGraph& g);        // n x F

// two relu GCN layers over the normalized adjacency; returns n x H
num::Tape::Handle gcn_forward(num::Tape& t, const comms::SceneGraph& g,
                              num::Tape::Handle w1, num::Tape::Handle w2);

struct Attention {
  num::Tape::Handle context;  // 1 x H
  num::Tape::Handle weights;  // 1 x T
};
// single head, query = last row of seq
Attention temporal_attention(num::Tape& t, num::Tape::Handle seq, num::Tape::Handle wq,
                             num::Tape::Handle wk, num::Tape::Handle wv);

// GCN per graph, ego rows stacked, attention, projection, tanh; 1 x E
num::Tape::Handle encode(num::Tape& t, const GraphWindow& w, const EncoderLeaves& p);

// flattened [ego | kNearest nearest vehicles, zero-padded] of the latest graph
num::Matrix fc_input(const comms::SceneGraph& g);
num::Tape::Handle encode_fc_input(num::Tape& t, num::Tape::Handle x, const FcLeaves& p);
num::Tape::Handle encode_fc(num::Tape& t, const GraphWindow& w, const FcLeaves& p);

num::Matrix encode_value(const GraphWindow& w, const EncoderParams& p);

}  // namespace cav::enc
