#pragma once

#include <memory>

#include "graphdepth/sage.hpp"
#include "graphdepth/tensor.hpp"

namespace graphdepth {

struct ConvParams {
  Tensor w;  // Cout x Cin x K x K
  Tensor b;  // Cout
};

ConvParams make_conv_params(int64_t c_in, int64_t c_out, int64_t k, Rng& rng);

// conv (pad keeps extent at stride 1) followed by relu
Tensor conv_block(Tape& tape, const Tensor& x, const ConvParams& p, int64_t stride);

// Squeeze-excitation gate: sigmoid(W2 relu(W1 GAP(X) + b1) + b2), applied
// per channel. Hidden width is C/reduction rounded up.
struct AttentionParams {
  int64_t channels = 0;
  int64_t hidden = 0;
  Tensor w1, b1;
  Tensor w2, b2;
};

AttentionParams make_attention_params(int64_t channels, Rng& rng, int64_t reduction = 16);

Tensor channel_attention(Tape& tape, const Tensor& x, const AttentionParams& params);

struct Prediction {
  Tensor depth;    // B x H x W, in (0, max_depth)
  Tensor log_var;  // B x H x W, clamped to [-10, 10]; valid iff has_log_var
  bool has_log_var = false;
};

struct HeadParams {
  ConvParams depth;
  ConvParams unc;
  double max_depth = 10.0;
  bool has_unc = true;
};

HeadParams make_head_params(int64_t c_in, double max_depth, bool uncertainty, Rng& rng);

// Heads run at 1/4 resolution and bilinearly upsample 4x to full size.
Prediction heads(Tape& tape, const Tensor& g3, const HeadParams& params);

struct DecoderStageParams {
  bool use_attention = true;
  bool use_gnn = false;
  AttentionParams attention;
  SageLayerParams sage;  // when use_gnn
  ConvParams conv;       // otherwise
};

// Builds the adjacency for a feature map about to enter the GNN (adaptive
// k-NN graphs read the map's values).
using GraphFactory = std::function<std::shared_ptr<const BatchedGraph>(const Tensor&)>;

// upsample2x(g_prev), concat skip, gate, then GraphSAGE or conv+relu.
// graph_for is called only when the stage runs the GNN.
Tensor decoder_stage(Tape& tape, const Tensor& g_prev, const Tensor& skip,
                     const DecoderStageParams& params, const GraphFactory& graph_for,
                     Aggregator aggregator = Aggregator::mean);

}  // namespace graphdepth
