#include "graphdepth/layers.hpp"

#include <cmath>

#include "graphdepth/errors.hpp"
#include "graphdepth/ops.hpp"
#include "graphdepth/rng.hpp"

namespace graphdepth {

ConvParams make_conv_params(int64_t c_in, int64_t c_out, int64_t k, Rng& rng) {
  const double fan = static_cast<double>((c_in + c_out) * k * k);
  const double bound = std::sqrt(6.0 / fan);
  ConvParams p;
  p.w = Tensor({c_out, c_in, k, k});
  double* w = p.w.data();
  for (int64_t i = 0; i < p.w.numel(); ++i) w[i] = rng.uniform(-bound, bound);
  p.b = Tensor({c_out});
  return p;
}

Tensor conv_block(Tape& tape, const Tensor& x, const ConvParams& p, int64_t stride) {
  const int64_t k = p.w.extent(2);
  return relu(tape, conv2d(tape, x, p.w, p.b, stride, k / 2));
}

AttentionParams make_attention_params(int64_t channels, Rng& rng, int64_t reduction) {
  if (channels < 1) throw ConfigError("attention: channel count must be positive");
  if (reduction < 1) throw ConfigError("attention: reduction must be positive");
  AttentionParams p;
  p.channels = channels;
  p.hidden = (channels + reduction - 1) / reduction;
  const double bound = std::sqrt(6.0 / static_cast<double>(channels + p.hidden));
  p.w1 = Tensor({p.hidden, channels});
  p.w2 = Tensor({channels, p.hidden});
  double* w1 = p.w1.data();
  for (int64_t i = 0; i < p.w1.numel(); ++i) w1[i] = rng.uniform(-bound, bound);
  double* w2 = p.w2.data();
  for (int64_t i = 0; i < p.w2.numel(); ++i) w2[i] = rng.uniform(-bound, bound);
  p.b1 = Tensor({p.hidden});
  p.b2 = Tensor({channels});
  return p;
}

Tensor channel_attention(Tape& tape, const Tensor& x, const AttentionParams& params) {
  if (x.ndim() != 4)
    throw ConfigError("channel_attention: input must be BxCxHxW, got " + shape_str(x.shape()));
  if (x.extent(1) != params.channels)
    throw ConfigError("channel_attention: params built for " + std::to_string(params.channels) +
                      " channels, input has " + std::to_string(x.extent(1)));
  const int64_t B = x.extent(0);
  Tensor pooled = reshape(tape, global_avg_pool(tape, x), {B, params.channels});
  Tensor hidden = relu(tape, linear(tape, pooled, params.w1, params.b1));
  Tensor gate = sigmoid(tape, linear(tape, hidden, params.w2, params.b2));
  return mul_channels(tape, x, gate);
}

HeadParams make_head_params(int64_t c_in, double max_depth, bool uncertainty, Rng& rng) {
  if (max_depth <= 0.0) throw ConfigError("heads: max_depth must be positive");
  HeadParams p;
  p.max_depth = max_depth;
  p.has_unc = uncertainty;
  p.depth = make_conv_params(c_in, 1, 3, rng);
  if (uncertainty) p.unc = make_conv_params(c_in, 1, 3, rng);
  return p;
}

namespace {

Tensor upsample4x_to_map(Tape& tape, const Tensor& x) {
  Tensor up = upsample2x_bilinear(tape, upsample2x_bilinear(tape, x));
  return reshape(tape, up, {up.extent(0), up.extent(2), up.extent(3)});
}

}  // namespace

Prediction heads(Tape& tape, const Tensor& g3, const HeadParams& params) {
  Prediction pred;
  Tensor d = sigmoid(tape, conv2d(tape, g3, params.depth.w, params.depth.b, 1, 1));
  pred.depth = upsample4x_to_map(tape, scale(tape, d, params.max_depth));
  if (params.has_unc) {
    Tensor s = clamp(tape, conv2d(tape, g3, params.unc.w, params.unc.b, 1, 1), -10.0, 10.0);
    pred.log_var = upsample4x_to_map(tape, s);
    pred.has_log_var = true;
  }
  return pred;
}

Tensor decoder_stage(Tape& tape, const Tensor& g_prev, const Tensor& skip,
                     const DecoderStageParams& params, const GraphFactory& graph_for,
                     Aggregator aggregator) {
  Tensor d = upsample2x_bilinear(tape, g_prev);
  if (d.extent(0) != skip.extent(0) || d.extent(2) != skip.extent(2) ||
      d.extent(3) != skip.extent(3))
    throw UsageError("decoder_stage: upsampled map " + shape_str(d.shape()) +
                     " does not match skip " + shape_str(skip.shape()) +
                     " (wrong skip index?)");
  Tensor s = concat_channels(tape, d, skip);
  if (params.use_attention) s = channel_attention(tape, s, params.attention);
  if (params.use_gnn) return sage_forward(tape, s, graph_for(s), params.sage, aggregator);
  return conv_block(tape, s, params.conv, 1);
}

}  // namespace graphdepth
