#include "graphdepth/sage.hpp"

#include <cmath>

#include "graphdepth/errors.hpp"
#include "graphdepth/kernels.hpp"
#include "graphdepth/ops.hpp"
#include "graphdepth/rng.hpp"

namespace graphdepth {

const char* aggregator_name(Aggregator a) {
  return a == Aggregator::mean ? "mean" : "max";
}

Aggregator aggregator_from_name(const std::string& name) {
  if (name == "mean") return Aggregator::mean;
  if (name == "max") return Aggregator::max;
  throw ConfigError("unknown aggregator '" + name + "' (want mean or max)");
}

SageLayerParams make_sage_params(int64_t c_in, int64_t c_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(2 * c_in + c_out));
  SageLayerParams p;
  p.weight = Tensor({c_out, 2 * c_in});
  double* w = p.weight.data();
  for (int64_t i = 0; i < p.weight.numel(); ++i) w[i] = rng.uniform(-bound, bound);
  p.bias = Tensor({c_out});
  return p;
}

namespace {

void check_graph(const Tensor& x, const BatchedGraph& g, const char* op) {
  if (x.ndim() != 2)
    throw ConfigError(std::string(op) + ": node features must be NxC, got " +
                      shape_str(x.shape()));
  if (x.extent(0) != g.n_nodes)
    throw ConfigError(std::string(op) + ": " + std::to_string(x.extent(0)) +
                      " feature rows vs " + std::to_string(g.n_nodes) + " graph nodes");
}

}  // namespace

Tensor scatter_mean(Tape& tape, const Tensor& x,
                    const std::shared_ptr<const BatchedGraph>& graph) {
  check_graph(x, *graph, "scatter_mean");
  const int64_t N = x.extent(0), C = x.extent(1);
  auto y = std::make_shared<std::vector<double>>(N * C);
  kernels::scatter_mean_forward(x.data(), N, C, graph->offsets.data(), graph->src.data(),
                                y->data());
  const int64_t px = tape.node_of(x);
  const std::shared_ptr<const BatchedGraph> g = graph;
  return tape.make_output(
      {N, C}, std::move(y), "scatter_mean",
      [px, g, N, C](Tape& t, const std::vector<double>& gout) {
        if (px < 0) return;
        std::vector<double> gx(N * C);
        kernels::scatter_mean_backward(gout.data(), N, C, g->out_offsets.data(),
                                       g->out_dst.data(), g->offsets.data(), gx.data());
        t.accumulate(px, gx.data(), N * C, "scatter_mean");
      });
}

Tensor scatter_max(Tape& tape, const Tensor& x,
                   const std::shared_ptr<const BatchedGraph>& graph) {
  check_graph(x, *graph, "scatter_max");
  const int64_t N = x.extent(0), C = x.extent(1);
  auto y = std::make_shared<std::vector<double>>(N * C);
  auto argmax = std::make_shared<std::vector<int64_t>>(N * C);
  kernels::scatter_max_forward(x.data(), N, C, graph->offsets.data(), graph->src.data(),
                               y->data(), argmax->data());
  const int64_t px = tape.node_of(x);
  const std::shared_ptr<const BatchedGraph> g = graph;
  return tape.make_output(
      {N, C}, std::move(y), "scatter_max",
      [px, g, argmax, N, C](Tape& t, const std::vector<double>& gout) {
        if (px < 0) return;
        std::vector<double> gx(N * C);
        kernels::scatter_max_backward(gout.data(), N, C, g->out_offsets.data(),
                                      g->out_dst.data(), argmax->data(), gx.data());
        t.accumulate(px, gx.data(), N * C, "scatter_max");
      });
}

Tensor sage_forward(Tape& tape, const Tensor& x,
                    const std::shared_ptr<const BatchedGraph>& graph,
                    const SageLayerParams& params, Aggregator aggregator) {
  if (x.ndim() != 4)
    throw ConfigError("sage_forward: input must be BxCxHxW, got " + shape_str(x.shape()));
  const int64_t B = x.extent(0), C = x.extent(1), H = x.extent(2), W = x.extent(3);
  if (graph->batch != B || graph->nodes_per_image != H * W)
    throw UsageError("sage_forward: graph covers " + std::to_string(graph->batch) + "x" +
                     std::to_string(graph->nodes_per_image) + " nodes, feature map is " +
                     std::to_string(B) + "x" + std::to_string(H * W));
  if (params.weight.ndim() != 2 || params.weight.extent(1) != 2 * C)
    throw ConfigError("sage_forward: weight must be Coutx" + std::to_string(2 * C) + ", got " +
                      shape_str(params.weight.shape()));
  const int64_t Cout = params.weight.extent(0);

  Tensor flat = nchw_to_nodes(tape, x);
  Tensor agg = aggregator == Aggregator::mean ? scatter_mean(tape, flat, graph)
                                              : scatter_max(tape, flat, graph);
  Tensor cat = concat_cols(tape, flat, agg);
  Tensor out = relu(tape, linear(tape, cat, params.weight, params.bias));
  return nodes_to_nchw(tape, out, B, Cout, H, W);
}

}  // namespace graphdepth
