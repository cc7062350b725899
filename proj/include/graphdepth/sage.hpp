#pragma once

#include <memory>

#include "graphdepth/graph.hpp"
#include "graphdepth/tensor.hpp"

namespace graphdepth {

class Rng;

enum class Aggregator { mean, max };

const char* aggregator_name(Aggregator a);
Aggregator aggregator_from_name(const std::string& name);

struct SageLayerParams {
  Tensor weight;  // Cout x 2*Cin
  Tensor bias;    // Cout
};

// Uniform +-sqrt(6/(2*Cin+Cout)) weights, zero bias.
SageLayerParams make_sage_params(int64_t c_in, int64_t c_out, Rng& rng);

// Per-node mean (or max) of in-neighbor rows; empty neighborhood -> zero row.
Tensor scatter_mean(Tape& tape, const Tensor& x,
                    const std::shared_ptr<const BatchedGraph>& graph);
Tensor scatter_max(Tape& tape, const Tensor& x,
                   const std::shared_ptr<const BatchedGraph>& graph);

// relu(W . concat(h_v, aggregate_{N(v)} h_u) + bias) over the flattened node
// view of a BxCxHxW map, reshaped back to BxCoutxHxW.
Tensor sage_forward(Tape& tape, const Tensor& x,
                    const std::shared_ptr<const BatchedGraph>& graph,
                    const SageLayerParams& params, Aggregator aggregator = Aggregator::mean);

}  // namespace graphdepth
