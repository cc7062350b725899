#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "graphdepth/graph.hpp"
#include "graphdepth/layers.hpp"

namespace graphdepth {

struct ModelConfig {
  // x1..x4 widths at 1/4, 1/8, 1/16, 1/32 of the input
  std::array<int64_t, 4> encoder_channels{16, 32, 64, 128};
  int64_t stem_channels = 8;  // the 1/2-resolution block feeding x1
  GraphKind graph = GraphKind::grid8;
  KnnParams knn;
  bool multi_scale_gnn = true;
  bool bottleneck_gnn_only = false;
  bool channel_attention = true;
  bool uncertainty_head = true;
  Aggregator aggregator = Aggregator::mean;
  double max_depth = 10.0;
  uint64_t seed = 1;
};

void validate(const ModelConfig& config);

struct ForwardStats {
  // downsample factors at which the GNN ran, in execution order (32, 16, 8)
  std::vector<int64_t> gnn_scales;
  // count of GNN sites where k had to shrink to fit a small map
  int64_t knn_k_clamped = 0;
};

class GraphDepthModel {
 public:
  explicit GraphDepthModel(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  bool gnn_at_bottleneck() const {
    return config_.multi_scale_gnn || config_.bottleneck_gnn_only;
  }
  bool gnn_at_decoder() const { return config_.multi_scale_gnn; }

  // Stable enumeration; order is part of the checkpoint contract.
  std::vector<std::pair<std::string, Tensor*>> named_parameters();
  int64_t parameter_count();
  void watch_parameters(Tape& tape);

  // Input Bx3xHxW with H, W divisible by 32, values in [0,1].
  std::array<Tensor, 4> encode(Tape& tape, const Tensor& input) const;
  Prediction forward(Tape& tape, const Tensor& input, ForwardStats* stats = nullptr) const;

 private:
  std::shared_ptr<const BatchedGraph> graph_for(const Tensor& map, ForwardStats* stats) const;

  ModelConfig config_;
  ConvParams stem_;
  std::array<ConvParams, 4> enc_;
  ConvParams bneck_conv_;
  SageLayerParams bneck_sage_;
  std::array<DecoderStageParams, 3> stages_;
  HeadParams heads_;
};

// Checkpoint = plain-text manifest + raw little-endian FP64 blob, written as
// "<prefix>.manifest.txt" and "<prefix>.params.bin". Round trips bit-exactly.
using NamedArrays = std::vector<std::pair<std::string, std::vector<double>>>;

void save_checkpoint(const std::string& prefix, GraphDepthModel& model, int64_t step,
                     const NamedArrays& extras = {});
GraphDepthModel load_checkpoint(const std::string& prefix, int64_t* step = nullptr,
                                NamedArrays* extras = nullptr);

}  // namespace graphdepth
