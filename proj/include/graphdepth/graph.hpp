#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace graphdepth {

enum class GraphKind { grid4, grid8, knn };

const char* graph_kind_name(GraphKind kind);
GraphKind graph_kind_from_name(const std::string& name);

// Directed adjacency over the nodes of one image, CSR by destination:
// src[offsets[v] .. offsets[v+1]) are the in-neighbors of v, ascending.
struct GraphTopology {
  GraphKind kind = GraphKind::grid8;
  int64_t n_nodes = 0;
  int64_t k = 0;  // knn only
  std::vector<int64_t> offsets;
  std::vector<int64_t> src;

  int64_t num_edges() const { return static_cast<int64_t>(src.size()); }
  int64_t degree(int64_t v) const { return offsets[v + 1] - offsets[v]; }
};

struct KnnParams {
  int64_t k = 16;
  double alpha = 0.7;
  double beta = 0.3;
  // L2-normalize features and scale coordinates to [0,1] per axis before
  // the distance; raw mode kept for study.
  bool normalize = true;
};

// Symmetric lattice adjacency: 4-conn = Manhattan distance 1,
// 8-conn = Chebyshev distance 1. No self loops.
GraphTopology build_grid(int64_t H, int64_t W, int connectivity);

// Cached by (H, W, connectivity); grids depend only on extents.
std::shared_ptr<const GraphTopology> build_grid_cached(int64_t H, int64_t W, int connectivity);

// In-edges from the k nearest neighbors of each node under
// d_ij = alpha*||f_i - f_j||_2 + beta*||p_i - p_j||_2, ties toward the
// smaller index. features: n x dim row-major; coords: n x 2 (row, col).
GraphTopology build_knn(const double* features, int64_t n_nodes, int64_t dim,
                        const double* coords, const KnnParams& params);

// One topology per image glued into a block-diagonal graph.
struct BatchedGraph {
  GraphKind kind = GraphKind::grid8;
  int64_t batch = 0;
  int64_t nodes_per_image = 0;
  int64_t n_nodes = 0;
  std::vector<int64_t> offsets;  // CSR by destination, global ids
  std::vector<int64_t> src;
  std::vector<int32_t> batch_vector;  // node -> image index, [0..0,1..1,...]
  // transpose (CSR by source) for deterministic gather-style backward
  std::vector<int64_t> out_offsets;
  std::vector<int64_t> out_dst;

  int64_t num_edges() const { return static_cast<int64_t>(src.size()); }
};

// Pass one topology to share it across the batch (grids) or exactly B
// per-image topologies (knn).
BatchedGraph broadcast_batch(const std::vector<GraphTopology>& per_image, int64_t B,
                             int64_t nodes_per_image);

// Recovers image m's topology from the batched graph.
GraphTopology extract_block(const BatchedGraph& g, int64_t m);

// Plain-text debug dump, one "src dst" line per edge.
std::string export_edge_list(const GraphTopology& g);

}  // namespace graphdepth
