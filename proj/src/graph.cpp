#include "graphdepth/graph.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <tuple>

#include "graphdepth/errors.hpp"

namespace graphdepth {

const char* graph_kind_name(GraphKind kind) {
  switch (kind) {
    case GraphKind::grid4: return "grid4";
    case GraphKind::grid8: return "grid8";
    case GraphKind::knn: return "knn";
  }
  throw std::logic_error("unreachable graph kind");
}

GraphKind graph_kind_from_name(const std::string& name) {
  if (name == "grid4") return GraphKind::grid4;
  if (name == "grid8") return GraphKind::grid8;
  if (name == "knn") return GraphKind::knn;
  throw ConfigError("unknown graph kind '" + name + "' (want grid4, grid8, or knn)");
}

GraphTopology build_grid(int64_t H, int64_t W, int connectivity) {
  if (H < 1 || W < 1)
    throw ConfigError("build_grid: extents must be positive, got " + std::to_string(H) + "x" +
                      std::to_string(W));
  if (connectivity != 4 && connectivity != 8)
    throw ConfigError("build_grid: connectivity must be 4 or 8, got " +
                      std::to_string(connectivity));
  GraphTopology g;
  g.kind = connectivity == 4 ? GraphKind::grid4 : GraphKind::grid8;
  g.n_nodes = H * W;
  g.offsets.resize(g.n_nodes + 1, 0);
  g.src.reserve(static_cast<size_t>(g.n_nodes) * connectivity);
  for (int64_t r = 0; r < H; ++r)
    for (int64_t c = 0; c < W; ++c) {
      // lexicographic (dr, dc) enumeration keeps sources ascending
      for (int64_t dr = -1; dr <= 1; ++dr)
        for (int64_t dc = -1; dc <= 1; ++dc) {
          if (dr == 0 && dc == 0) continue;
          if (connectivity == 4 && dr != 0 && dc != 0) continue;
          const int64_t sr = r + dr, sc = c + dc;
          if (sr < 0 || sr >= H || sc < 0 || sc >= W) continue;
          g.src.push_back(sr * W + sc);
        }
      g.offsets[r * W + c + 1] = static_cast<int64_t>(g.src.size());
    }
  return g;
}

std::shared_ptr<const GraphTopology> build_grid_cached(int64_t H, int64_t W, int connectivity) {
  static std::mutex mu;
  static std::map<std::tuple<int64_t, int64_t, int>, std::shared_ptr<const GraphTopology>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_tuple(H, W, connectivity);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  auto g = std::make_shared<const GraphTopology>(build_grid(H, W, connectivity));
  cache.emplace(key, g);
  return g;
}

GraphTopology build_knn(const double* features, int64_t n_nodes, int64_t dim,
                        const double* coords, const KnnParams& params) {
  if (params.k < 1) throw ConfigError("build_knn: k must be positive");
  if (params.alpha < 0.0 || params.beta < 0.0)
    throw ConfigError("build_knn: alpha and beta must be non-negative");
  if (n_nodes <= params.k)
    throw ConfigError("build_knn: need more than k=" + std::to_string(params.k) +
                      " nodes, got " + std::to_string(n_nodes));

  std::vector<double> f(features, features + n_nodes * dim);
  std::vector<double> p(coords, coords + n_nodes * 2);
  if (params.normalize) {
    for (int64_t i = 0; i < n_nodes; ++i) {
      double norm = 0.0;
      for (int64_t d = 0; d < dim; ++d) norm += f[i * dim + d] * f[i * dim + d];
      norm = std::sqrt(norm);
      if (norm > 0.0)
        for (int64_t d = 0; d < dim; ++d) f[i * dim + d] /= norm;
      else
        for (int64_t d = 0; d < dim; ++d) f[i * dim + d] = 0.0;
    }
    for (int64_t axis = 0; axis < 2; ++axis) {
      double lo = p[axis], hi = p[axis];
      for (int64_t i = 0; i < n_nodes; ++i) {
        lo = std::min(lo, p[i * 2 + axis]);
        hi = std::max(hi, p[i * 2 + axis]);
      }
      const double span = hi - lo;
      for (int64_t i = 0; i < n_nodes; ++i)
        p[i * 2 + axis] = span > 0.0 ? (p[i * 2 + axis] - lo) / span : 0.0;
    }
  }

  GraphTopology g;
  g.kind = GraphKind::knn;
  g.k = params.k;
  g.n_nodes = n_nodes;
  g.offsets.resize(n_nodes + 1, 0);
  g.src.resize(static_cast<size_t>(n_nodes) * params.k);

  std::vector<std::pair<double, int64_t>> cand(n_nodes - 1);
  for (int64_t i = 0; i < n_nodes; ++i) {
    int64_t m = 0;
    for (int64_t j = 0; j < n_nodes; ++j) {
      if (j == i) continue;
      double df = 0.0;
      for (int64_t d = 0; d < dim; ++d) {
        const double t = f[i * dim + d] - f[j * dim + d];
        df += t * t;
      }
      const double dy = p[i * 2] - p[j * 2];
      const double dx = p[i * 2 + 1] - p[j * 2 + 1];
      cand[m++] = {params.alpha * std::sqrt(df) + params.beta * std::sqrt(dx * dx + dy * dy), j};
    }
    std::partial_sort(cand.begin(), cand.begin() + params.k, cand.end());
    int64_t* row = g.src.data() + i * params.k;
    for (int64_t t = 0; t < params.k; ++t) row[t] = cand[t].second;
    std::sort(row, row + params.k);
    g.offsets[i + 1] = (i + 1) * params.k;
  }
  return g;
}

BatchedGraph broadcast_batch(const std::vector<GraphTopology>& per_image, int64_t B,
                             int64_t nodes_per_image) {
  if (B < 1) throw UsageError("broadcast_batch: batch size must be positive");
  if (per_image.empty())
    throw UsageError("broadcast_batch: need at least one topology");
  if (per_image.size() != 1 && static_cast<int64_t>(per_image.size()) != B)
    throw UsageError("broadcast_batch: got " + std::to_string(per_image.size()) +
                     " topologies for batch size " + std::to_string(B));
  for (const GraphTopology& t : per_image)
    if (t.n_nodes != nodes_per_image)
      throw UsageError("broadcast_batch: topology has " + std::to_string(t.n_nodes) +
                       " nodes, expected " + std::to_string(nodes_per_image));

  BatchedGraph g;
  g.kind = per_image[0].kind;
  g.batch = B;
  g.nodes_per_image = nodes_per_image;
  g.n_nodes = B * nodes_per_image;
  g.offsets.resize(g.n_nodes + 1, 0);
  g.batch_vector.resize(g.n_nodes);

  int64_t total_edges = 0;
  for (int64_t m = 0; m < B; ++m)
    total_edges += per_image[per_image.size() == 1 ? 0 : m].num_edges();
  g.src.resize(total_edges);

  int64_t e = 0;
  for (int64_t m = 0; m < B; ++m) {
    const GraphTopology& t = per_image[per_image.size() == 1 ? 0 : m];
    const int64_t base = m * nodes_per_image;
    for (int64_t v = 0; v < nodes_per_image; ++v) {
      g.batch_vector[base + v] = static_cast<int32_t>(m);
      for (int64_t i = t.offsets[v]; i < t.offsets[v + 1]; ++i) g.src[e++] = t.src[i] + base;
      g.offsets[base + v + 1] = e;
    }
  }

  // transpose: out-edges grouped by source, destinations ascending
  g.out_offsets.assign(g.n_nodes + 1, 0);
  for (int64_t i = 0; i < g.num_edges(); ++i) g.out_offsets[g.src[i] + 1]++;
  for (int64_t v = 0; v < g.n_nodes; ++v) g.out_offsets[v + 1] += g.out_offsets[v];
  g.out_dst.resize(g.num_edges());
  std::vector<int64_t> cursor(g.out_offsets.begin(), g.out_offsets.end() - 1);
  for (int64_t v = 0; v < g.n_nodes; ++v)
    for (int64_t i = g.offsets[v]; i < g.offsets[v + 1]; ++i)
      g.out_dst[cursor[g.src[i]]++] = v;
  return g;
}

GraphTopology extract_block(const BatchedGraph& g, int64_t m) {
  if (m < 0 || m >= g.batch)
    throw UsageError("extract_block: image index " + std::to_string(m) + " out of range");
  GraphTopology t;
  t.kind = g.kind;
  t.n_nodes = g.nodes_per_image;
  t.offsets.resize(t.n_nodes + 1, 0);
  const int64_t base = m * g.nodes_per_image;
  for (int64_t v = 0; v < t.n_nodes; ++v) {
    for (int64_t i = g.offsets[base + v]; i < g.offsets[base + v + 1]; ++i)
      t.src.push_back(g.src[i] - base);
    t.offsets[v + 1] = static_cast<int64_t>(t.src.size());
  }
  if (t.kind == GraphKind::knn && t.n_nodes > 0) t.k = t.offsets[1] - t.offsets[0];
  return t;
}

std::string export_edge_list(const GraphTopology& g) {
  std::string out;
  for (int64_t v = 0; v < g.n_nodes; ++v)
    for (int64_t i = g.offsets[v]; i < g.offsets[v + 1]; ++i)
      out += std::to_string(g.src[i]) + " " + std::to_string(v) + "\n";
  return out;
}

}  // namespace graphdepth
