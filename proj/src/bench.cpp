#include "graphdepth/bench.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <functional>

#include "graphdepth/errors.hpp"
#include "graphdepth/graph.hpp"
#include "graphdepth/kernels.hpp"
#include "graphdepth/reference.hpp"
#include "graphdepth/rng.hpp"
#include "graphdepth/threading.hpp"

namespace graphdepth {

namespace {

void check_sides(const std::vector<int64_t>& sides, const char* which) {
  if (sides.size() < 4)
    throw ConfigError(std::string(which) + " needs at least 4 resolutions");
  for (size_t i = 0; i < sides.size(); ++i) {
    if (sides[i] < 2) throw ConfigError(std::string(which) + " sides must be >= 2");
    if (i > 0 && sides[i] <= sides[i - 1])
      throw ConfigError(std::string(which) + " sides must be strictly increasing");
  }
  const double span = static_cast<double>(sides.back() * sides.back()) /
                      static_cast<double>(sides.front() * sides.front());
  if (span < 64.0)
    throw ConfigError(std::string(which) + " node counts must span at least 64x, got " +
                      std::to_string(span) + "x");
}

int64_t shared_side(const BenchConfig& c) {
  int64_t best = -1;
  for (int64_t g : c.grid_sides)
    for (int64_t q : c.quad_sides)
      if (g == q) best = std::max(best, g);
  return best;
}

}  // namespace

void validate(const BenchConfig& c) {
  if (c.repeats < 5) throw ConfigError("bench repeats must be at least 5");
  if (c.batch < 1) throw ConfigError("bench batch must be at least 1");
  if (c.channels < 1) throw ConfigError("bench channels must be at least 1");
  if (c.knn_k < 1) throw ConfigError("bench knn_k must be at least 1");
  if (!(c.min_sample_s > 0.0)) throw ConfigError("min_sample_s must be positive");
  if (c.attention_node_cap < 1) throw ConfigError("attention_node_cap must be positive");
  check_sides(c.grid_sides, "grid_sides");
  check_sides(c.quad_sides, "quad_sides");
  if (shared_side(c) < 0)
    throw ConfigError("grid_sides and quad_sides need a common side for the overhead ratio");
  const int64_t min_quad = c.quad_sides.front() * c.quad_sides.front();
  if (c.knn_k >= min_quad)
    throw ConfigError("knn_k must be below the smallest node count");
}

namespace {

double now_s() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

// Warmup once, widen inner iterations until a run clears min_sample_s, then
// take the median over `repeats` runs.
TimingPoint time_body(const std::function<void()>& body, int64_t n_nodes,
                      const BenchConfig& cfg) {
  body();
  int inner = 1;
  for (;;) {
    const double t0 = now_s();
    for (int i = 0; i < inner; ++i) body();
    const double dt = now_s() - t0;
    if (dt >= cfg.min_sample_s || inner >= (1 << 24)) break;
    const double want = cfg.min_sample_s / std::max(dt, 1e-9);
    inner = static_cast<int>(std::min<double>(1 << 24, inner * std::max(2.0, want * 1.2)));
  }
  std::vector<double> runs(cfg.repeats);
  for (int r = 0; r < cfg.repeats; ++r) {
    const double t0 = now_s();
    for (int i = 0; i < inner; ++i) body();
    runs[r] = (now_s() - t0) / inner;
  }
  std::sort(runs.begin(), runs.end());
  TimingPoint p;
  p.n_nodes = n_nodes;
  p.median_s = runs[runs.size() / 2];
  p.repeats = cfg.repeats;
  p.inner_iters = inner;
  return p;
}

void fill_uniform(std::vector<float>& v, Rng& rng) {
  for (float& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
}

struct SageInputs {
  std::vector<float> x, w, b, out, neigh;
};

SageInputs make_sage_inputs(int64_t n_total, int64_t C, Rng& rng) {
  SageInputs s;
  s.x.resize(n_total * C);
  s.w.resize(C * 2 * C);
  s.b.resize(C);
  s.out.resize(n_total * C);
  s.neigh.resize(n_total * C);
  fill_uniform(s.x, rng);
  fill_uniform(s.w, rng);
  fill_uniform(s.b, rng);
  return s;
}

double median_at(const TimingSeries& series, int64_t n_nodes) {
  for (const auto& p : series.points)
    if (p.n_nodes == n_nodes) return p.median_s;
  throw UsageError("no timing point at N = " + std::to_string(n_nodes) + " in series '" +
                   series.kind + "'");
}

void note_widening(const TimingSeries& s, std::vector<std::string>& notes) {
  int widest = 1;
  for (const auto& p : s.points) widest = std::max(widest, p.inner_iters);
  if (widest > 1)
    notes.push_back(s.kind + ": timer widened to " + std::to_string(widest) +
                    " inner iterations on the fastest points");
}

std::string fmt(double value) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

}  // namespace

FitResult fit_scaling(const TimingSeries& series) {
  if (series.points.size() < 3)
    throw UsageError("scaling fit needs at least 3 points, series '" + series.kind +
                     "' has " + std::to_string(series.points.size()));
  std::vector<double> xs, ys;
  for (const auto& p : series.points) {
    if (!(p.median_s > 0.0))
      throw UsageError("non-positive time in series '" + series.kind + "'");
    xs.push_back(std::log(static_cast<double>(p.n_nodes)));
    ys.push_back(std::log(p.median_s));
  }
  const double n = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  const double spread = n * sxx - sx * sx;
  if (spread <= 1e-12)
    throw UsageError("scaling fit needs distinct node counts in series '" + series.kind + "'");
  FitResult fit;
  fit.slope = (n * sxy - sx * sy) / spread;
  fit.intercept = (sy - fit.slope * sx) / n;
  double sq = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    const double r = ys[i] - (fit.slope * xs[i] + fit.intercept);
    sq += r * r;
  }
  fit.residual = std::sqrt(sq / n);
  return fit;
}

ScalingReport run_scaling_bench(const BenchConfig& cfg) {
  validate(cfg);
  const int64_t B = cfg.batch;
  const int64_t C = cfg.channels;
  Rng rng(cfg.seed);

  ScalingReport report;
  report.channels = C;
  report.threads = num_threads();
  report.numeric_mode = "fp32 kernels, fp64 graph construction";

  TimingSeries grid_mp{"grid_mp", {}};
  TimingSeries per_sample{"sage_per_sample", {}};
  for (int64_t side : cfg.grid_sides) {
    const int64_t N = side * side;
    const GraphTopology topo = build_grid(side, side, 8);
    const BatchedGraph g = broadcast_batch({topo}, B, N);
    SageInputs in = make_sage_inputs(B * N, C, rng);
    grid_mp.points.push_back(time_body(
        [&] {
          kernels::sage_layer_forward<float>(in.x.data(), B * N, C, g.offsets.data(),
                                             g.src.data(), in.w.data(), C, in.b.data(),
                                             in.out.data(), in.neigh.data());
        },
        N, cfg));
    per_sample.points.push_back(time_body(
        [&] {
          for (int64_t b = 0; b < B; ++b)
            kernels::sage_layer_forward<float>(
                in.x.data() + b * N * C, N, C, topo.offsets.data(), topo.src.data(),
                in.w.data(), C, in.b.data(), in.out.data() + b * N * C, in.neigh.data());
        },
        N, cfg));
  }

  TimingSeries knn_build{"knn_build", {}};
  TimingSeries knn_mp{"knn_mp", {}};
  TimingSeries attention{"attention", {}};
  KnnParams kp;
  kp.k = cfg.knn_k;
  for (int64_t side : cfg.quad_sides) {
    const int64_t N = side * side;
    std::vector<double> feat(B * N * C);
    for (double& v : feat) v = rng.uniform(-1.0, 1.0);
    std::vector<double> coords(N * 2);
    for (int64_t r = 0; r < side; ++r)
      for (int64_t c = 0; c < side; ++c) {
        coords[(r * side + c) * 2 + 0] = static_cast<double>(r);
        coords[(r * side + c) * 2 + 1] = static_cast<double>(c);
      }

    knn_build.points.push_back(time_body(
        [&] {
          for (int64_t b = 0; b < B; ++b)
            build_knn(feat.data() + b * N * C, N, C, coords.data(), kp);
        },
        N, cfg));

    std::vector<GraphTopology> per_image;
    for (int64_t b = 0; b < B; ++b)
      per_image.push_back(build_knn(feat.data() + b * N * C, N, C, coords.data(), kp));
    const BatchedGraph g = broadcast_batch(per_image, B, N);
    SageInputs in = make_sage_inputs(B * N, C, rng);
    knn_mp.points.push_back(time_body(
        [&] {
          kernels::sage_layer_forward<float>(in.x.data(), B * N, C, g.offsets.data(),
                                             g.src.data(), in.w.data(), C, in.b.data(),
                                             in.out.data(), in.neigh.data());
        },
        N, cfg));

    if (N > cfg.attention_node_cap) {
      report.notes.push_back("attention: skipped N = " + std::to_string(N) +
                             " (over the memory cap of " +
                             std::to_string(cfg.attention_node_cap) + " nodes)");
      continue;
    }
    std::vector<float> att_out(B * N * C);
    std::vector<float> scratch(static_cast<int64_t>(num_threads()) * N);
    attention.points.push_back(time_body(
        [&] {
          for (int64_t b = 0; b < B; ++b)
            kernels::dense_attention_forward<float>(in.x.data() + b * N * C, N, C,
                                                    att_out.data() + b * N * C,
                                                    scratch.data());
        },
        N, cfg));
  }

  report.series = {grid_mp, per_sample, knn_build, knn_mp, attention};
  for (const auto& s : report.series) {
    report.fits.emplace_back(s.kind, fit_scaling(s));
    note_widening(s, report.notes);
  }

  const int64_t shared = shared_side(cfg);
  const int64_t shared_n = shared * shared;
  report.knn_overhead = (median_at(knn_build, shared_n) + median_at(knn_mp, shared_n)) /
                            median_at(grid_mp, shared_n) -
                        1.0;
  const int64_t largest = cfg.grid_sides.back() * cfg.grid_sides.back();
  report.flat_batch_speedup = median_at(per_sample, largest) / median_at(grid_mp, largest);
  return report;
}

std::vector<KernelComparison> compare_kernels(const BenchConfig& cfg) {
  validate(cfg);
  Rng rng(cfg.seed);
  std::vector<KernelComparison> out;
  const int64_t side = 64, N = side * side;
  const int64_t B = cfg.batch, C = cfg.channels;

  {
    const GraphTopology topo = build_grid(side, side, 8);
    const BatchedGraph g = broadcast_batch({topo}, B, N);
    std::vector<float> x(B * N * C), agg(B * N * C);
    fill_uniform(x, rng);
    KernelComparison cmp{"scatter_mean", B * N, 0.0, 0.0};
    cmp.serial_s = time_body(
                       [&] {
                         reference::scatter_mean_naive<float>(
                             x.data(), B * N, C, g.offsets.data(), g.src.data(), agg.data());
                       },
                       B * N, cfg)
                       .median_s;
    cmp.parallel_s = time_body(
                         [&] {
                           kernels::scatter_mean_forward<float>(
                               x.data(), B * N, C, g.offsets.data(), g.src.data(),
                               agg.data());
                         },
                         B * N, cfg)
                         .median_s;
    out.push_back(cmp);
  }

  {
    const int64_t K = 3, H = side, W = side;
    std::vector<float> x(B * C * H * W), w(C * C * K * K), b(C), y(B * C * H * W);
    fill_uniform(x, rng);
    fill_uniform(w, rng);
    fill_uniform(b, rng);
    KernelComparison cmp{"conv3x3", B * H * W, 0.0, 0.0};
    cmp.serial_s = time_body(
                       [&] {
                         reference::conv2d_naive<float>(x.data(), B, C, H, W, w.data(), C, K,
                                                        b.data(), 1, 1, y.data(), H, W);
                       },
                       B * H * W, cfg)
                       .median_s;
    cmp.parallel_s = time_body(
                         [&] {
                           kernels::conv2d_forward<float>(x.data(), B, C, H, W, w.data(), C,
                                                          K, b.data(), 1, 1, y.data(), H, W);
                         },
                         B * H * W, cfg)
                         .median_s;
    out.push_back(cmp);
  }
  return out;
}

std::string report_csv(const ScalingReport& report) {
  std::string out = "kind,N,C,median_s,repeats\n";
  for (const auto& s : report.series)
    for (const auto& p : s.points)
      out += s.kind + "," + std::to_string(p.n_nodes) + "," +
             std::to_string(report.channels) + "," + fmt(p.median_s) + "," +
             std::to_string(p.repeats) + "\n";
  return out;
}

std::string report_text(const ScalingReport& report,
                        const std::vector<KernelComparison>& comparisons) {
  std::string out;
  out += "threads: " + std::to_string(report.threads) + "\n";
  out += "numeric mode: " + report.numeric_mode + "\n";
  for (const auto& [kind, fit] : report.fits)
    out += kind + ": slope " + fmt(fit.slope) + ", intercept " + fmt(fit.intercept) +
           ", residual " + fmt(fit.residual) + "\n";
  out += "knn overhead vs grid: " + fmt(report.knn_overhead * 100.0) + "%\n";
  out += "flat-batch speedup over per-sample loop: " + fmt(report.flat_batch_speedup) +
         "x\n";
  for (const auto& cmp : comparisons)
    out += cmp.kind + " (N = " + std::to_string(cmp.n_nodes) +
           "): serial " + fmt(cmp.serial_s) + " s, parallel " + fmt(cmp.parallel_s) +
           " s, ratio " + fmt(cmp.serial_s / cmp.parallel_s) + "x\n";
  for (const auto& note : report.notes) out += "note: " + note + "\n";
  return out;
}

}  // namespace graphdepth
