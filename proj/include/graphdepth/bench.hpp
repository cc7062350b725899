#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace graphdepth {

struct BenchConfig {
  int repeats = 5;             // median over this many timed runs
  int64_t batch = 8;           // images per flat batch
  int64_t channels = 32;       // feature width used by every kernel
  int64_t knn_k = 16;
  double min_sample_s = 1e-3;  // widen inner iterations until a run takes this long
  int64_t attention_node_cap = 64 * 64;  // skip larger points, N^2 scores in memory
  std::vector<int64_t> grid_sides = {32, 64, 128, 256};
  std::vector<int64_t> quad_sides = {8, 16, 32, 64};  // knn + dense attention
  uint64_t seed = 1;
};

void validate(const BenchConfig& config);

struct TimingPoint {
  int64_t n_nodes = 0;  // nodes per image
  double median_s = 0.0;
  int repeats = 0;
  int inner_iters = 1;
};

struct TimingSeries {
  std::string kind;
  std::vector<TimingPoint> points;
};

// Least-squares fit of ln(t) against ln(N); residual is the RMS misfit.
struct FitResult {
  double slope = 0.0;
  double intercept = 0.0;
  double residual = 0.0;
};

FitResult fit_scaling(const TimingSeries& series);

struct ScalingReport {
  // grid_mp, sage_per_sample, knn_build, knn_mp, attention
  std::vector<TimingSeries> series;
  std::vector<std::pair<std::string, FitResult>> fits;
  // (knn_build + knn_mp) / grid_mp - 1, at the largest side common to both
  // resolution lists.
  double knn_overhead = 0.0;
  // per-sample loop time / flat-batch time at the largest grid side
  double flat_batch_speedup = 0.0;
  int64_t channels = 0;
  int threads = 0;
  std::string numeric_mode;
  std::vector<std::string> notes;  // skipped points, widened timers
};

ScalingReport run_scaling_bench(const BenchConfig& config);

// Serial reference vs OpenMP kernel on identical inputs.
struct KernelComparison {
  std::string kind;
  int64_t n_nodes = 0;
  double serial_s = 0.0;
  double parallel_s = 0.0;
};

std::vector<KernelComparison> compare_kernels(const BenchConfig& config);

// "kind, N, C, median_s, repeats" rows.
std::string report_csv(const ScalingReport& report);
std::string report_text(const ScalingReport& report,
                        const std::vector<KernelComparison>& comparisons);

}  // namespace graphdepth
