#pragma once

#include <cstdint>
#include <vector>

// Serial, loop-literal implementations used as ground truth in tests and as
// the baseline side of the kernel benchmarks. Nothing here is shared with
// the OpenMP kernels.
namespace graphdepth::reference {

template <typename T>
void conv2d_naive(const T* in, int64_t B, int64_t Cin, int64_t H, int64_t W,
                  const T* w, int64_t Cout, int64_t K, const T* bias,
                  int64_t stride, int64_t pad, T* out, int64_t Ho, int64_t Wo);

template <typename T>
void scatter_mean_naive(const T* in, int64_t N, int64_t C,
                        const int64_t* offsets, const int64_t* src, T* out);

// relu(W . concat(x_v, mean_{u in N(v)} x_u) + b) per node.
template <typename T>
void sage_forward_naive(const T* x, int64_t N, int64_t C,
                        const int64_t* offsets, const int64_t* src,
                        const T* w, int64_t O, const T* bias, T* out);

template <typename T>
void upsample2x_naive(const T* in, int64_t B, int64_t C, int64_t H, int64_t W, T* out);

template <typename T>
void gap_naive(const T* in, int64_t B, int64_t C, int64_t H, int64_t W, T* out);

template <typename T>
void dense_attention_naive(const T* x, int64_t N, int64_t C, T* out);

// k nearest neighbours of every node of an H x W map by full sort over all
// candidates, self excluded. Distance is
//   alpha * ||f_i - f_j||_2 + beta * ||p_i - p_j||_2
// where (with normalize set) f is the L2-normalised feature row and p the
// pixel position scaled into [0,1] per axis. Ties resolve toward the smaller
// candidate index. Returns row-major [N, k] source ids, ascending per row.
std::vector<int64_t> knn_bruteforce(const double* feat, int64_t N, int64_t dim,
                                    int64_t H, int64_t W, int64_t k,
                                    double alpha, double beta, bool normalize);

// Directed edge count of an H x W lattice: 2*(H*(W-1) + (H-1)*W) for
// 4-connectivity, plus 4*(H-1)*(W-1) diagonals for 8-connectivity.
int64_t grid_edge_count(int64_t H, int64_t W, int connectivity);

// Masked losses as plain scalar loops. n / (B,H,W) describe flat element
// counts; mask entries are 0 or 1 and the divisor is the valid-pixel count.
double masked_l1_naive(const double* pred, const double* target, const double* mask, int64_t n);
double masked_grad_naive(const double* pred, const double* target, const double* mask,
                         int64_t B, int64_t H, int64_t W);
double masked_unc_naive(const double* pred, const double* target, const double* logvar,
                        const double* mask, int64_t n);

// Rank correlation with average ranks on ties.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace graphdepth::reference
