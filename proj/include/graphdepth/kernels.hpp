#pragma once

#include <cstdint>

// OpenMP-parallel compute kernels. Every loop partitions work by output
// element with a fixed inner summation order, so results are bit-identical
// for any thread count. Instantiated for float (benchmark mode) and double
// (training/autodiff mode).
namespace graphdepth::kernels {

// ---- convolution (square kernel, cross-correlation) ----

template <typename T>
void conv2d_forward(const T* in, int64_t B, int64_t Cin, int64_t H, int64_t W,
                    const T* w, int64_t Cout, int64_t K, const T* bias,
                    int64_t stride, int64_t pad, T* out, int64_t Ho, int64_t Wo);

template <typename T>
void conv2d_backward_input(const T* gout, int64_t B, int64_t Cout, int64_t Ho, int64_t Wo,
                           const T* w, int64_t Cin, int64_t K, int64_t stride, int64_t pad,
                           T* gin, int64_t H, int64_t W);

template <typename T>
void conv2d_backward_kernel(const T* gout, int64_t B, int64_t Cout, int64_t Ho, int64_t Wo,
                            const T* in, int64_t Cin, int64_t H, int64_t W,
                            int64_t K, int64_t stride, int64_t pad, T* gw);

template <typename T>
void conv2d_backward_bias(const T* gout, int64_t B, int64_t Cout, int64_t Ho, int64_t Wo, T* gb);

// ---- dense linear algebra ----

// y[n,o] = bias[o] + sum_k x[n,k] * w[o,k]
template <typename T>
void linear_forward(const T* x, int64_t N, int64_t K, const T* w, int64_t O,
                    const T* bias, T* y);

template <typename T>
void linear_backward_input(const T* gy, const T* w, int64_t N, int64_t K, int64_t O, T* gx);

template <typename T>
void linear_backward_weight(const T* gy, const T* x, int64_t N, int64_t K, int64_t O, T* gw);

template <typename T>
void linear_backward_bias(const T* gy, int64_t N, int64_t O, T* gb);

// c[m,n] = sum_k a[m,k] * b[k,n]
template <typename T>
void matmul(const T* a, int64_t M, int64_t K, const T* b, int64_t N, T* c);

// da[m,k] = sum_n gc[m,n] * b[k,n]
template <typename T>
void matmul_backward_a(const T* gc, const T* b, int64_t M, int64_t K, int64_t N, T* da);

// db[k,n] = sum_m a[m,k] * gc[m,n]
template <typename T>
void matmul_backward_b(const T* gc, const T* a, int64_t M, int64_t K, int64_t N, T* db);

// ---- graph aggregation over CSR-by-destination adjacency ----

// out[v,:] = mean of in[src,:] over the srcs of v; zero row when degree 0.
template <typename T>
void scatter_mean_forward(const T* in, int64_t N, int64_t C,
                          const int64_t* offsets, const int64_t* src, T* out);

// gin[s,:] = sum over out-edges (s -> v) of gout[v,:] / indegree(v).
// Needs the transpose CSR (by source) plus in-degrees.
template <typename T>
void scatter_mean_backward(const T* gout, int64_t N, int64_t C,
                           const int64_t* out_offsets, const int64_t* out_dst,
                           const int64_t* in_offsets, T* gin);

// out[v,c] = max over srcs; argmax records the winning src (-1 when empty).
template <typename T>
void scatter_max_forward(const T* in, int64_t N, int64_t C,
                         const int64_t* offsets, const int64_t* src,
                         T* out, int64_t* argmax);

template <typename T>
void scatter_max_backward(const T* gout, int64_t N, int64_t C,
                          const int64_t* out_offsets, const int64_t* out_dst,
                          const int64_t* argmax, T* gin);

// Fused GraphSAGE layer: relu(W . concat(x, mean_neighbors(x)) + b).
// w is (O x 2C); neigh is caller-provided scratch of N*C.
template <typename T>
void sage_layer_forward(const T* x, int64_t N, int64_t C,
                        const int64_t* offsets, const int64_t* src,
                        const T* w, int64_t O, const T* bias, T* out, T* neigh);

// ---- resampling / pooling ----

// 2x bilinear upsampling, half-pixel centers, edge clamped.
template <typename T>
void upsample2x_forward(const T* in, int64_t B, int64_t C, int64_t H, int64_t W, T* out);

template <typename T>
void upsample2x_backward(const T* gout, int64_t B, int64_t C, int64_t H, int64_t W, T* gin);

template <typename T>
void gap_forward(const T* in, int64_t B, int64_t C, int64_t H, int64_t W, T* out);

// ---- dense attention baseline (benchmark reference point) ----

// out = softmax(x x^T / sqrt(C)) x, row-wise softmax with max subtraction.
// scratch must hold num_threads * N elements.
template <typename T>
void dense_attention_forward(const T* x, int64_t N, int64_t C, T* out, T* scratch);

}  // namespace graphdepth::kernels
