#include "graphdepth/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "graphdepth/threading.hpp"

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace graphdepth::kernels {

template <typename T>
void conv2d_forward(const T* in, int64_t B, int64_t Cin, int64_t H, int64_t W,
                    const T* w, int64_t Cout, int64_t K, const T* bias,
                    int64_t stride, int64_t pad, T* out, int64_t Ho, int64_t Wo) {
  const int nt = num_threads();
  const int64_t plane_in = H * W;
  const int64_t plane_out = Ho * Wo;
#pragma omp parallel for collapse(2) schedule(static) num_threads(nt) if (nt > 1)
  for (int64_t b = 0; b < B; ++b) {
    for (int64_t co = 0; co < Cout; ++co) {
      T* op = out + (b * Cout + co) * plane_out;
      const T* wc = w + co * Cin * K * K;
      for (int64_t oh = 0; oh < Ho; ++oh) {
        const int64_t ih0 = oh * stride - pad;
        const int64_t kh_lo = std::max<int64_t>(0, -ih0);
        const int64_t kh_hi = std::min<int64_t>(K, H - ih0);
        for (int64_t ow = 0; ow < Wo; ++ow) {
          const int64_t iw0 = ow * stride - pad;
          const int64_t kw_lo = std::max<int64_t>(0, -iw0);
          const int64_t kw_hi = std::min<int64_t>(K, W - iw0);
          T acc = bias[co];
          for (int64_t ci = 0; ci < Cin; ++ci) {
            const T* ip = in + (b * Cin + ci) * plane_in;
            const T* wk = wc + ci * K * K;
            for (int64_t kh = kh_lo; kh < kh_hi; ++kh) {
              const T* irow = ip + (ih0 + kh) * W + iw0;
              const T* wrow = wk + kh * K;
              for (int64_t kw = kw_lo; kw < kw_hi; ++kw) acc += irow[kw] * wrow[kw];
            }
          }
          *op++ = acc;
        }
      }
    }
  }
}

// Gather formulation: each input element is produced by exactly one worker.
template <typename T>
void conv2d_backward_input(const T* gout, int64_t B, int64_t Cout, int64_t Ho, int64_t Wo,
                           const T* w, int64_t Cin, int64_t K, int64_t stride, int64_t pad,
                           T* gin, int64_t H, int64_t W) {
  const int nt = num_threads();
  const int64_t plane_out = Ho * Wo;
#pragma omp parallel for collapse(2) schedule(static) num_threads(nt) if (nt > 1)
  for (int64_t b = 0; b < B; ++b) {
    for (int64_t ci = 0; ci < Cin; ++ci) {
      T* gp = gin + (b * Cin + ci) * H * W;
      for (int64_t ih = 0; ih < H; ++ih) {
        for (int64_t iw = 0; iw < W; ++iw) {
          T acc = T(0);
          for (int64_t kh = 0; kh < K; ++kh) {
            const int64_t th = ih + pad - kh;
            if (th < 0 || th % stride != 0) continue;
            const int64_t oh = th / stride;
            if (oh >= Ho) continue;
            for (int64_t kw = 0; kw < K; ++kw) {
              const int64_t tw = iw + pad - kw;
              if (tw < 0 || tw % stride != 0) continue;
              const int64_t ow = tw / stride;
              if (ow >= Wo) continue;
              for (int64_t co = 0; co < Cout; ++co) {
                acc += w[((co * Cin + ci) * K + kh) * K + kw] *
                       gout[(b * Cout + co) * plane_out + oh * Wo + ow];
              }
            }
          }
          gp[ih * W + iw] = acc;
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward_kernel(const T* gout, int64_t B, int64_t Cout, int64_t Ho, int64_t Wo,
                            const T* in, int64_t Cin, int64_t H, int64_t W,
                            int64_t K, int64_t stride, int64_t pad, T* gw) {
  const int nt = num_threads();
  const int64_t plane_in = H * W;
  const int64_t plane_out = Ho * Wo;
#pragma omp parallel for collapse(2) schedule(static) num_threads(nt) if (nt > 1)
  for (int64_t co = 0; co < Cout; ++co) {
    for (int64_t ci = 0; ci < Cin; ++ci) {
      for (int64_t kh = 0; kh < K; ++kh) {
        // valid oh range so that ih = oh*stride - pad + kh lands inside [0, H)
        int64_t oh_lo = 0;
        while (oh_lo < Ho && oh_lo * stride - pad + kh < 0) ++oh_lo;
        int64_t oh_hi = Ho;
        while (oh_hi > oh_lo && (oh_hi - 1) * stride - pad + kh >= H) --oh_hi;
        for (int64_t kw = 0; kw < K; ++kw) {
          int64_t ow_lo = 0;
          while (ow_lo < Wo && ow_lo * stride - pad + kw < 0) ++ow_lo;
          int64_t ow_hi = Wo;
          while (ow_hi > ow_lo && (ow_hi - 1) * stride - pad + kw >= W) --ow_hi;
          T acc = T(0);
          for (int64_t b = 0; b < B; ++b) {
            const T* gp = gout + (b * Cout + co) * plane_out;
            const T* ip = in + (b * Cin + ci) * plane_in;
            for (int64_t oh = oh_lo; oh < oh_hi; ++oh) {
              const int64_t ih = oh * stride - pad + kh;
              const T* grow = gp + oh * Wo;
              const T* irow = ip + ih * W - pad + kw;
              for (int64_t ow = ow_lo; ow < ow_hi; ++ow) acc += grow[ow] * irow[ow * stride];
            }
          }
          gw[((co * Cin + ci) * K + kh) * K + kw] = acc;
        }
      }
    }
  }
}

template <typename T>
void conv2d_backward_bias(const T* gout, int64_t B, int64_t Cout, int64_t Ho, int64_t Wo, T* gb) {
  const int nt = num_threads();
  const int64_t plane = Ho * Wo;
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
  for (int64_t co = 0; co < Cout; ++co) {
    T acc = T(0);
    for (int64_t b = 0; b < B; ++b) {
      const T* gp = gout + (b * Cout + co) * plane;
      for (int64_t i = 0; i < plane; ++i) acc += gp[i];
    }
    gb[co] = acc;
  }
}

template <typename T>
void linear_forward(const T* x, int64_t N, int64_t K, const T* w, int64_t O,
                    const T* bias, T* y) {
  const int nt = num_threads();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
  for (int64_t n = 0; n < N; ++n) {
    const T* xr = x + n * K;
    T* yr = y + n * O;
    for (int64_t o = 0; o < O; ++o) {
      const T* wr = w + o * K;
      T acc = bias[o];
      for (int64_t k = 0; k < K; ++k) acc += xr[k] * wr[k];
      yr[o] = acc;
    }
  }
}

template <typename T>
void linear_backward_input(const T* gy, const T* w, int64_t N, int64_t K, int64_t O, T* gx) {
  const int nt = num_threads();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
  for (int64_t n = 0; n < N; ++n) {
    T* gr = gx + n * K;
    std::fill(gr, gr + K, T(0));
    const T* gyr = gy + n * O;
    for (int64_t o = 0; o < O; ++o) {
      const T g = gyr[o];
      const T* wr = w + o * K;
      for (int64_t k = 0; k < K; ++k) gr[k] += g * wr[k];
    }
  }
}

template <typename T>
void linear_backward_weight(const T* gy, const T* x, int64_t N, int64_t K, int64_t O, T* gw) {
  const int nt = num_threads();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
  for (int64_t o = 0; o < O; ++o) {
    T* wr = gw + o * K;
    std::fill(wr, wr + K, T(0));
    for (int64_t n = 0; n < N; ++n) {
      const T g = gy[n * O + o];
      const T* xr = x + n * K;
      for (int64_t k = 0; k < K; ++k) wr[k] += g * xr[k];
    }
  }
}

template <typename T>
void linear_backward_bias(const T* gy, int64_t N, int64_t O, T* gb) {
  const int nt = num_threads();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
  for (int64_t o = 0; o < O; ++o) {
    T acc = T(0);
    for (int64_t n = 0; n < N; ++n) acc += gy[n * O + o];
    gb[o] = acc;
  }
}

template <typename T>
void matmul(const T* a, int64_t M, int64_t K, const T* b, int64_t N, T* c) {
  const int nt = num_threads();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
  for (int64_t m = 0; m < M; ++m) {
    T* cr = c + m * N;
    std::fill(cr, cr + N, T(0));
    const T* ar = a + m * K;
    for (int64_t k = 0; k < K; ++k) {
      const T av = ar[k];
      const T* br = b + k * N;
      for (int64_t n = 0; n < N; ++n) cr[n] += av * br[n];
    }
  }
}

template <typename T>
void matmul_backward_a(const T* gc, const T* b, int64_t M, int64_t K, int64_t N, T* da) {
  const int nt = num_threads();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
  for (int64_t m = 0; m < M; ++m) {
    const T* gr = gc + m * N;
    T* dr = da + m * K;
    for (int64_t k = 0; k < K; ++k) {
      const T* br = b + k * N;
      T acc = T(0);
      for (int64_t n = 0; n < N; ++n) acc += gr[n] * br[n];
      dr[k] = acc;
    }
  }
}

template <typename T>
void matmul_backward_b(const T* gc, const T* a, int64_t M, int64_t K, int64_t N, T* db) {
  const int nt = num_threads();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
  for (int64_t k = 0; k < K; ++k) {
    T* dr = db + k * N;
    std::fill(dr, dr + N, T(0));
    for (int64_t m = 0; m < M; ++m) {
      const T av = a[m * K + k];
      const T* gr = gc + m * N;
      for (int64_t n = 0; n < N; ++n) dr[n] += av * gr[n];
    }
  }
}

template <typename T>
void scatter_mean_forward(const T* in, int64_t N, int64_t C,
                          const int64_t* offsets, const int64_t* src, T* out) {
  const int nt = num_threads();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
  for (int64_t v = 0; v < N; ++v) {
    T* orow = out + v * C;
    const int64_t e0 = offsets[v], e1 = offsets[v + 1];
    if (e0 == e1) {
      std::fill(orow, orow + C, T(0));
      continue;
    }
    const T* first = in + src[e0] * C;
    std::copy(first, first + C, orow);
    for (int64_t e = e0 + 1; e < e1; ++e) {
      const T* irow = in + src[e] * C;
      for (int64_t c = 0; c < C; ++c) orow[c] += irow[c];
    }
    const T inv = T(1) / T(e1 - e0);
    for (int64_t c = 0; c < C; ++c) orow[c] *= inv;
  }
}

template <typename T>
void scatter_mean_backward(const T* gout, int64_t N, int64_t C,
                           const int64_t* out_offsets, const int64_t* out_dst,
                           const int64_t* in_offsets, T* gin) {
  const int nt = num_threads();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
  for (int64_t s = 0; s < N; ++s) {
    T* grow = gin + s * C;
    std::fill(grow, grow + C, T(0));
    for (int64_t e = out_offsets[s]; e < out_offsets[s + 1]; ++e) {
      const int64_t v = out_dst[e];
      const T inv = T(1) / T(in_offsets[v + 1] - in_offsets[v]);
      const T* gr = gout + v * C;
      for (int64_t c = 0; c < C; ++c) grow[c] += inv * gr[c];
    }
  }
}

template <typename T>
void scatter_max_forward(const T* in, int64_t N, int64_t C,
                         const int64_t* offsets, const int64_t* src,
                         T* out, int64_t* argmax) {
  const int nt = num_threads();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
  for (int64_t v = 0; v < N; ++v) {
    T* orow = out + v * C;
    int64_t* arow = argmax + v * C;
    const int64_t e0 = offsets[v], e1 = offsets[v + 1];
    if (e0 == e1) {
      std::fill(orow, orow + C, T(0));
      std::fill(arow, arow + C, int64_t(-1));
      continue;
    }
    const int64_t s0 = src[e0];
    const T* irow = in + s0 * C;
    std::copy(irow, irow + C, orow);
    std::fill(arow, arow + C, s0);
    for (int64_t e = e0 + 1; e < e1; ++e) {
      const int64_t s = src[e];
      const T* r = in + s * C;
      for (int64_t c = 0; c < C; ++c) {
        if (r[c] > orow[c]) {  // strict: first max (smallest src) wins ties
          orow[c] = r[c];
          arow[c] = s;
        }
      }
    }
  }
}

template <typename T>
void scatter_max_backward(const T* gout, int64_t N, int64_t C,
                          const int64_t* out_offsets, const int64_t* out_dst,
                          const int64_t* argmax, T* gin) {
  const int nt = num_threads();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
  for (int64_t s = 0; s < N; ++s) {
    T* grow = gin + s * C;
    std::fill(grow, grow + C, T(0));
    for (int64_t e = out_offsets[s]; e < out_offsets[s + 1]; ++e) {
      const int64_t v = out_dst[e];
      const T* gr = gout + v * C;
      const int64_t* ar = argmax + v * C;
      for (int64_t c = 0; c < C; ++c) {
        if (ar[c] == s) grow[c] += gr[c];
      }
    }
  }
}

template <typename T>
void sage_layer_forward(const T* x, int64_t N, int64_t C,
                        const int64_t* offsets, const int64_t* src,
                        const T* w, int64_t O, const T* bias, T* out, T* neigh) {
  scatter_mean_forward(x, N, C, offsets, src, neigh);
  const int nt = num_threads();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
  for (int64_t n = 0; n < N; ++n) {
    const T* xr = x + n * C;
    const T* nr = neigh + n * C;
    T* yr = out + n * O;
    for (int64_t o = 0; o < O; ++o) {
      const T* wr = w + o * 2 * C;
      T acc = bias[o];
      for (int64_t k = 0; k < C; ++k) acc += xr[k] * wr[k];
      const T* wn = wr + C;
      for (int64_t k = 0; k < C; ++k) acc += nr[k] * wn[k];
      yr[o] = acc > T(0) ? acc : T(0);
    }
  }
}

namespace {

// src = (dst + 0.5)/2 - 0.5 with edge clamping: per-axis sample table.
struct Axis2x {
  std::vector<int64_t> i0, i1;
  std::vector<double> frac;
};

Axis2x make_axis2x(int64_t in_extent) {
  Axis2x a;
  const int64_t out_extent = in_extent * 2;
  a.i0.resize(out_extent);
  a.i1.resize(out_extent);
  a.frac.resize(out_extent);
  for (int64_t o = 0; o < out_extent; ++o) {
    const double s = (static_cast<double>(o) + 0.5) * 0.5 - 0.5;
    const double f = std::floor(s);
    int64_t lo = static_cast<int64_t>(f);
    a.frac[o] = s - f;
    a.i0[o] = std::clamp<int64_t>(lo, 0, in_extent - 1);
    a.i1[o] = std::clamp<int64_t>(lo + 1, 0, in_extent - 1);
  }
  return a;
}

}  // namespace

template <typename T>
void upsample2x_forward(const T* in, int64_t B, int64_t C, int64_t H, int64_t W, T* out) {
  const Axis2x ay = make_axis2x(H);
  const Axis2x ax = make_axis2x(W);
  const int64_t Ho = H * 2, Wo = W * 2;
  const int64_t planes = B * C;
  const int nt = num_threads();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
  for (int64_t p = 0; p < planes; ++p) {
    const T* ip = in + p * H * W;
    T* op = out + p * Ho * Wo;
    for (int64_t oh = 0; oh < Ho; ++oh) {
      const T* r0 = ip + ay.i0[oh] * W;
      const T* r1 = ip + ay.i1[oh] * W;
      const T fy = static_cast<T>(ay.frac[oh]);
      T* orow = op + oh * Wo;
      for (int64_t ow = 0; ow < Wo; ++ow) {
        const T fx = static_cast<T>(ax.frac[ow]);
        const T top = r0[ax.i0[ow]] * (T(1) - fx) + r0[ax.i1[ow]] * fx;
        const T bot = r1[ax.i0[ow]] * (T(1) - fx) + r1[ax.i1[ow]] * fx;
        orow[ow] = top * (T(1) - fy) + bot * fy;
      }
    }
  }
}

namespace {

// For each input index, the output samples (and weights) that read it.
struct AxisGather {
  std::vector<std::vector<std::pair<int64_t, double>>> taps;
};

AxisGather make_axis_gather(int64_t in_extent) {
  const Axis2x a = make_axis2x(in_extent);
  AxisGather g;
  g.taps.resize(in_extent);
  for (int64_t o = 0; o < static_cast<int64_t>(a.i0.size()); ++o) {
    const double f = a.frac[o];
    if (a.i0[o] == a.i1[o]) {
      g.taps[a.i0[o]].emplace_back(o, 1.0);
    } else {
      if (1.0 - f != 0.0) g.taps[a.i0[o]].emplace_back(o, 1.0 - f);
      if (f != 0.0) g.taps[a.i1[o]].emplace_back(o, f);
    }
  }
  return g;
}

}  // namespace

template <typename T>
void upsample2x_backward(const T* gout, int64_t B, int64_t C, int64_t H, int64_t W, T* gin) {
  const AxisGather gy = make_axis_gather(H);
  const AxisGather gx = make_axis_gather(W);
  const int64_t Wo = W * 2;
  const int64_t planes = B * C;
  const int nt = num_threads();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
  for (int64_t p = 0; p < planes; ++p) {
    const T* gp = gout + p * H * 2 * Wo;
    T* ip = gin + p * H * W;
    for (int64_t ih = 0; ih < H; ++ih) {
      for (int64_t iw = 0; iw < W; ++iw) {
        T acc = T(0);
        for (const auto& [oh, wy] : gy.taps[ih]) {
          const T* grow = gp + oh * Wo;
          T row_acc = T(0);
          for (const auto& [ow, wx] : gx.taps[iw]) row_acc += static_cast<T>(wx) * grow[ow];
          acc += static_cast<T>(wy) * row_acc;
        }
        ip[ih * W + iw] = acc;
      }
    }
  }
}

template <typename T>
void gap_forward(const T* in, int64_t B, int64_t C, int64_t H, int64_t W, T* out) {
  const int64_t planes = B * C;
  const int64_t hw = H * W;
  const int nt = num_threads();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
  for (int64_t p = 0; p < planes; ++p) {
    const T* ip = in + p * hw;
    T acc = T(0);
    for (int64_t i = 0; i < hw; ++i) acc += ip[i];
    out[p] = acc / T(hw);
  }
}

template <typename T>
void dense_attention_forward(const T* x, int64_t N, int64_t C, T* out, T* scratch) {
  const T inv_sqrt_c = T(1) / std::sqrt(T(C));
  const int nt = num_threads();
#pragma omp parallel num_threads(nt) if (nt > 1)
  {
#if defined(_OPENMP)
    const int tid = omp_get_thread_num();
#else
    const int tid = 0;
#endif
    T* row = scratch + static_cast<int64_t>(tid) * N;
#pragma omp for schedule(static)
    for (int64_t i = 0; i < N; ++i) {
      const T* xi = x + i * C;
      T mx = -std::numeric_limits<T>::infinity();
      for (int64_t j = 0; j < N; ++j) {
        const T* xj = x + j * C;
        T dot = T(0);
        for (int64_t c = 0; c < C; ++c) dot += xi[c] * xj[c];
        row[j] = dot * inv_sqrt_c;
        if (row[j] > mx) mx = row[j];
      }
      T z = T(0);
      for (int64_t j = 0; j < N; ++j) {
        row[j] = std::exp(row[j] - mx);
        z += row[j];
      }
      const T inv_z = T(1) / z;
      T* orow = out + i * C;
      std::fill(orow, orow + C, T(0));
      for (int64_t j = 0; j < N; ++j) {
        const T p = row[j] * inv_z;
        const T* xj = x + j * C;
        for (int64_t c = 0; c < C; ++c) orow[c] += p * xj[c];
      }
    }
  }
}

#define GD_INSTANTIATE(T)                                                                          \
  template void conv2d_forward<T>(const T*, int64_t, int64_t, int64_t, int64_t, const T*, int64_t, \
                                  int64_t, const T*, int64_t, int64_t, T*, int64_t, int64_t);      \
  template void conv2d_backward_input<T>(const T*, int64_t, int64_t, int64_t, int64_t, const T*,   \
                                         int64_t, int64_t, int64_t, int64_t, T*, int64_t,          \
                                         int64_t);                                                 \
  template void conv2d_backward_kernel<T>(const T*, int64_t, int64_t, int64_t, int64_t, const T*,  \
                                          int64_t, int64_t, int64_t, int64_t, int64_t, int64_t,    \
                                          T*);                                                     \
  template void conv2d_backward_bias<T>(const T*, int64_t, int64_t, int64_t, int64_t, T*);         \
  template void linear_forward<T>(const T*, int64_t, int64_t, const T*, int64_t, const T*, T*);    \
  template void linear_backward_input<T>(const T*, const T*, int64_t, int64_t, int64_t, T*);       \
  template void linear_backward_weight<T>(const T*, const T*, int64_t, int64_t, int64_t, T*);      \
  template void linear_backward_bias<T>(const T*, int64_t, int64_t, T*);                           \
  template void matmul<T>(const T*, int64_t, int64_t, const T*, int64_t, T*);                      \
  template void matmul_backward_a<T>(const T*, const T*, int64_t, int64_t, int64_t, T*);           \
  template void matmul_backward_b<T>(const T*, const T*, int64_t, int64_t, int64_t, T*);           \
  template void scatter_mean_forward<T>(const T*, int64_t, int64_t, const int64_t*,                \
                                        const int64_t*, T*);                                       \
  template void scatter_mean_backward<T>(const T*, int64_t, int64_t, const int64_t*,               \
                                         const int64_t*, const int64_t*, T*);                      \
  template void scatter_max_forward<T>(const T*, int64_t, int64_t, const int64_t*, const int64_t*, \
                                       T*, int64_t*);                                              \
  template void scatter_max_backward<T>(const T*, int64_t, int64_t, const int64_t*,                \
                                        const int64_t*, const int64_t*, T*);                       \
  template void sage_layer_forward<T>(const T*, int64_t, int64_t, const int64_t*, const int64_t*,  \
                                      const T*, int64_t, const T*, T*, T*);                        \
  template void upsample2x_forward<T>(const T*, int64_t, int64_t, int64_t, int64_t, T*);           \
  template void upsample2x_backward<T>(const T*, int64_t, int64_t, int64_t, int64_t, T*);          \
  template void gap_forward<T>(const T*, int64_t, int64_t, int64_t, int64_t, T*);                  \
  template void dense_attention_forward<T>(const T*, int64_t, int64_t, T*, T*);

GD_INSTANTIATE(float)
GD_INSTANTIATE(double)

#undef GD_INSTANTIATE

}  // namespace graphdepth::kernels
