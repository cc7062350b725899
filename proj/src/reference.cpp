#include "graphdepth/reference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <utility>

namespace graphdepth::reference {

template <typename T>
void conv2d_naive(const T* in, int64_t B, int64_t Cin, int64_t H, int64_t W,
                  const T* w, int64_t Cout, int64_t K, const T* bias,
                  int64_t stride, int64_t pad, T* out, int64_t Ho, int64_t Wo) {
  for (int64_t b = 0; b < B; ++b)
    for (int64_t co = 0; co < Cout; ++co)
      for (int64_t oh = 0; oh < Ho; ++oh)
        for (int64_t ow = 0; ow < Wo; ++ow) {
          T acc = bias[co];
          for (int64_t ci = 0; ci < Cin; ++ci)
            for (int64_t kh = 0; kh < K; ++kh)
              for (int64_t kw = 0; kw < K; ++kw) {
                const int64_t ih = oh * stride - pad + kh;
                const int64_t iw = ow * stride - pad + kw;
                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                acc += in[((b * Cin + ci) * H + ih) * W + iw] *
                       w[((co * Cin + ci) * K + kh) * K + kw];
              }
          out[((b * Cout + co) * Ho + oh) * Wo + ow] = acc;
        }
}

template <typename T>
void scatter_mean_naive(const T* in, int64_t N, int64_t C,
                        const int64_t* offsets, const int64_t* src, T* out) {
  for (int64_t v = 0; v < N; ++v)
    for (int64_t c = 0; c < C; ++c) {
      const int64_t deg = offsets[v + 1] - offsets[v];
      T acc = T(0);
      for (int64_t e = offsets[v]; e < offsets[v + 1]; ++e) acc += in[src[e] * C + c];
      out[v * C + c] = deg > 0 ? acc / T(deg) : T(0);
    }
}

template <typename T>
void sage_forward_naive(const T* x, int64_t N, int64_t C,
                        const int64_t* offsets, const int64_t* src,
                        const T* w, int64_t O, const T* bias, T* out) {
  std::vector<T> neigh(static_cast<size_t>(N) * C);
  scatter_mean_naive(x, N, C, offsets, src, neigh.data());
  for (int64_t v = 0; v < N; ++v)
    for (int64_t o = 0; o < O; ++o) {
      T acc = bias[o];
      for (int64_t c = 0; c < C; ++c) acc += w[o * 2 * C + c] * x[v * C + c];
      for (int64_t c = 0; c < C; ++c) acc += w[o * 2 * C + C + c] * neigh[v * C + c];
      out[v * O + o] = acc > T(0) ? acc : T(0);
    }
}

template <typename T>
void upsample2x_naive(const T* in, int64_t B, int64_t C, int64_t H, int64_t W, T* out) {
  const int64_t Ho = 2 * H, Wo = 2 * W;
  for (int64_t p = 0; p < B * C; ++p)
    for (int64_t oh = 0; oh < Ho; ++oh)
      for (int64_t ow = 0; ow < Wo; ++ow) {
        const double sy = (oh + 0.5) / 2.0 - 0.5;
        const double sx = (ow + 0.5) / 2.0 - 0.5;
        const int64_t y0 = static_cast<int64_t>(std::floor(sy));
        const int64_t x0 = static_cast<int64_t>(std::floor(sx));
        const T fy = static_cast<T>(sy - std::floor(sy));
        const T fx = static_cast<T>(sx - std::floor(sx));
        auto at = [&](int64_t y, int64_t x) {
          y = std::clamp<int64_t>(y, 0, H - 1);
          x = std::clamp<int64_t>(x, 0, W - 1);
          return in[p * H * W + y * W + x];
        };
        const T top = at(y0, x0) * (T(1) - fx) + at(y0, x0 + 1) * fx;
        const T bot = at(y0 + 1, x0) * (T(1) - fx) + at(y0 + 1, x0 + 1) * fx;
        out[p * Ho * Wo + oh * Wo + ow] = top * (T(1) - fy) + bot * fy;
      }
}

template <typename T>
void gap_naive(const T* in, int64_t B, int64_t C, int64_t H, int64_t W, T* out) {
  for (int64_t p = 0; p < B * C; ++p) {
    T acc = T(0);
    for (int64_t i = 0; i < H * W; ++i) acc += in[p * H * W + i];
    out[p] = acc / T(H * W);
  }
}

template <typename T>
void dense_attention_naive(const T* x, int64_t N, int64_t C, T* out) {
  std::vector<T> row(static_cast<size_t>(N));
  const T scale = T(1) / std::sqrt(T(C));
  for (int64_t i = 0; i < N; ++i) {
    T mx = -std::numeric_limits<T>::infinity();
    for (int64_t j = 0; j < N; ++j) {
      T dot = T(0);
      for (int64_t c = 0; c < C; ++c) dot += x[i * C + c] * x[j * C + c];
      row[j] = dot * scale;
      mx = std::max(mx, row[j]);
    }
    T z = T(0);
    for (int64_t j = 0; j < N; ++j) {
      row[j] = std::exp(row[j] - mx);
      z += row[j];
    }
    for (int64_t c = 0; c < C; ++c) {
      T acc = T(0);
      for (int64_t j = 0; j < N; ++j) acc += (row[j] / z) * x[j * C + c];
      out[i * C + c] = acc;
    }
  }
}

std::vector<int64_t> knn_bruteforce(const double* feat, int64_t N, int64_t dim,
                                    int64_t H, int64_t W, int64_t k,
                                    double alpha, double beta, bool normalize) {
  if (N != H * W) throw std::invalid_argument("knn_bruteforce: N must equal H*W");
  if (k < 1 || k > N - 1) throw std::invalid_argument("knn_bruteforce: k out of range");

  std::vector<double> f(feat, feat + N * dim);
  std::vector<double> px(N), py(N);
  for (int64_t i = 0; i < N; ++i) {
    const int64_t r = i / W, c = i % W;
    if (normalize) {
      py[i] = H > 1 ? static_cast<double>(r) / static_cast<double>(H - 1) : 0.0;
      px[i] = W > 1 ? static_cast<double>(c) / static_cast<double>(W - 1) : 0.0;
    } else {
      py[i] = static_cast<double>(r);
      px[i] = static_cast<double>(c);
    }
  }
  if (normalize) {
    for (int64_t i = 0; i < N; ++i) {
      double norm = 0.0;
      for (int64_t d = 0; d < dim; ++d) norm += f[i * dim + d] * f[i * dim + d];
      norm = std::sqrt(norm);
      if (norm > 0.0)
        for (int64_t d = 0; d < dim; ++d) f[i * dim + d] /= norm;
      else
        for (int64_t d = 0; d < dim; ++d) f[i * dim + d] = 0.0;
    }
  }

  std::vector<int64_t> result(static_cast<size_t>(N) * k);
  std::vector<std::pair<double, int64_t>> cand;
  cand.reserve(N - 1);
  for (int64_t i = 0; i < N; ++i) {
    cand.clear();
    for (int64_t j = 0; j < N; ++j) {
      if (j == i) continue;
      double df = 0.0;
      for (int64_t d = 0; d < dim; ++d) {
        const double t = f[i * dim + d] - f[j * dim + d];
        df += t * t;
      }
      const double dx = px[i] - px[j], dy = py[i] - py[j];
      cand.emplace_back(alpha * std::sqrt(df) + beta * std::sqrt(dx * dx + dy * dy), j);
    }
    std::sort(cand.begin(), cand.end());
    std::vector<int64_t> picked(k);
    for (int64_t m = 0; m < k; ++m) picked[m] = cand[m].second;
    std::sort(picked.begin(), picked.end());
    std::copy(picked.begin(), picked.end(), result.begin() + i * k);
  }
  return result;
}

int64_t grid_edge_count(int64_t H, int64_t W, int connectivity) {
  const int64_t straight = 2 * (H * (W - 1) + (H - 1) * W);
  if (connectivity == 4) return straight;
  if (connectivity == 8) return straight + 4 * (H - 1) * (W - 1);
  throw std::invalid_argument("grid_edge_count: connectivity must be 4 or 8");
}

double masked_l1_naive(const double* pred, const double* target, const double* mask, int64_t n) {
  double acc = 0.0, count = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    acc += mask[i] * std::abs(pred[i] - target[i]);
    count += mask[i];
  }
  return count > 0.0 ? acc / count : 0.0;
}

double masked_grad_naive(const double* pred, const double* target, const double* mask,
                         int64_t B, int64_t H, int64_t W) {
  double acc = 0.0, count = 0.0;
  for (int64_t b = 0; b < B; ++b) {
    const double* p = pred + b * H * W;
    const double* t = target + b * H * W;
    const double* m = mask + b * H * W;
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x) {
        count += m[y * W + x];
        const double e = p[y * W + x] - t[y * W + x];
        if (x + 1 < W && m[y * W + x] > 0.0 && m[y * W + x + 1] > 0.0)
          acc += std::abs((p[y * W + x + 1] - t[y * W + x + 1]) - e);
        if (y + 1 < H && m[y * W + x] > 0.0 && m[(y + 1) * W + x] > 0.0)
          acc += std::abs((p[(y + 1) * W + x] - t[(y + 1) * W + x]) - e);
      }
  }
  return count > 0.0 ? acc / count : 0.0;
}

double masked_unc_naive(const double* pred, const double* target, const double* logvar,
                        const double* mask, int64_t n) {
  double acc = 0.0, count = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    acc += mask[i] * (std::abs(pred[i] - target[i]) * std::exp(-logvar[i]) + logvar[i]);
    count += mask[i];
  }
  return count > 0.0 ? acc / count : 0.0;
}

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
  const size_t n = v.size();
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t(0));
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> r(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (size_t t = i; t <= j; ++t) r[idx[t]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw std::invalid_argument("spearman: need two equally sized series");
  const std::vector<double> ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va == 0.0 || vb == 0.0) return 0.0;
  return cov / std::sqrt(va * vb);
}

#define GD_REF_INSTANTIATE(T)                                                                     \
  template void conv2d_naive<T>(const T*, int64_t, int64_t, int64_t, int64_t, const T*, int64_t,  \
                                int64_t, const T*, int64_t, int64_t, T*, int64_t, int64_t);       \
  template void scatter_mean_naive<T>(const T*, int64_t, int64_t, const int64_t*,                 \
                                      const int64_t*, T*);                                        \
  template void sage_forward_naive<T>(const T*, int64_t, int64_t, const int64_t*,                 \
                                      const int64_t*, const T*, int64_t, const T*, T*);           \
  template void upsample2x_naive<T>(const T*, int64_t, int64_t, int64_t, int64_t, T*);            \
  template void gap_naive<T>(const T*, int64_t, int64_t, int64_t, int64_t, T*);                   \
  template void dense_attention_naive<T>(const T*, int64_t, int64_t, T*);

GD_REF_INSTANTIATE(float)
GD_REF_INSTANTIATE(double)

#undef GD_REF_INSTANTIATE

}  // namespace graphdepth::reference
