#include "graphdepth/ops.hpp"

#include <cmath>
#include <memory>
#include <utility>

#include "graphdepth/errors.hpp"
#include "graphdepth/kernels.hpp"

namespace graphdepth {

namespace {

using Store = std::shared_ptr<std::vector<double>>;

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " +
                                      shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

// Elementwise unary with pointwise derivative computed from the saved input.
template <typename Fwd, typename Dfn>
Tensor unary_op(Tape& tape, const Tensor& x, const char* name, Fwd f, Dfn df) {
  const int64_t n = x.numel();
  auto y = std::make_shared<std::vector<double>>(n);
  const double* xp = x.data();
  for (int64_t i = 0; i < n; ++i) (*y)[i] = f(xp[i]);
  const int64_t px = tape.node_of(x);
  const Store xs = x.storage();
  return tape.make_output(
      x.shape(), std::move(y), name,
      [px, xs, n, df, name](Tape& t, const std::vector<double>& gout) {
        if (px < 0) return;
        std::vector<double> g(n);
        const double* xv = xs->data();
        for (int64_t i = 0; i < n; ++i) g[i] = gout[i] * df(xv[i]);
        t.accumulate(px, g.data(), n, name);
      });
}

double stable_sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int64_t stride, int64_t padding) {
  require(input.ndim() == 4, "conv2d: input must be BxCinxHxW, got " + shape_str(input.shape()));
  require(kernel.ndim() == 4,
          "conv2d: kernel must be CoutxCinxKxK, got " + shape_str(kernel.shape()));
  const int64_t B = input.extent(0), Cin = input.extent(1), H = input.extent(2),
                W = input.extent(3);
  const int64_t Cout = kernel.extent(0), K = kernel.extent(2);
  require(kernel.extent(1) == Cin, "conv2d: kernel expects " + std::to_string(kernel.extent(1)) +
                                       " input channels, input has " + std::to_string(Cin));
  require(kernel.extent(3) == K, "conv2d: kernel must be square");
  require(K == 1 || K == 3, "conv2d: kernel size must be 1 or 3, got " + std::to_string(K));
  require(bias.numel() == Cout, "conv2d: bias length " + std::to_string(bias.numel()) +
                                    " does not match " + std::to_string(Cout) + " out channels");
  require(stride >= 1, "conv2d: stride must be positive");
  require(padding >= 0, "conv2d: padding must be non-negative");
  const int64_t Ho = (H + 2 * padding - K) / stride + 1;
  const int64_t Wo = (W + 2 * padding - K) / stride + 1;
  require(H + 2 * padding >= K && W + 2 * padding >= K && Ho >= 1 && Wo >= 1,
          "conv2d: output would be empty for input " + shape_str(input.shape()));

  auto y = std::make_shared<std::vector<double>>(B * Cout * Ho * Wo);
  kernels::conv2d_forward(input.data(), B, Cin, H, W, kernel.data(), Cout, K, bias.data(),
                          stride, padding, y->data(), Ho, Wo);

  const int64_t px = tape.node_of(input), pw = tape.node_of(kernel), pb = tape.node_of(bias);
  const Store xs = input.storage(), ws = kernel.storage();
  return tape.make_output(
      {B, Cout, Ho, Wo}, std::move(y), "conv2d",
      [=](Tape& t, const std::vector<double>& gout) {
        if (px >= 0) {
          std::vector<double> gx(B * Cin * H * W);
          kernels::conv2d_backward_input(gout.data(), B, Cout, Ho, Wo, ws->data(), Cin, K,
                                         stride, padding, gx.data(), H, W);
          t.accumulate(px, gx.data(), static_cast<int64_t>(gx.size()), "conv2d");
        }
        if (pw >= 0) {
          std::vector<double> gw(Cout * Cin * K * K);
          kernels::conv2d_backward_kernel(gout.data(), B, Cout, Ho, Wo, xs->data(), Cin, H, W,
                                          K, stride, padding, gw.data());
          t.accumulate(pw, gw.data(), static_cast<int64_t>(gw.size()), "conv2d");
        }
        if (pb >= 0) {
          std::vector<double> gb(Cout);
          kernels::conv2d_backward_bias(gout.data(), B, Cout, Ho, Wo, gb.data());
          t.accumulate(pb, gb.data(), Cout, "conv2d");
        }
      });
}

Tensor relu(Tape& tape, const Tensor& x) {
  return unary_op(
      tape, x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(Tape& tape, const Tensor& x) {
  return unary_op(
      tape, x, "sigmoid", [](double v) { return stable_sigmoid(v); },
      [](double v) {
        const double s = stable_sigmoid(v);
        return s * (1.0 - s);
      });
}

Tensor softplus(Tape& tape, const Tensor& x) {
  return unary_op(
      tape, x, "softplus",
      [](double v) { return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); },
      [](double v) { return stable_sigmoid(v); });
}

Tensor exp(Tape& tape, const Tensor& x) {
  return unary_op(
      tape, x, "exp", [](double v) { return std::exp(v); },
      [](double v) { return std::exp(v); });
}

Tensor neg(Tape& tape, const Tensor& x) {
  return unary_op(
      tape, x, "neg", [](double v) { return -v; }, [](double) { return -1.0; });
}

Tensor abs(Tape& tape, const Tensor& x) {
  return unary_op(
      tape, x, "abs", [](double v) { return std::abs(v); },
      [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

namespace {

template <typename Combine>
Tensor binary_same_shape(Tape& tape, const Tensor& a, const Tensor& b, const char* name,
                         Combine f, double dda, double ddb) {
  require_same_shape(a, b, name);
  const int64_t n = a.numel();
  auto y = std::make_shared<std::vector<double>>(n);
  const double* ap = a.data();
  const double* bp = b.data();
  for (int64_t i = 0; i < n; ++i) (*y)[i] = f(ap[i], bp[i]);
  const int64_t pa = tape.node_of(a), pb = tape.node_of(b);
  return tape.make_output(
      a.shape(), std::move(y), name,
      [pa, pb, n, dda, ddb, name](Tape& t, const std::vector<double>& gout) {
        std::vector<double> g(n);
        if (pa >= 0) {
          for (int64_t i = 0; i < n; ++i) g[i] = dda * gout[i];
          t.accumulate(pa, g.data(), n, name);
        }
        if (pb >= 0) {
          for (int64_t i = 0; i < n; ++i) g[i] = ddb * gout[i];
          t.accumulate(pb, g.data(), n, name);
        }
      });
}

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary_same_shape(
      tape, a, b, "add", [](double x, double y) { return x + y; }, 1.0, 1.0);
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary_same_shape(
      tape, a, b, "sub", [](double x, double y) { return x - y; }, 1.0, -1.0);
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  // scalar * tensor is the one permitted broadcast
  if (a.numel() == 1 && b.numel() > 1) return mul(tape, b, a);
  if (b.numel() == 1 && a.numel() > 1) {
    const int64_t n = a.numel();
    auto y = std::make_shared<std::vector<double>>(n);
    const double* ap = a.data();
    const double s = b.data()[0];
    for (int64_t i = 0; i < n; ++i) (*y)[i] = ap[i] * s;
    const int64_t pa = tape.node_of(a), pb = tape.node_of(b);
    const Store as = a.storage(), bs = b.storage();
    return tape.make_output(
        a.shape(), std::move(y), "mul",
        [pa, pb, as, bs, n](Tape& t, const std::vector<double>& gout) {
          if (pa >= 0) {
            std::vector<double> g(n);
            const double sv = (*bs)[0];
            for (int64_t i = 0; i < n; ++i) g[i] = sv * gout[i];
            t.accumulate(pa, g.data(), n, "mul");
          }
          if (pb >= 0) {
            double acc = 0.0;
            for (int64_t i = 0; i < n; ++i) acc += gout[i] * (*as)[i];
            t.accumulate(pb, &acc, 1, "mul");
          }
        });
  }
  require_same_shape(a, b, "mul");
  const int64_t n = a.numel();
  auto y = std::make_shared<std::vector<double>>(n);
  const double* ap = a.data();
  const double* bp = b.data();
  for (int64_t i = 0; i < n; ++i) (*y)[i] = ap[i] * bp[i];
  const int64_t pa = tape.node_of(a), pb = tape.node_of(b);
  const Store as = a.storage(), bs = b.storage();
  return tape.make_output(
      a.shape(), std::move(y), "mul",
      [pa, pb, as, bs, n](Tape& t, const std::vector<double>& gout) {
        std::vector<double> g(n);
        if (pa >= 0) {
          for (int64_t i = 0; i < n; ++i) g[i] = gout[i] * (*bs)[i];
          t.accumulate(pa, g.data(), n, "mul");
        }
        if (pb >= 0) {
          for (int64_t i = 0; i < n; ++i) g[i] = gout[i] * (*as)[i];
          t.accumulate(pb, g.data(), n, "mul");
        }
      });
}

Tensor scale(Tape& tape, const Tensor& x, double c) {
  return unary_op(
      tape, x, "scale", [c](double v) { return c * v; }, [c](double) { return c; });
}

Tensor clamp(Tape& tape, const Tensor& x, double lo, double hi) {
  require(lo < hi, "clamp: lo must be below hi");
  return unary_op(
      tape, x, "clamp",
      [lo, hi](double v) { return v < lo ? lo : (v > hi ? hi : v); },
      [lo, hi](double v) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

Tensor global_avg_pool(Tape& tape, const Tensor& x) {
  require(x.ndim() == 4, "global_avg_pool: input must be BxCxHxW, got " + shape_str(x.shape()));
  const int64_t B = x.extent(0), C = x.extent(1), H = x.extent(2), W = x.extent(3);
  require(H >= 1 && W >= 1, "global_avg_pool: empty spatial extents");
  auto y = std::make_shared<std::vector<double>>(B * C);
  kernels::gap_forward(x.data(), B, C, H, W, y->data());
  const int64_t px = tape.node_of(x);
  return tape.make_output(
      {B, C, 1, 1}, std::move(y), "global_avg_pool",
      [px, B, C, H, W](Tape& t, const std::vector<double>& gout) {
        if (px < 0) return;
        const int64_t hw = H * W;
        std::vector<double> g(B * C * hw);
        for (int64_t p = 0; p < B * C; ++p) {
          const double v = gout[p] / static_cast<double>(hw);
          std::fill(g.begin() + p * hw, g.begin() + (p + 1) * hw, v);
        }
        t.accumulate(px, g.data(), static_cast<int64_t>(g.size()), "global_avg_pool");
      });
}

Tensor upsample2x_bilinear(Tape& tape, const Tensor& x) {
  require(x.ndim() == 4, "upsample2x: input must be BxCxHxW, got " + shape_str(x.shape()));
  const int64_t B = x.extent(0), C = x.extent(1), H = x.extent(2), W = x.extent(3);
  require(H >= 1 && W >= 1, "upsample2x: empty spatial extents");
  auto y = std::make_shared<std::vector<double>>(B * C * 4 * H * W);
  kernels::upsample2x_forward(x.data(), B, C, H, W, y->data());
  const int64_t px = tape.node_of(x);
  return tape.make_output(
      {B, C, 2 * H, 2 * W}, std::move(y), "upsample2x",
      [px, B, C, H, W](Tape& t, const std::vector<double>& gout) {
        if (px < 0) return;
        std::vector<double> g(B * C * H * W);
        kernels::upsample2x_backward(gout.data(), B, C, H, W, g.data());
        t.accumulate(px, g.data(), static_cast<int64_t>(g.size()), "upsample2x");
      });
}

Tensor reshape(Tape& tape, const Tensor& x, Shape shape) {
  require(shape_numel(shape) == x.numel(),
          "reshape: " + shape_str(x.shape()) + " has " + std::to_string(x.numel()) +
              " elements, target " + shape_str(shape) + " wants " +
              std::to_string(shape_numel(shape)));
  const int64_t px = tape.node_of(x);
  const int64_t n = x.numel();
  // shares storage: row-major order is unchanged
  return tape.make_output(std::move(shape), x.storage(), "reshape",
                          [px, n](Tape& t, const std::vector<double>& gout) {
                            t.accumulate(px, gout.data(), n, "reshape");
                          });
}

Tensor concat_channels(Tape& tape, const Tensor& a, const Tensor& b) {
  require(a.ndim() == 4 && b.ndim() == 4, "concat_channels: inputs must be BxCxHxW");
  require(a.extent(0) == b.extent(0) && a.extent(2) == b.extent(2) &&
              a.extent(3) == b.extent(3),
          "concat_channels: non-channel extents differ, " + shape_str(a.shape()) + " vs " +
              shape_str(b.shape()));
  const int64_t B = a.extent(0), Ca = a.extent(1), Cb = b.extent(1), H = a.extent(2),
                W = a.extent(3);
  const int64_t hw = H * W;
  auto y = std::make_shared<std::vector<double>>(B * (Ca + Cb) * hw);
  for (int64_t bi = 0; bi < B; ++bi) {
    std::copy(a.data() + bi * Ca * hw, a.data() + (bi + 1) * Ca * hw,
              y->begin() + bi * (Ca + Cb) * hw);
    std::copy(b.data() + bi * Cb * hw, b.data() + (bi + 1) * Cb * hw,
              y->begin() + (bi * (Ca + Cb) + Ca) * hw);
  }
  const int64_t pa = tape.node_of(a), pb = tape.node_of(b);
  return tape.make_output(
      {B, Ca + Cb, H, W}, std::move(y), "concat_channels",
      [pa, pb, B, Ca, Cb, hw](Tape& t, const std::vector<double>& gout) {
        if (pa >= 0) {
          std::vector<double> g(B * Ca * hw);
          for (int64_t bi = 0; bi < B; ++bi)
            std::copy(gout.begin() + bi * (Ca + Cb) * hw,
                      gout.begin() + (bi * (Ca + Cb) + Ca) * hw, g.begin() + bi * Ca * hw);
          t.accumulate(pa, g.data(), static_cast<int64_t>(g.size()), "concat_channels");
        }
        if (pb >= 0) {
          std::vector<double> g(B * Cb * hw);
          for (int64_t bi = 0; bi < B; ++bi)
            std::copy(gout.begin() + (bi * (Ca + Cb) + Ca) * hw,
                      gout.begin() + (bi + 1) * (Ca + Cb) * hw, g.begin() + bi * Cb * hw);
          t.accumulate(pb, g.data(), static_cast<int64_t>(g.size()), "concat_channels");
        }
      });
}

Tensor slice_channels(Tape& tape, const Tensor& x, int64_t c0, int64_t c1) {
  require(x.ndim() == 4, "slice_channels: input must be BxCxHxW");
  const int64_t B = x.extent(0), C = x.extent(1), H = x.extent(2), W = x.extent(3);
  require(0 <= c0 && c0 < c1 && c1 <= C,
          "slice_channels: range [" + std::to_string(c0) + ", " + std::to_string(c1) +
              ") invalid for " + std::to_string(C) + " channels");
  const int64_t Cs = c1 - c0, hw = H * W;
  auto y = std::make_shared<std::vector<double>>(B * Cs * hw);
  for (int64_t bi = 0; bi < B; ++bi)
    std::copy(x.data() + (bi * C + c0) * hw, x.data() + (bi * C + c1) * hw,
              y->begin() + bi * Cs * hw);
  const int64_t px = tape.node_of(x);
  return tape.make_output(
      {B, Cs, H, W}, std::move(y), "slice_channels",
      [px, B, C, c0, Cs, hw](Tape& t, const std::vector<double>& gout) {
        if (px < 0) return;
        std::vector<double> g(B * C * hw, 0.0);
        for (int64_t bi = 0; bi < B; ++bi)
          std::copy(gout.begin() + bi * Cs * hw, gout.begin() + (bi + 1) * Cs * hw,
                    g.begin() + (bi * C + c0) * hw);
        t.accumulate(px, g.data(), static_cast<int64_t>(g.size()), "slice_channels");
      });
}

Tensor concat_cols(Tape& tape, const Tensor& a, const Tensor& b) {
  require(a.ndim() == 2 && b.ndim() == 2 && a.extent(0) == b.extent(0),
          "concat_cols: inputs must be NxCa and NxCb, got " + shape_str(a.shape()) + " and " +
              shape_str(b.shape()));
  const int64_t N = a.extent(0), Ca = a.extent(1), Cb = b.extent(1);
  auto y = std::make_shared<std::vector<double>>(N * (Ca + Cb));
  for (int64_t i = 0; i < N; ++i) {
    std::copy(a.data() + i * Ca, a.data() + (i + 1) * Ca, y->begin() + i * (Ca + Cb));
    std::copy(b.data() + i * Cb, b.data() + (i + 1) * Cb, y->begin() + i * (Ca + Cb) + Ca);
  }
  const int64_t pa = tape.node_of(a), pb = tape.node_of(b);
  return tape.make_output(
      {N, Ca + Cb}, std::move(y), "concat_cols",
      [pa, pb, N, Ca, Cb](Tape& t, const std::vector<double>& gout) {
        if (pa >= 0) {
          std::vector<double> g(N * Ca);
          for (int64_t i = 0; i < N; ++i)
            std::copy(gout.begin() + i * (Ca + Cb), gout.begin() + i * (Ca + Cb) + Ca,
                      g.begin() + i * Ca);
          t.accumulate(pa, g.data(), static_cast<int64_t>(g.size()), "concat_cols");
        }
        if (pb >= 0) {
          std::vector<double> g(N * Cb);
          for (int64_t i = 0; i < N; ++i)
            std::copy(gout.begin() + i * (Ca + Cb) + Ca, gout.begin() + (i + 1) * (Ca + Cb),
                      g.begin() + i * Cb);
          t.accumulate(pb, g.data(), static_cast<int64_t>(g.size()), "concat_cols");
        }
      });
}

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require(a.ndim() == 2 && b.ndim() == 2, "matmul: inputs must be 2-D");
  require(a.extent(1) == b.extent(0), "matmul: inner extents differ, " + shape_str(a.shape()) +
                                          " vs " + shape_str(b.shape()));
  const int64_t M = a.extent(0), K = a.extent(1), N = b.extent(1);
  auto y = std::make_shared<std::vector<double>>(M * N);
  kernels::matmul(a.data(), M, K, b.data(), N, y->data());
  const int64_t pa = tape.node_of(a), pb = tape.node_of(b);
  const Store as = a.storage(), bs = b.storage();
  return tape.make_output(
      {M, N}, std::move(y), "matmul",
      [pa, pb, as, bs, M, K, N](Tape& t, const std::vector<double>& gout) {
        if (pa >= 0) {
          std::vector<double> g(M * K);
          kernels::matmul_backward_a(gout.data(), bs->data(), M, K, N, g.data());
          t.accumulate(pa, g.data(), static_cast<int64_t>(g.size()), "matmul");
        }
        if (pb >= 0) {
          std::vector<double> g(K * N);
          kernels::matmul_backward_b(gout.data(), as->data(), M, K, N, g.data());
          t.accumulate(pb, g.data(), static_cast<int64_t>(g.size()), "matmul");
        }
      });
}

Tensor linear(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& bias) {
  require(x.ndim() == 2 && w.ndim() == 2, "linear: x and w must be 2-D");
  require(x.extent(1) == w.extent(1), "linear: x has " + std::to_string(x.extent(1)) +
                                          " features, w expects " + std::to_string(w.extent(1)));
  const int64_t N = x.extent(0), K = x.extent(1), O = w.extent(0);
  require(bias.numel() == O, "linear: bias length " + std::to_string(bias.numel()) +
                                 " does not match " + std::to_string(O) + " outputs");
  auto y = std::make_shared<std::vector<double>>(N * O);
  kernels::linear_forward(x.data(), N, K, w.data(), O, bias.data(), y->data());
  const int64_t px = tape.node_of(x), pw = tape.node_of(w), pb = tape.node_of(bias);
  const Store xs = x.storage(), ws = w.storage();
  return tape.make_output(
      {N, O}, std::move(y), "linear",
      [px, pw, pb, xs, ws, N, K, O](Tape& t, const std::vector<double>& gout) {
        if (px >= 0) {
          std::vector<double> g(N * K);
          kernels::linear_backward_input(gout.data(), ws->data(), N, K, O, g.data());
          t.accumulate(px, g.data(), static_cast<int64_t>(g.size()), "linear");
        }
        if (pw >= 0) {
          std::vector<double> g(O * K);
          kernels::linear_backward_weight(gout.data(), xs->data(), N, K, O, g.data());
          t.accumulate(pw, g.data(), static_cast<int64_t>(g.size()), "linear");
        }
        if (pb >= 0) {
          std::vector<double> g(O);
          kernels::linear_backward_bias(gout.data(), N, O, g.data());
          t.accumulate(pb, g.data(), O, "linear");
        }
      });
}

Tensor sum_over(Tape& tape, const Tensor& x) {
  const int64_t n = x.numel();
  double acc = 0.0;
  const double* xp = x.data();
  for (int64_t i = 0; i < n; ++i) acc += xp[i];
  const int64_t px = tape.node_of(x);
  return tape.make_output({1}, std::vector<double>{acc}, "sum_over",
                          [px, n](Tape& t, const std::vector<double>& gout) {
                            if (px < 0) return;
                            std::vector<double> g(n, gout[0]);
                            t.accumulate(px, g.data(), n, "sum_over");
                          });
}

Tensor mean_over(Tape& tape, const Tensor& x) {
  const int64_t n = x.numel();
  require(n >= 1, "mean_over: empty tensor");
  double acc = 0.0;
  const double* xp = x.data();
  for (int64_t i = 0; i < n; ++i) acc += xp[i];
  acc /= static_cast<double>(n);
  const int64_t px = tape.node_of(x);
  return tape.make_output({1}, std::vector<double>{acc}, "mean_over",
                          [px, n](Tape& t, const std::vector<double>& gout) {
                            if (px < 0) return;
                            std::vector<double> g(n, gout[0] / static_cast<double>(n));
                            t.accumulate(px, g.data(), n, "mean_over");
                          });
}

Tensor mul_channels(Tape& tape, const Tensor& x, const Tensor& gate) {
  require(x.ndim() == 4, "mul_channels: x must be BxCxHxW");
  const int64_t B = x.extent(0), C = x.extent(1), H = x.extent(2), W = x.extent(3);
  const bool gate_ok = (gate.ndim() == 2 && gate.extent(0) == B && gate.extent(1) == C) ||
                       (gate.ndim() == 4 && gate.extent(0) == B && gate.extent(1) == C &&
                        gate.extent(2) == 1 && gate.extent(3) == 1);
  require(gate_ok, "mul_channels: gate must be " + std::to_string(B) + "x" + std::to_string(C) +
                       " (or x1x1), got " + shape_str(gate.shape()));
  const int64_t hw = H * W;
  auto y = std::make_shared<std::vector<double>>(x.numel());
  const double* xp = x.data();
  const double* gp = gate.data();
  for (int64_t p = 0; p < B * C; ++p)
    for (int64_t i = 0; i < hw; ++i) (*y)[p * hw + i] = xp[p * hw + i] * gp[p];
  const int64_t px = tape.node_of(x), pg = tape.node_of(gate);
  const Store xs = x.storage(), gs = gate.storage();
  return tape.make_output(
      x.shape(), std::move(y), "mul_channels",
      [px, pg, xs, gs, B, C, hw](Tape& t, const std::vector<double>& gout) {
        if (px >= 0) {
          std::vector<double> g(B * C * hw);
          for (int64_t p = 0; p < B * C; ++p)
            for (int64_t i = 0; i < hw; ++i) g[p * hw + i] = gout[p * hw + i] * (*gs)[p];
          t.accumulate(px, g.data(), static_cast<int64_t>(g.size()), "mul_channels");
        }
        if (pg >= 0) {
          std::vector<double> g(B * C);
          for (int64_t p = 0; p < B * C; ++p) {
            double acc = 0.0;
            for (int64_t i = 0; i < hw; ++i) acc += gout[p * hw + i] * (*xs)[p * hw + i];
            g[p] = acc;
          }
          t.accumulate(pg, g.data(), B * C, "mul_channels");
        }
      });
}

Tensor nchw_to_nodes(Tape& tape, const Tensor& x) {
  require(x.ndim() == 4, "nchw_to_nodes: input must be BxCxHxW");
  const int64_t B = x.extent(0), C = x.extent(1), H = x.extent(2), W = x.extent(3);
  const int64_t hw = H * W;
  auto y = std::make_shared<std::vector<double>>(x.numel());
  const double* xp = x.data();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t i = 0; i < hw; ++i) (*y)[(b * hw + i) * C + c] = xp[(b * C + c) * hw + i];
  const int64_t px = tape.node_of(x);
  return tape.make_output(
      {B * hw, C}, std::move(y), "nchw_to_nodes",
      [px, B, C, hw](Tape& t, const std::vector<double>& gout) {
        if (px < 0) return;
        std::vector<double> g(B * C * hw);
        for (int64_t b = 0; b < B; ++b)
          for (int64_t c = 0; c < C; ++c)
            for (int64_t i = 0; i < hw; ++i)
              g[(b * C + c) * hw + i] = gout[(b * hw + i) * C + c];
        t.accumulate(px, g.data(), static_cast<int64_t>(g.size()), "nchw_to_nodes");
      });
}

Tensor nodes_to_nchw(Tape& tape, const Tensor& x, int64_t B, int64_t C, int64_t H, int64_t W) {
  require(x.ndim() == 2, "nodes_to_nchw: input must be NxC");
  require(x.extent(0) == B * H * W && x.extent(1) == C,
          "nodes_to_nchw: " + shape_str(x.shape()) + " does not match B,C,H,W = " +
              std::to_string(B) + "," + std::to_string(C) + "," + std::to_string(H) + "," +
              std::to_string(W));
  const int64_t hw = H * W;
  auto y = std::make_shared<std::vector<double>>(x.numel());
  const double* xp = x.data();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t i = 0; i < hw; ++i) (*y)[(b * C + c) * hw + i] = xp[(b * hw + i) * C + c];
  const int64_t px = tape.node_of(x);
  return tape.make_output(
      {B, C, H, W}, std::move(y), "nodes_to_nchw",
      [px, B, C, hw](Tape& t, const std::vector<double>& gout) {
        if (px < 0) return;
        std::vector<double> g(B * C * hw);
        for (int64_t b = 0; b < B; ++b)
          for (int64_t c = 0; c < C; ++c)
            for (int64_t i = 0; i < hw; ++i)
              g[(b * hw + i) * C + c] = gout[(b * C + c) * hw + i];
        t.accumulate(px, g.data(), static_cast<int64_t>(g.size()), "nodes_to_nchw");
      });
}

}  // namespace graphdepth
