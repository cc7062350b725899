#include <vector>

#include "doctest.h"
#include "graphdepth/graph.hpp"
#include "graphdepth/kernels.hpp"
#include "graphdepth/reference.hpp"
#include "graphdepth/rng.hpp"
#include "graphdepth/threading.hpp"

using namespace graphdepth;

namespace {

std::vector<double> random_vec(int64_t n, Rng& rng, double s = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-s, s);
  return v;
}

struct ThreadGuard {
  int saved;
  explicit ThreadGuard(int n) : saved(num_threads()) { set_num_threads(n); }
  ~ThreadGuard() { set_num_threads(saved); }
};

}  // namespace

TEST_CASE("conv2d_forward equals the naive loops for every supported shape") {
  Rng rng(101);
  for (int64_t k : {1, 3}) {
    for (int64_t stride : {1, 2}) {
      const int64_t B = 2, Cin = 3, Cout = 4, H = 7, W = 5, pad = k / 2;
      const int64_t Ho = (H + 2 * pad - k) / stride + 1;
      const int64_t Wo = (W + 2 * pad - k) / stride + 1;
      auto x = random_vec(B * Cin * H * W, rng);
      auto w = random_vec(Cout * Cin * k * k, rng);
      auto b = random_vec(Cout, rng);
      std::vector<double> got(B * Cout * Ho * Wo), want(got.size());
      kernels::conv2d_forward<double>(x.data(), B, Cin, H, W, w.data(), Cout, k, b.data(),
                                      stride, pad, got.data(), Ho, Wo);
      reference::conv2d_naive<double>(x.data(), B, Cin, H, W, w.data(), Cout, k, b.data(),
                                      stride, pad, want.data(), Ho, Wo);
      for (size_t i = 0; i < got.size(); ++i)
        CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("conv2d backward-input is the adjoint of forward") {
  // <conv(x), g> must equal <x, conv_backward_input(g)> for any g: the
  // pairing identity holds exactly for linear maps.
  Rng rng(102);
  const int64_t B = 1, Cin = 2, Cout = 3, H = 6, W = 5, K = 3, stride = 2, pad = 1;
  const int64_t Ho = (H + 2 * pad - K) / stride + 1;
  const int64_t Wo = (W + 2 * pad - K) / stride + 1;
  auto x = random_vec(B * Cin * H * W, rng);
  auto w = random_vec(Cout * Cin * K * K, rng);
  std::vector<double> zero_bias(Cout, 0.0);
  auto g = random_vec(B * Cout * Ho * Wo, rng);

  std::vector<double> y(B * Cout * Ho * Wo);
  kernels::conv2d_forward<double>(x.data(), B, Cin, H, W, w.data(), Cout, K,
                                  zero_bias.data(), stride, pad, y.data(), Ho, Wo);
  std::vector<double> gx(B * Cin * H * W);
  kernels::conv2d_backward_input<double>(g.data(), B, Cout, Ho, Wo, w.data(), Cin, K,
                                         stride, pad, gx.data(), H, W);
  double lhs = 0.0, rhs = 0.0;
  for (size_t i = 0; i < y.size(); ++i) lhs += y[i] * g[i];
  for (size_t i = 0; i < x.size(); ++i) rhs += x[i] * gx[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
}

TEST_CASE("conv2d backward-kernel and backward-bias via the pairing identity") {
  Rng rng(103);
  const int64_t B = 2, Cin = 2, Cout = 2, H = 5, W = 4, K = 3, stride = 1, pad = 1;
  const int64_t Ho = H, Wo = W;
  auto x = random_vec(B * Cin * H * W, rng);
  auto w = random_vec(Cout * Cin * K * K, rng);
  std::vector<double> zero_bias(Cout, 0.0);
  auto g = random_vec(B * Cout * Ho * Wo, rng);

  std::vector<double> y(B * Cout * Ho * Wo);
  kernels::conv2d_forward<double>(x.data(), B, Cin, H, W, w.data(), Cout, K,
                                  zero_bias.data(), stride, pad, y.data(), Ho, Wo);
  double lhs = 0.0;
  for (size_t i = 0; i < y.size(); ++i) lhs += y[i] * g[i];

  std::vector<double> gw(w.size());
  kernels::conv2d_backward_kernel<double>(g.data(), B, Cout, Ho, Wo, x.data(), Cin, H, W,
                                          K, stride, pad, gw.data());
  double rhs = 0.0;
  for (size_t i = 0; i < w.size(); ++i) rhs += w[i] * gw[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));

  std::vector<double> gb(Cout);
  kernels::conv2d_backward_bias<double>(g.data(), B, Cout, Ho, Wo, gb.data());
  for (int64_t co = 0; co < Cout; ++co) {
    double want = 0.0;
    for (int64_t b = 0; b < B; ++b)
      for (int64_t i = 0; i < Ho * Wo; ++i) want += g[(b * Cout + co) * Ho * Wo + i];
    CHECK(gb[co] == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("scatter_mean matches the naive reference on a grid graph") {
  Rng rng(104);
  const GraphTopology g = build_grid(4, 5, 8);
  const int64_t N = g.n_nodes, C = 3;
  auto x = random_vec(N * C, rng);
  std::vector<double> got(N * C), want(N * C);
  kernels::scatter_mean_forward<double>(x.data(), N, C, g.offsets.data(), g.src.data(),
                                        got.data());
  reference::scatter_mean_naive<double>(x.data(), N, C, g.offsets.data(), g.src.data(),
                                        want.data());
  for (int64_t i = 0; i < N * C; ++i)
    CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-13));
}

TEST_CASE("scatter_mean leaves isolated nodes at zero") {
  // two nodes, one edge 1 -> 0; node 1 has no incoming edges
  std::vector<int64_t> offsets = {0, 1, 1};
  std::vector<int64_t> src = {1};
  std::vector<double> x = {5.0, 7.0};
  std::vector<double> out(2);
  kernels::scatter_mean_forward<double>(x.data(), 2, 1, offsets.data(), src.data(),
                                        out.data());
  CHECK(out[0] == 7.0);
  CHECK(out[1] == 0.0);
}

TEST_CASE("scatter_mean_backward is the adjoint of forward") {
  Rng rng(105);
  const GraphTopology topo = build_grid(3, 4, 4);
  const BatchedGraph g = broadcast_batch({topo}, 2, topo.n_nodes);
  const int64_t N = g.n_nodes, C = 2;
  auto x = random_vec(N * C, rng);
  auto gout = random_vec(N * C, rng);
  std::vector<double> y(N * C), gx(N * C);
  kernels::scatter_mean_forward<double>(x.data(), N, C, g.offsets.data(), g.src.data(),
                                        y.data());
  kernels::scatter_mean_backward<double>(gout.data(), N, C, g.out_offsets.data(),
                                         g.out_dst.data(), g.offsets.data(), gx.data());
  double lhs = 0.0, rhs = 0.0;
  for (int64_t i = 0; i < N * C; ++i) lhs += y[i] * gout[i];
  for (int64_t i = 0; i < N * C; ++i) rhs += x[i] * gx[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-11));
}

TEST_CASE("scatter_max picks the smallest source on ties and empty rows stay zero") {
  // node 0 receives from 1 and 2 (tied values); node 1 receives nothing
  std::vector<int64_t> offsets = {0, 2, 2, 2};
  std::vector<int64_t> src = {1, 2};
  std::vector<double> x = {0.0, 4.0, 4.0};
  std::vector<double> out(3);
  std::vector<int64_t> argmax(3);
  kernels::scatter_max_forward<double>(x.data(), 3, 1, offsets.data(), src.data(),
                                       out.data(), argmax.data());
  CHECK(out[0] == 4.0);
  CHECK(argmax[0] == 1);  // first (smallest) source wins the tie
  CHECK(out[1] == 0.0);
  CHECK(argmax[1] == -1);
}

TEST_CASE("sage_layer_forward equals the naive composition") {
  Rng rng(106);
  const GraphTopology g = build_grid(3, 3, 8);
  const int64_t N = g.n_nodes, C = 4, O = 5;
  auto x = random_vec(N * C, rng);
  auto w = random_vec(O * 2 * C, rng);
  auto b = random_vec(O, rng);
  std::vector<double> got(N * O), want(N * O), scratch(N * C);
  kernels::sage_layer_forward<double>(x.data(), N, C, g.offsets.data(), g.src.data(),
                                      w.data(), O, b.data(), got.data(), scratch.data());
  reference::sage_forward_naive<double>(x.data(), N, C, g.offsets.data(), g.src.data(),
                                        w.data(), O, b.data(), want.data());
  for (int64_t i = 0; i < N * O; ++i)
    CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("upsample and gap kernels match their references") {
  Rng rng(107);
  const int64_t B = 2, C = 3, H = 3, W = 5;
  auto x = random_vec(B * C * H * W, rng);
  std::vector<double> up_got(B * C * 4 * H * W), up_want(up_got.size());
  kernels::upsample2x_forward<double>(x.data(), B, C, H, W, up_got.data());
  reference::upsample2x_naive<double>(x.data(), B, C, H, W, up_want.data());
  for (size_t i = 0; i < up_got.size(); ++i)
    CHECK(up_got[i] == doctest::Approx(up_want[i]).epsilon(1e-13));

  std::vector<double> gap_got(B * C), gap_want(B * C);
  kernels::gap_forward<double>(x.data(), B, C, H, W, gap_got.data());
  reference::gap_naive<double>(x.data(), B, C, H, W, gap_want.data());
  for (size_t i = 0; i < gap_got.size(); ++i)
    CHECK(gap_got[i] == doctest::Approx(gap_want[i]).epsilon(1e-13));
}

TEST_CASE("upsample2x_backward is the adjoint of forward") {
  Rng rng(108);
  const int64_t B = 1, C = 2, H = 3, W = 4;
  auto x = random_vec(B * C * H * W, rng);
  auto g = random_vec(B * C * 4 * H * W, rng);
  std::vector<double> y(g.size()), gx(x.size());
  kernels::upsample2x_forward<double>(x.data(), B, C, H, W, y.data());
  kernels::upsample2x_backward<double>(g.data(), B, C, H, W, gx.data());
  double lhs = 0.0, rhs = 0.0;
  for (size_t i = 0; i < y.size(); ++i) lhs += y[i] * g[i];
  for (size_t i = 0; i < x.size(); ++i) rhs += x[i] * gx[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-11));
}

TEST_CASE("dense attention kernel matches the three-loop oracle") {
  Rng rng(109);
  const int64_t N = 17, C = 4;
  auto x = random_vec(N * C, rng);
  std::vector<double> got(N * C), want(N * C);
  std::vector<double> scratch(static_cast<int64_t>(num_threads()) * N);
  kernels::dense_attention_forward<double>(x.data(), N, C, got.data(), scratch.data());
  reference::dense_attention_naive<double>(x.data(), N, C, want.data());
  for (int64_t i = 0; i < N * C; ++i)
    CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-10));
}

TEST_CASE("single-node attention returns its value row unchanged") {
  std::vector<double> x = {3.0, -1.0, 0.5};
  std::vector<double> out(3), scratch(static_cast<int64_t>(num_threads()));
  kernels::dense_attention_forward<double>(x.data(), 1, 3, out.data(), scratch.data());
  for (int i = 0; i < 3; ++i) CHECK(out[i] == doctest::Approx(x[i]).epsilon(1e-15));
}

TEST_CASE("kernel results are bit-identical across thread counts") {
  Rng rng(110);
  const int64_t B = 2, Cin = 3, Cout = 4, H = 8, W = 8, K = 3;
  auto x = random_vec(B * Cin * H * W, rng);
  auto w = random_vec(Cout * Cin * K * K, rng);
  auto b = random_vec(Cout, rng);
  const GraphTopology g = build_grid(H, W, 8);
  auto nx = random_vec(H * W * Cin, rng);

  std::vector<double> conv1(B * Cout * H * W), scat1(H * W * Cin);
  {
    ThreadGuard tg(1);
    kernels::conv2d_forward<double>(x.data(), B, Cin, H, W, w.data(), Cout, K, b.data(), 1,
                                    1, conv1.data(), H, W);
    kernels::scatter_mean_forward<double>(nx.data(), H * W, Cin, g.offsets.data(),
                                          g.src.data(), scat1.data());
  }
  for (int threads : {3, 7}) {
    ThreadGuard tg(threads);
    std::vector<double> conv2(conv1.size()), scat2(scat1.size());
    kernels::conv2d_forward<double>(x.data(), B, Cin, H, W, w.data(), Cout, K, b.data(), 1,
                                    1, conv2.data(), H, W);
    kernels::scatter_mean_forward<double>(nx.data(), H * W, Cin, g.offsets.data(),
                                          g.src.data(), scat2.data());
    CHECK(conv1 == conv2);  // bit-exact, not approximate
    CHECK(scat1 == scat2);
  }
}
