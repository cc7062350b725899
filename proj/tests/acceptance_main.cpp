// End-to-end acceptance gate. Each criterion prints one PASS/FAIL line with a
// short measurement; the exit status is the number of failed criteria.
// `acceptance --only N` (or bare numbers) restricts the run. Progress for the
// long training criteria goes to stderr.

#include <algorithm>
#include <array>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "graphdepth/bench.hpp"
#include "graphdepth/cli.hpp"
#include "graphdepth/data.hpp"
#include "graphdepth/graph.hpp"
#include "graphdepth/layers.hpp"
#include "graphdepth/model.hpp"
#include "graphdepth/objective.hpp"
#include "graphdepth/ops.hpp"
#include "graphdepth/reference.hpp"
#include "graphdepth/rng.hpp"
#include "graphdepth/sage.hpp"
#include "graphdepth/tensor.hpp"
#include "graphdepth/threading.hpp"
#include "graphdepth/trainer.hpp"
#include "support/fd_check.hpp"
#include "support/temp_dir.hpp"

using namespace graphdepth;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v, int prec = 4) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

Tensor uniform_tensor(Shape shape, Rng& rng, double lo, double hi) {
  Tensor t(std::move(shape));
  double* d = t.data();
  for (int64_t i = 0; i < t.numel(); ++i) d[i] = rng.uniform(lo, hi);
  return t;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

// ---------------------------------------------------------------------------
// 1. Flat batches match per-image message passing.

Outcome flat_batch_equivalence() {
  const int64_t H = 16, W = 16, C = 6, O = 5, N = H * W;
  Rng rng(101);
  double worst = 0.0;

  for (int64_t B : {int64_t{1}, int64_t{2}, int64_t{4}}) {
    Tensor x = randn({B, C, H, W}, rng);
    SageLayerParams params = make_sage_params(C, O, rng);

    for (int mode = 0; mode < 3; ++mode) {  // grid4, grid8, knn(k=8)
      std::vector<GraphTopology> per_image;
      if (mode < 2) {
        per_image.push_back(build_grid(H, W, mode == 0 ? 4 : 8));
      } else {
        for (int64_t b = 0; b < B; ++b) {
          std::vector<double> feat(N * C), coords(N * 2);
          for (int64_t v = 0; v < N; ++v) {
            for (int64_t c = 0; c < C; ++c) feat[v * C + c] = x.data()[(b * C + c) * N + v];
            coords[2 * v] = static_cast<double>(v / W);
            coords[2 * v + 1] = static_cast<double>(v % W);
          }
          KnnParams kp;
          kp.k = 8;
          per_image.push_back(build_knn(feat.data(), N, C, coords.data(), kp));
        }
      }
      const Aggregator agg = mode == 1 ? Aggregator::max : Aggregator::mean;
      auto flat_graph = std::make_shared<const BatchedGraph>(broadcast_batch(per_image, B, N));
      Tape tape;
      Tensor flat = sage_forward(tape, x, flat_graph, params, agg);

      for (int64_t b = 0; b < B; ++b) {
        Tensor xb({1, C, H, W});
        for (int64_t c = 0; c < C; ++c)
          for (int64_t v = 0; v < N; ++v) xb.data()[c * N + v] = x.data()[(b * C + c) * N + v];
        const GraphTopology& topo = per_image[mode < 2 ? 0 : b];
        auto g1 = std::make_shared<const BatchedGraph>(broadcast_batch({topo}, 1, N));
        Tape tb;
        Tensor yb = sage_forward(tb, xb, g1, params, agg);
        for (int64_t o = 0; o < O; ++o)
          for (int64_t v = 0; v < N; ++v)
            worst = std::max(worst,
                             std::abs(flat.data()[(b * O + o) * N + v] - yb.data()[o * N + v]));
      }
    }
  }

  Outcome out;
  out.pass = worst < 1e-10;
  out.detail = "max |flat - per-image| = " + num(worst, 3) +
               " over B in {1,2,4} x {grid4, grid8, knn8} (limit 1e-10)";
  return out;
}

// ---------------------------------------------------------------------------
// 2. Analytic gradients match central finite differences (relu kinks skipped
//    by the two-spacing disagreement test).

Outcome gradient_integrity() {
  const double tol = 1e-4;
  struct Sub {
    std::string name;
    testsupport::GradCheckStats stats;
  };
  std::vector<Sub> subs;
  Rng rng(21);

  {  // conv2d, strided and padded; quadratic loss keeps it smooth
    Tensor x = randn({2, 3, 6, 6}, rng);
    Tensor w = randn({4, 3, 3, 3}, rng, 0.4);
    Tensor b = randn({4}, rng, 0.2);
    auto value = [&]() {
      Tape t;
      Tensor y = conv2d(t, x, w, b, 2, 1);
      return sum_over(t, mul(t, y, y)).item();
    };
    Tape t;
    Tensor xx = x, ww = w, bb = b;
    t.watch(xx);
    t.watch(ww);
    t.watch(bb);
    Tensor y = conv2d(t, xx, ww, bb, 2, 1);
    t.backward(sum_over(t, mul(t, y, y)));
    subs.push_back({"conv2d/x", testsupport::check_gradients(x, t.grad(xx), value, 1e-5, 30)});
    subs.push_back({"conv2d/w", testsupport::check_gradients(w, t.grad(ww), value, 1e-5, 30)});
    subs.push_back({"conv2d/b", testsupport::check_gradients(b, t.grad(bb), value, 1e-5, 4)});
  }

  {  // scatter_mean over a batched lattice
    const int64_t H = 4, W = 5, B = 2, C = 3, N = B * H * W;
    auto g = std::make_shared<const BatchedGraph>(broadcast_batch({build_grid(H, W, 8)}, B, H * W));
    Tensor x = randn({N, C}, rng);
    auto value = [&]() {
      Tape t;
      Tensor y = scatter_mean(t, x, g);
      return sum_over(t, mul(t, y, y)).item();
    };
    Tape t;
    Tensor xx = x;
    t.watch(xx);
    Tensor y = scatter_mean(t, xx, g);
    t.backward(sum_over(t, mul(t, y, y)));
    subs.push_back(
        {"scatter_mean/x", testsupport::check_gradients(x, t.grad(xx), value, 1e-5, 30)});
  }

  {  // sage_forward: input, weight, bias
    const int64_t B = 2, C = 3, H = 4, W = 5;
    auto g = std::make_shared<const BatchedGraph>(broadcast_batch({build_grid(H, W, 8)}, B, H * W));
    Tensor x = randn({B, C, H, W}, rng);
    SageLayerParams sp = make_sage_params(C, 4, rng);
    auto value = [&]() {
      Tape t;
      Tensor y = sage_forward(t, x, g, sp);
      return sum_over(t, mul(t, y, y)).item();
    };
    Tape t;
    Tensor xx = x;
    SageLayerParams spp = sp;
    t.watch(xx);
    t.watch(spp.weight);
    t.watch(spp.bias);
    Tensor y = sage_forward(t, xx, g, spp);
    t.backward(sum_over(t, mul(t, y, y)));
    subs.push_back({"sage/x", testsupport::check_gradients(x, t.grad(xx), value, 1e-5, 25)});
    subs.push_back(
        {"sage/w", testsupport::check_gradients(sp.weight, t.grad(spp.weight), value, 1e-5, 25)});
    subs.push_back(
        {"sage/b", testsupport::check_gradients(sp.bias, t.grad(spp.bias), value, 1e-5, 4)});
  }

  {  // channel_attention: input and both gate layers
    Tensor x = randn({2, 4, 3, 4}, rng);
    AttentionParams ap = make_attention_params(4, rng);
    auto value = [&]() {
      Tape t;
      Tensor y = channel_attention(t, x, ap);
      return sum_over(t, mul(t, y, y)).item();
    };
    Tape t;
    Tensor xx = x;
    AttentionParams app = ap;
    t.watch(xx);
    t.watch(app.w1);
    t.watch(app.b1);
    t.watch(app.w2);
    t.watch(app.b2);
    Tensor y = channel_attention(t, xx, app);
    t.backward(sum_over(t, mul(t, y, y)));
    subs.push_back({"attention/x", testsupport::check_gradients(x, t.grad(xx), value, 1e-5, 20)});
    subs.push_back(
        {"attention/w1", testsupport::check_gradients(ap.w1, t.grad(app.w1), value, 1e-5, 8)});
    subs.push_back(
        {"attention/b1", testsupport::check_gradients(ap.b1, t.grad(app.b1), value, 1e-5, 4)});
    subs.push_back(
        {"attention/w2", testsupport::check_gradients(ap.w2, t.grad(app.w2), value, 1e-5, 8)});
    subs.push_back(
        {"attention/b2", testsupport::check_gradients(ap.b2, t.grad(app.b2), value, 1e-5, 4)});
  }

  {  // the three loss terms, probing prediction and log-variance maps
    const int64_t B = 1, H = 5, W = 6;
    Tensor pred = uniform_tensor({B, H, W}, rng, 0.5, 9.5);
    Tensor truth = uniform_tensor({B, H, W}, rng, 0.5, 9.5);
    Tensor logv = uniform_tensor({B, H, W}, rng, -2.0, 2.0);
    Tensor mask({B, H, W});
    for (int64_t i = 0; i < mask.numel(); ++i) mask.data()[i] = rng.uniform() < 0.8 ? 1.0 : 0.0;
    mask.data()[0] = 1.0;

    auto value_l1 = [&]() {
      Tape t;
      return l1_and_gradient_loss(t, pred, truth, mask).first.item();
    };
    Tape t1;
    Tensor p1 = pred;
    t1.watch(p1);
    t1.backward(l1_and_gradient_loss(t1, p1, truth, mask).first);
    subs.push_back(
        {"loss_l1/pred", testsupport::check_gradients(pred, t1.grad(p1), value_l1, 1e-5, 25)});

    auto value_grad = [&]() {
      Tape t;
      return l1_and_gradient_loss(t, pred, truth, mask).second.item();
    };
    Tape t2;
    Tensor p2 = pred;
    t2.watch(p2);
    t2.backward(l1_and_gradient_loss(t2, p2, truth, mask).second);
    subs.push_back(
        {"loss_grad/pred", testsupport::check_gradients(pred, t2.grad(p2), value_grad, 1e-5, 25)});

    auto value_unc = [&]() {
      Tape t;
      return uncertainty_loss(t, pred, logv, truth, mask).item();
    };
    Tape t3;
    Tensor p3 = pred, lv3 = logv;
    t3.watch(p3);
    t3.watch(lv3);
    t3.backward(uncertainty_loss(t3, p3, lv3, truth, mask));
    subs.push_back(
        {"loss_unc/pred", testsupport::check_gradients(pred, t3.grad(p3), value_unc, 1e-5, 20)});
    subs.push_back(
        {"loss_unc/logvar", testsupport::check_gradients(logv, t3.grad(lv3), value_unc, 1e-5, 20)});
  }

  double ops_max_rel = 0.0;
  bool ops_ok = true;
  std::string ops_worst;
  for (const Sub& s : subs) {
    if (!s.stats.ok(tol)) {
      ops_ok = false;
      ops_worst = s.name + (s.stats.checked == 0 ? " (nothing checked)" : "");
    }
    if (s.stats.max_rel > ops_max_rel) {
      ops_max_rel = s.stats.max_rel;
      if (ops_ok) ops_worst = s.name;
    }
  }

  // Full model: 50 random parameters of the default configuration against the
  // total training loss. Near-zero gradients are compared with an absolute
  // floor (3e-4 of the O(1) loss scale) to stay above FP64 cancellation noise.
  std::cerr << "[acceptance] probing full-model gradients (50 parameters)\n";
  ModelConfig mc;
  GraphDepthModel model(mc);
  Rng drng(31);
  Tensor input = uniform_tensor({2, 3, 32, 32}, drng, 0.0, 1.0);
  Tensor truth = uniform_tensor({2, 32, 32}, drng, 0.5, 9.5);
  Tensor mask = Tensor::full({2, 32, 32}, 1.0);
  LossWeights lw;
  auto value = [&]() {
    Tape t;
    Prediction p = model.forward(t, input);
    return total_loss(t, p, truth, mask, lw).total.item();
  };
  Tape tape;
  model.watch_parameters(tape);
  Prediction p = model.forward(tape, input);
  LossBreakdown lb = total_loss(tape, p, truth, mask, lw);
  tape.backward(lb.total);

  auto named = model.named_parameters();
  std::vector<std::vector<double>> grads;
  std::vector<int64_t> starts;
  int64_t total = 0;
  for (auto& [name, tensor] : named) {
    grads.push_back(tape.grad(*tensor));
    starts.push_back(total);
    total += tensor->numel();
  }

  std::set<int64_t> picks;
  Rng prng(97);
  while (static_cast<int64_t>(picks.size()) < 50) picks.insert(prng.index(total));

  int checked = 0, skipped = 0;
  double model_max_rel = 0.0;
  std::string model_worst;
  const double eps = 1e-5;
  for (int64_t gidx : picks) {
    size_t ti = static_cast<size_t>(
        std::upper_bound(starts.begin(), starts.end(), gidx) - starts.begin() - 1);
    const int64_t off = gidx - starts[ti];
    double* pd = named[ti].second->data();
    const double saved = pd[off];
    pd[off] = saved + eps;
    const double fp = value();
    pd[off] = saved - eps;
    const double fm = value();
    pd[off] = saved + 2.0 * eps;
    const double fp2 = value();
    pd[off] = saved - 2.0 * eps;
    const double fm2 = value();
    pd[off] = saved;
    const double d1 = (fp - fm) / (2.0 * eps);
    const double d2 = (fp2 - fm2) / (4.0 * eps);
    if (testsupport::rel_err(d1, d2) > 0.05) {
      skipped++;
      continue;
    }
    const double g = grads[ti][off];
    const double r = std::abs(d1 - g) / std::max({std::abs(d1), std::abs(g), 3e-4});
    if (r > model_max_rel) {
      model_max_rel = r;
      model_worst = named[ti].first + "[" + std::to_string(off) + "]";
    }
    checked++;
  }
  const bool model_ok = checked >= 30 && model_max_rel < tol;

  Outcome out;
  out.pass = ops_ok && model_ok;
  out.detail = "ops max rel " + num(ops_max_rel, 3) + " (worst " + ops_worst + "); model max rel " +
               num(model_max_rel, 3) + " at " + (model_worst.empty() ? "-" : model_worst) +
               ", " + std::to_string(checked) + " checked / " + std::to_string(skipped) +
               " skipped (tol 1e-4)";
  return out;
}

// ---------------------------------------------------------------------------
// 3 + 4 share one scaling benchmark run.

const ScalingReport& scaling_report() {
  static std::optional<ScalingReport> rep;
  if (!rep) {
    std::cerr << "[acceptance] running scaling benchmark\n";
    BenchConfig bc;
    bc.repeats = 5;
    bc.batch = 2;
    bc.channels = 16;
    rep = run_scaling_bench(bc);
  }
  return *rep;
}

const FitResult* find_fit(const ScalingReport& rep, const std::string& kind) {
  for (const auto& [k, f] : rep.fits)
    if (k == kind) return &f;
  return nullptr;
}

Outcome scaling_exponents() {
  const ScalingReport& rep = scaling_report();
  const FitResult* grid = find_fit(rep, "grid_mp");
  const FitResult* attn = find_fit(rep, "attention");
  Outcome out;
  if (!grid || !attn) {
    out.detail = "missing fit series";
    return out;
  }
  out.pass = grid->slope >= 0.9 && grid->slope <= 1.3 && attn->slope >= 1.8 &&
             grid->slope < attn->slope;
  out.detail = "grid slope " + num(grid->slope, 3) + " (want [0.9, 1.3]), attention slope " +
               num(attn->slope, 3) + " (want >= 1.8)";
  return out;
}

Outcome knn_overhead_bounded() {
  const ScalingReport& rep = scaling_report();
  const double oh = rep.knn_overhead;
  Outcome out;
  out.pass = std::isfinite(oh) && oh > 0.0;
  out.detail = "knn build+propagate costs +" + num(100.0 * oh, 3) +
               "% over grid propagation at matching node count";
  return out;
}

// ---------------------------------------------------------------------------
// 5 + 9 share one overfit training run on eight synthetic scenes.

struct OverfitRun {
  bool trained = false;
  std::vector<StepInfo> infos;
  Metrics final;
  int64_t steps_run = 0;
  double max_depth = 10.0;
};

const OverfitRun& overfit_run() {
  static OverfitRun run;
  if (run.trained) return run;
  std::cerr << "[acceptance] overfit run: 8 scenes, batch 8, up to 2000 steps\n";

  // Scenes chosen so the quarter-resolution heads can represent them: the
  // bilinear 4x upsample smears depth steps over ~4 px, so dense region
  // boundaries put a hard floor under RMSE no matter how well training goes.
  // Two to three gently tilted planes per scene keep that floor well below
  // the pass threshold (best-achievable RMSE ~0.17 for this set).
  Dataset train;
  for (int i = 0; i < 8; ++i) {
    SceneConfig sc;
    sc.planes_min = 2;
    sc.planes_max = 3;
    sc.depth_min = 3.0;
    sc.depth_max = 9.0;
    sc.slope_max = 2.0;
    sc.seed = 520 + static_cast<uint64_t>(i);
    train.samples.push_back(generate_scene(sc));
    train.ids.push_back("s" + std::to_string(i));
  }

  ModelConfig mc;
  GraphDepthModel model(mc);
  run.max_depth = mc.max_depth;

  std::vector<int64_t> idx;
  for (int64_t i = 0; i < 8; ++i) idx.push_back(i);
  Tensor rgb, depth, mask;
  make_batch(train, idx, &rgb, &depth, &mask);
  auto eval = [&]() {
    Tape tape;
    Prediction p = model.forward(tape, rgb);
    return compute_metrics(p.depth, depth, mask);
  };

  TrainConfig tc;
  tc.base_lr = 1e-4;
  tc.batch_size = 8;
  tc.epochs = 2000;
  tc.max_steps = 2000;
  tc.seed = 7;
  const StepHook hook = [&](const StepInfo& info) {
    run.infos.push_back(info);
    if ((info.step + 1) % 20 != 0) return true;
    const Metrics m = eval();
    if ((info.step + 1) % 100 == 0)
      std::cerr << "[acceptance] step " << info.step + 1 << ": total " << info.total << ", rmse "
                << m.rmse << ", delta1 " << m.delta1 << "\n";
    return !(m.rmse < 0.05 * run.max_depth && m.delta1 > 0.95);
  };
  const TrainResult tr = train_loop(model, train, nullptr, tc, {}, "", hook);
  run.steps_run = tr.steps_run;
  run.final = eval();
  run.trained = true;
  return run;
}

Outcome overfit_sanity() {
  const OverfitRun& run = overfit_run();
  const double limit = 0.05 * run.max_depth;
  Outcome out;
  out.pass = run.steps_run > 0 && run.final.rmse < limit && run.final.delta1 > 0.95;
  out.detail = "train rmse " + num(run.final.rmse, 3) + " (want < " + num(limit, 3) +
               "), delta1 " + num(run.final.delta1, 4) + " (want > 0.95) after " +
               std::to_string(run.steps_run) + " steps";
  return out;
}

Outcome clipping_invariant() {
  const OverfitRun& run = overfit_run();
  double worst = 0.0;
  int64_t over = 0;
  for (const StepInfo& info : run.infos) {
    worst = std::max(worst, info.grad_norm_post);
    if (info.grad_norm_post > 1.0 + 1e-9) over++;
  }

  // Independent recheck of the clip arithmetic on synthetic gradients.
  Rng rng(49);
  std::vector<std::vector<double>> grads(3);
  grads[0].resize(17);
  grads[1].resize(5);
  grads[2].resize(9);
  for (auto& g : grads)
    for (double& v : g) v = rng.normal() * 3.0;
  const std::vector<std::vector<double>> orig = grads;
  double manual_pre = 0.0;
  for (const auto& g : orig)
    for (double v : g) manual_pre += v * v;
  manual_pre = std::sqrt(manual_pre);
  const double pre = clip_gradients(grads, 1.0);
  double post = 0.0, dir = 0.0;
  for (size_t i = 0; i < grads.size(); ++i)
    for (size_t j = 0; j < grads[i].size(); ++j) {
      post += grads[i][j] * grads[i][j];
      dir = std::max(dir, std::abs(grads[i][j] - orig[i][j] / pre));
    }
  post = std::sqrt(post);
  const bool recheck = std::abs(pre - manual_pre) < 1e-9 * manual_pre && manual_pre > 1.0 &&
                       std::abs(post - 1.0) < 1e-9 && dir < 1e-12;

  Outcome out;
  out.pass = !run.infos.empty() && over == 0 && recheck;
  out.detail = "max post-clip norm " + num(worst, 6) + " over " +
               std::to_string(run.infos.size()) + " steps (limit 1 + 1e-9); recheck " +
               (recheck ? "ok" : "FAILED");
  return out;
}

// ---------------------------------------------------------------------------
// 6. Predicted uncertainty ranks the actual error on held-out scenes.

Outcome uncertainty_ranks_error() {
  std::cerr << "[acceptance] calibration run: depth-scaled noise, 600 steps\n";
  SceneConfig base;
  base.kappa = 0.15;
  Dataset train, val;
  for (int i = 0; i < 12; ++i) {
    SceneConfig sc = base;
    sc.seed = 700 + static_cast<uint64_t>(i);
    train.samples.push_back(generate_scene(sc));
    train.ids.push_back("t" + std::to_string(i));
  }
  for (int i = 0; i < 6; ++i) {
    SceneConfig sc = base;
    sc.seed = 800 + static_cast<uint64_t>(i);
    val.samples.push_back(generate_scene(sc));
    val.ids.push_back("v" + std::to_string(i));
  }

  ModelConfig mc;
  mc.encoder_channels = {8, 12, 16, 24};
  mc.stem_channels = 6;
  mc.seed = 11;
  GraphDepthModel model(mc);

  TrainConfig tc;
  tc.base_lr = 2e-3;
  tc.batch_size = 4;
  tc.epochs = 200;
  tc.max_steps = 600;
  tc.seed = 9;
  const StepHook hook = [&](const StepInfo& info) {
    if ((info.step + 1) % 100 == 0)
      std::cerr << "[acceptance] calibration step " << info.step + 1 << ": total " << info.total
                << "\n";
    return true;
  };
  train_loop(model, train, nullptr, tc, {}, "", hook);

  std::vector<int64_t> idx;
  for (int64_t i = 0; i < 6; ++i) idx.push_back(i);
  Tensor rgb, depth, mask;
  make_batch(val, idx, &rgb, &depth, &mask);
  Tape tape;
  Prediction pred = model.forward(tape, rgb);
  Outcome out;
  if (!pred.has_log_var) {
    out.detail = "model produced no log-variance map";
    return out;
  }
  std::vector<double> sigma, err;
  for (int64_t i = 0; i < depth.numel(); ++i) {
    if (mask.data()[i] <= 0.5) continue;
    sigma.push_back(std::exp(0.5 * pred.log_var.data()[i]));
    err.push_back(std::abs(pred.depth.data()[i] - depth.data()[i]));
  }
  const double rho = reference::spearman(sigma, err);

  // With a zero log-variance map the uncertainty term must equal the L1 term.
  Rng rng(59);
  Tensor rp = uniform_tensor({2, 4, 5}, rng, 0.5, 9.5);
  Tensor rt = uniform_tensor({2, 4, 5}, rng, 0.5, 9.5);
  Tensor rm = Tensor::full({2, 4, 5}, 1.0);
  Tensor zs({2, 4, 5});
  Tape it;
  const double l1v = l1_and_gradient_loss(it, rp, rt, rm).first.item();
  const double uncv = uncertainty_loss(it, rp, zs, rt, rm).item();
  const bool identity_ok = std::abs(l1v - uncv) <= 1e-15;

  out.pass = rho > 0.5 && identity_ok;
  out.detail = "spearman(sigma, |error|) = " + num(rho, 3) + " on " +
               std::to_string(sigma.size()) + " held-out pixels (want > 0.5); unc(S=0)==l1 " +
               (identity_ok ? "ok" : "FAILED");
  return out;
}

// ---------------------------------------------------------------------------
// 7. Loss terms satisfy closed-form identities.

Outcome loss_identities() {
  Rng rng(53);
  const int64_t B = 2, H = 6, W = 5;
  Tensor truth = uniform_tensor({B, H, W}, rng, 0.5, 9.5);
  Tensor logv = uniform_tensor({B, H, W}, rng, -2.0, 2.0);
  Tensor mask({B, H, W});
  for (int64_t i = 0; i < mask.numel(); ++i) mask.data()[i] = rng.uniform() < 0.8 ? 1.0 : 0.0;
  mask.data()[0] = 1.0;

  // Perfect prediction: both fit terms vanish, the uncertainty term reduces
  // to the masked mean of the log-variance map.
  Tape t1;
  auto [l1p, grp] = l1_and_gradient_loss(t1, truth, truth, mask);
  const Tensor uncp = uncertainty_loss(t1, truth, logv, truth, mask);
  double s_sum = 0.0, valid = 0.0;
  for (int64_t i = 0; i < mask.numel(); ++i) {
    if (mask.data()[i] > 0.5) {
      s_sum += logv.data()[i];
      valid += 1.0;
    }
  }
  const bool perfect_ok = l1p.item() == 0.0 && grp.item() == 0.0 &&
                          std::abs(uncp.item() - s_sum / valid) <= 1e-15;

  // Random prediction: the total is the advertised weighted sum.
  Tensor predr = uniform_tensor({B, H, W}, rng, 0.5, 9.5);
  Prediction pr;
  pr.depth = predr;
  pr.log_var = logv;
  pr.has_log_var = true;
  Tape t2;
  const LossBreakdown full = total_loss(t2, pr, truth, mask, {});
  Tape t3;
  auto [l1r, grr] = l1_and_gradient_loss(t3, predr, truth, mask);
  const Tensor uncr = uncertainty_loss(t3, predr, logv, truth, mask);
  const double want = 0.85 * l1r.item() + 0.15 * grr.item() + 0.50 * uncr.item();
  const double sum_err = std::abs(full.total.item() - want);
  bool weighted_ok = sum_err <= 1e-12 &&
                     std::abs(full.weighted_l1 - 0.85 * l1r.item()) <= 1e-15 &&
                     std::abs(full.weighted_grad - 0.15 * grr.item()) <= 1e-15 &&
                     std::abs(full.weighted_unc - 0.50 * uncr.item()) <= 1e-15;

  // Without a log-variance map the uncertainty term drops out entirely.
  Prediction plain;
  plain.depth = predr;
  plain.has_log_var = false;
  Tape t4;
  const LossBreakdown no_unc = total_loss(t4, plain, truth, mask, {});
  const bool gamma_off_ok =
      no_unc.unc.item() == 0.0 && no_unc.weighted_unc == 0.0 &&
      std::abs(no_unc.total.item() - (0.85 * l1r.item() + 0.15 * grr.item())) <= 1e-12;

  Outcome out;
  out.pass = perfect_ok && weighted_ok && gamma_off_ok;
  out.detail = std::string("perfect-fit terms ") + (perfect_ok ? "exact" : "WRONG") +
               ", weighted sum off by " + num(sum_err, 3) + " (limit 1e-12), no-logvar path " +
               (gamma_off_ok ? "drops unc" : "WRONG");
  return out;
}

// ---------------------------------------------------------------------------
// 8. Graph builders match brute-force oracles, ties included.

Outcome graph_oracles() {
  Rng rng(67);
  Outcome out;

  for (int i = 0; i < 20; ++i) {
    const int64_t H = 2 + rng.index(21), W = 2 + rng.index(21);
    const int64_t N = H * W;
    const int64_t dim = 1 + rng.index(8);
    KnnParams kp;
    kp.k = 1 + rng.index(std::min<int64_t>(N - 1, 24));
    kp.normalize = (i % 2 == 0);
    if (i % 3 == 1) {
      kp.alpha = rng.uniform(0.2, 1.0);
      kp.beta = rng.uniform(0.0, 0.8);
    }
    const bool quantize = (i % 5 == 4);  // coarse values force distance ties
    std::vector<double> feat(N * dim), coords(N * 2);
    for (int64_t v = 0; v < N; ++v) {
      for (int64_t d = 0; d < dim; ++d) {
        double x = rng.normal();
        feat[v * dim + d] = quantize ? std::round(x * 2.0) / 2.0 : x;
      }
      coords[2 * v] = static_cast<double>(v / W);
      coords[2 * v + 1] = static_cast<double>(v % W);
    }
    const GraphTopology topo = build_knn(feat.data(), N, dim, coords.data(), kp);
    const std::vector<int64_t> oracle = reference::knn_bruteforce(
        feat.data(), N, dim, H, W, kp.k, kp.alpha, kp.beta, kp.normalize);
    if (topo.n_nodes != N) {
      out.detail = "knn instance " + std::to_string(i) + ": wrong node count";
      return out;
    }
    for (int64_t v = 0; v < N; ++v) {
      if (topo.degree(v) != kp.k) {
        out.detail = "knn instance " + std::to_string(i) + ": node " + std::to_string(v) +
                     " has degree " + std::to_string(topo.degree(v));
        return out;
      }
      for (int64_t j = 0; j < kp.k; ++j) {
        if (topo.src[topo.offsets[v] + j] != oracle[v * kp.k + j]) {
          out.detail = "knn instance " + std::to_string(i) + ": neighbor mismatch at node " +
                       std::to_string(v);
          return out;
        }
      }
    }
  }

  int64_t grids = 0;
  for (int conn : {4, 8}) {
    for (int64_t H = 1; H <= 16; ++H) {
      for (int64_t W = 1; W <= 16; ++W) {
        const GraphTopology g = build_grid(H, W, conn);
        if (g.num_edges() != reference::grid_edge_count(H, W, conn)) {
          out.detail = "grid " + std::to_string(H) + "x" + std::to_string(W) + " conn " +
                       std::to_string(conn) + ": edge count " + std::to_string(g.num_edges());
          return out;
        }
        // every edge needs its reverse: the lattice is undirected
        for (int64_t v = 0; v < g.n_nodes; ++v) {
          for (int64_t e = g.offsets[v]; e < g.offsets[v + 1]; ++e) {
            const int64_t u = g.src[e];
            const auto lo = g.src.begin() + g.offsets[u];
            const auto hi = g.src.begin() + g.offsets[u + 1];
            if (!std::binary_search(lo, hi, v)) {
              out.detail = "grid " + std::to_string(H) + "x" + std::to_string(W) +
                           ": edge " + std::to_string(u) + "->" + std::to_string(v) +
                           " missing its reverse";
              return out;
            }
          }
        }
        grids++;
      }
    }
  }

  out.pass = true;
  out.detail = "20 knn instances (N <= 484, ties forced) and " + std::to_string(grids) +
               " lattices match the brute-force oracles exactly";
  return out;
}

// ---------------------------------------------------------------------------
// 10. The ablation grid trains end to end and reports sane per-preset rows.

Outcome ablation_grid() {
  testsupport::TempDir tmp("accept_ablate");
  std::ostringstream out_cap, err_cap;
  std::streambuf* old_out = std::cout.rdbuf(out_cap.rdbuf());
  std::streambuf* old_err = std::cerr.rdbuf(err_cap.rdbuf());
  int code = -1;
  try {
    code = run_cli({"ablate", "--preset", "all", "--steps", "10", "--out", tmp.file("ab"),
                    "--set", "scene.height=32", "--set", "scene.width=32",
                    "--set", "model.encoder_channels=2,3,4,5", "--set", "model.stem_channels=2",
                    "--set", "train.batch_size=2"});
  } catch (...) {
    std::cout.rdbuf(old_out);
    std::cerr.rdbuf(old_err);
    throw;
  }
  std::cout.rdbuf(old_out);
  std::cerr.rdbuf(old_err);

  Outcome out;
  if (code != 0) {
    out.detail = "exit code " + std::to_string(code) + ": " + err_cap.str();
    return out;
  }
  const std::string csv = slurp(tmp.file("ab") + "/ablate.csv");
  std::vector<std::string> lines;
  for (const std::string& l : split(csv, '\n'))
    if (!l.empty()) lines.push_back(l);
  if (lines.size() != 12) {
    out.detail = "expected header + 11 rows, got " + std::to_string(lines.size()) + " lines";
    return out;
  }
  if (lines[0] != "preset,graph,steps,final_total,rmse,gnn_scales,knn_k_clamped") {
    out.detail = "unexpected header: " + lines[0];
    return out;
  }

  const std::vector<std::pair<std::string, std::string>> expect_scales = {
      {"baseline", ""},          {"bottleneck_gnn", "32"}, {"multi_scale", "32|16|8"},
      {"attention", "32|16|8"},  {"uncertainty", "32|16|8"}, {"knn", "32|16|8"},
      {"graph_grid4", "32|16|8"}, {"graph_grid8", "32|16|8"}, {"graph_knn8", "32|16|8"},
      {"graph_knn16", "32|16|8"}, {"graph_knn32", "32|16|8"},
  };
  for (size_t i = 0; i < expect_scales.size(); ++i) {
    const std::vector<std::string> cols = split(lines[i + 1], ',');
    if (cols.size() != 7) {
      out.detail = "row " + std::to_string(i + 1) + " has " + std::to_string(cols.size()) +
                   " columns";
      return out;
    }
    if (cols[0] != expect_scales[i].first) {
      out.detail = "row " + std::to_string(i + 1) + " preset " + cols[0] + ", expected " +
                   expect_scales[i].first;
      return out;
    }
    if (cols[2] != "10") {
      out.detail = cols[0] + ": ran " + cols[2] + " steps, expected 10";
      return out;
    }
    const double total = std::stod(cols[3]);
    const double rmse = std::stod(cols[4]);
    if (!std::isfinite(total) || !std::isfinite(rmse)) {
      out.detail = cols[0] + ": non-finite losses";
      return out;
    }
    if (cols[5] != expect_scales[i].second) {
      out.detail = cols[0] + ": gnn scales \"" + cols[5] + "\", expected \"" +
                   expect_scales[i].second + "\"";
      return out;
    }
    const bool knn_row = cols[1].rfind("knn", 0) == 0;
    const int64_t clamped = std::stoll(cols[6]);
    if ((knn_row && clamped < 2) || (!knn_row && clamped != 0)) {
      out.detail = cols[0] + ": knn_k_clamped " + cols[6] + " inconsistent with graph " + cols[1];
      return out;
    }
  }
  out.pass = true;
  out.detail = "11 presets x 10 steps, finite losses, per-preset gnn placement as configured";
  return out;
}

// ---------------------------------------------------------------------------
// 11. Identical runs are byte-identical; checkpoints and image files round
//     trip losslessly.

Outcome determinism_and_serialization() {
  testsupport::TempDir tmp("accept_det");

  Dataset train, val;
  for (int i = 0; i < 4; ++i) {
    SceneConfig sc;
    sc.height = 32;
    sc.width = 32;
    sc.seed = 900 + static_cast<uint64_t>(i);
    train.samples.push_back(generate_scene(sc));
    train.ids.push_back("t" + std::to_string(i));
  }
  for (int i = 0; i < 2; ++i) {
    SceneConfig sc;
    sc.height = 32;
    sc.width = 32;
    sc.seed = 950 + static_cast<uint64_t>(i);
    val.samples.push_back(generate_scene(sc));
    val.ids.push_back("v" + std::to_string(i));
  }

  ModelConfig mc;
  mc.encoder_channels = {2, 3, 4, 5};
  mc.stem_channels = 2;
  mc.seed = 5;
  TrainConfig tc;
  tc.base_lr = 1e-3;
  tc.batch_size = 2;
  tc.epochs = 2;
  tc.seed = 17;

  GraphDepthModel m1(mc);
  const TrainResult r1 = train_loop(m1, train, &val, tc, {}, tmp.file("a"));
  GraphDepthModel m2(mc);
  const TrainResult r2 = train_loop(m2, train, &val, tc, {}, tmp.file("b"));

  Outcome out;
  const std::string log_a = slurp(tmp.file("a") + "/train_log.csv");
  if (log_a.empty() || log_a != slurp(tmp.file("b") + "/train_log.csv")) {
    out.detail = "train logs differ between identical runs";
    return out;
  }
  const std::string met_a = slurp(tmp.file("a") + "/metrics.csv");
  if (met_a.empty() || met_a != slurp(tmp.file("b") + "/metrics.csv")) {
    out.detail = "metrics files differ between identical runs";
    return out;
  }
  if (slurp(r1.checkpoint_prefix + ".params.bin") != slurp(r2.checkpoint_prefix + ".params.bin") ||
      slurp(r1.checkpoint_prefix + ".manifest.txt") !=
          slurp(r2.checkpoint_prefix + ".manifest.txt")) {
    out.detail = "final checkpoints differ between identical runs";
    return out;
  }

  // Reloading the checkpoint reproduces the trained model bit for bit.
  GraphDepthModel restored = load_checkpoint(r1.checkpoint_prefix);
  std::vector<int64_t> idx{0, 1};
  Tensor rgb, depth, mask;
  make_batch(val, idx, &rgb, &depth, &mask);
  Tape ta, tb;
  const Tensor ya = m1.forward(ta, rgb).depth;
  const Tensor yb = restored.forward(tb, rgb).depth;
  if (std::memcmp(ya.data(), yb.data(), sizeof(double) * static_cast<size_t>(ya.numel())) != 0) {
    out.detail = "restored checkpoint predicts differently";
    return out;
  }

  // Depth maps round trip through PFM with exact FP32 payloads.
  std::vector<float> pf = {0.0f, -1.5f, 3.25e-30f, 2.75e30f, 0.001f, -42.0f,
                           1.0f, 9.5f,  1e-3f,     7.125f,   0.5f,   2.0f};
  write_pfm(tmp.file("rt.pfm"), pf.data(), 3, 4);
  int64_t H = 0, W = 0;
  const std::vector<float> pf2 = read_pfm(tmp.file("rt.pfm"), &H, &W);
  if (H != 3 || W != 4 ||
      std::memcmp(pf.data(), pf2.data(), sizeof(float) * pf.size()) != 0) {
    out.detail = "pfm round trip lost bits";
    return out;
  }

  // 8-bit color round trips exactly through PPM.
  Rng rng(71);
  std::vector<double> rgb_img(3 * 5 * 4);
  for (double& v : rgb_img) v = static_cast<double>(rng.index(256)) / 255.0;
  write_ppm(tmp.file("rt.ppm"), rgb_img.data(), 5, 4);
  const std::vector<double> rgb2 = read_ppm(tmp.file("rt.ppm"), &H, &W);
  if (H != 5 || W != 4 || rgb2 != rgb_img) {
    out.detail = "ppm round trip changed values";
    return out;
  }

  out.pass = true;
  out.detail = "logs, metrics and checkpoints byte-identical across runs; pfm/ppm lossless";
  return out;
}

struct Criterion {
  int id;
  const char* name;
  Outcome (*fn)();
};

}  // namespace

int main(int argc, char** argv) {
  set_num_threads(1);

  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      only.insert(std::atoi(argv[++i]));
    } else if (!a.empty() && std::isdigit(static_cast<unsigned char>(a[0]))) {
      only.insert(std::atoi(a.c_str()));
    }
  }

  const std::vector<Criterion> criteria = {
      {1, "flat batches match per-image message passing", flat_batch_equivalence},
      {2, "analytic gradients match finite differences", gradient_integrity},
      {3, "grid propagation scales linearly, dense attention quadratically", scaling_exponents},
      {4, "knn graphs cost a bounded overhead on grid propagation", knn_overhead_bounded},
      {5, "training overfits a small synthetic set", overfit_sanity},
      {6, "predicted uncertainty ranks the actual error", uncertainty_ranks_error},
      {7, "loss terms satisfy closed-form identities", loss_identities},
      {8, "graph builders match brute-force oracles", graph_oracles},
      {9, "gradient clipping bounds every training step", clipping_invariant},
      {10, "ablation grid trains end to end", ablation_grid},
      {11, "runs are deterministic and files round trip losslessly",
       determinism_and_serialization},
  };

  int failures = 0;
  for (const Criterion& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.fn();
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail = std::string("exception: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ostringstream line;
    line << (out.pass ? "PASS" : "FAIL") << " criterion " << c.id << ": " << c.name << " ["
         << out.detail << "] (" << std::fixed << std::setprecision(1) << secs << "s)";
    std::cout << line.str() << "\n" << std::flush;
    if (!out.pass) failures++;
  }

  if (failures == 0) {
    std::cout << "acceptance: all criteria passed\n";
  } else {
    std::cout << "acceptance: " << failures << " criteria failed\n";
  }
  return failures == 0 ? 0 : 1;
}
