#include "graphdepth/objective.hpp"

#include <charconv>
#include <cmath>

#include "graphdepth/errors.hpp"
#include "graphdepth/ops.hpp"

namespace graphdepth {

void validate(const LossWeights& w) {
  if (!(w.alpha >= 0.0) || !(w.beta >= 0.0) || !(w.gamma >= 0.0))
    throw ConfigError("loss weights must be non-negative");
  if (w.alpha + w.beta + w.gamma <= 0.0)
    throw ConfigError("at least one loss weight must be positive");
}

namespace {

double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void check_map_shapes(const Tensor& pred, const Tensor& truth, const Tensor& mask,
                      const char* where) {
  if (pred.ndim() != 3)
    throw UsageError(std::string(where) + ": prediction must be BxHxW, got " +
                     shape_str(pred.shape()));
  if (truth.shape() != pred.shape() || mask.shape() != pred.shape())
    throw UsageError(std::string(where) + ": prediction " + shape_str(pred.shape()) +
                     ", truth " + shape_str(truth.shape()) + ", mask " +
                     shape_str(mask.shape()) + " must match");
}

double valid_count(const Tensor& mask, const char* where) {
  double n = 0.0;
  const double* m = mask.data();
  for (int64_t i = 0; i < mask.numel(); ++i) n += m[i];
  if (n <= 0.0) throw UsageError(std::string(where) + ": mask has no valid pixels");
  return n;
}

std::string fmt(double value) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

}  // namespace

std::pair<Tensor, Tensor> l1_and_gradient_loss(Tape& tape, const Tensor& pred,
                                               const Tensor& truth, const Tensor& mask) {
  check_map_shapes(pred, truth, mask, "l1_and_gradient_loss");
  const double n_valid = valid_count(mask, "l1_and_gradient_loss");
  const int64_t B = pred.extent(0), H = pred.extent(1), W = pred.extent(2);
  const int64_t n = pred.numel();
  const double* p = pred.data();
  const double* t = truth.data();
  const double* m = mask.data();
  const int64_t px = tape.node_of(pred);

  double l1_acc = 0.0;
  std::vector<double> l1_coeff(n, 0.0);
  for (int64_t i = 0; i < n; ++i) {
    const double e = p[i] - t[i];
    l1_acc += m[i] * std::abs(e);
    l1_coeff[i] = m[i] * sign_of(e) / n_valid;
  }
  Tensor l1 = tape.make_output(
      {1}, std::vector<double>{l1_acc / n_valid}, "masked_l1",
      [px, coeff = std::move(l1_coeff)](Tape& tp, const std::vector<double>& gout) {
        if (px < 0) return;
        std::vector<double> g(coeff.size());
        for (size_t i = 0; i < coeff.size(); ++i) g[i] = gout[0] * coeff[i];
        tp.accumulate(px, g.data(), static_cast<int64_t>(g.size()), "masked_l1");
      });

  // Forward differences along each axis; a pair contributes only when both
  // endpoints are valid. Divided by the valid-pixel count, not the pair count.
  double grad_acc = 0.0;
  std::vector<double> grad_coeff(n, 0.0);
  for (int64_t b = 0; b < B; ++b) {
    const int64_t base = b * H * W;
    for (int64_t r = 0; r < H; ++r) {
      for (int64_t c = 0; c < W; ++c) {
        const int64_t i = base + r * W + c;
        if (c + 1 < W) {
          const double w = m[i] * m[i + 1];
          const double d = (p[i + 1] - p[i]) - (t[i + 1] - t[i]);
          grad_acc += w * std::abs(d);
          const double s = w * sign_of(d) / n_valid;
          grad_coeff[i + 1] += s;
          grad_coeff[i] -= s;
        }
        if (r + 1 < H) {
          const double w = m[i] * m[i + W];
          const double d = (p[i + W] - p[i]) - (t[i + W] - t[i]);
          grad_acc += w * std::abs(d);
          const double s = w * sign_of(d) / n_valid;
          grad_coeff[i + W] += s;
          grad_coeff[i] -= s;
        }
      }
    }
  }
  Tensor grad = tape.make_output(
      {1}, std::vector<double>{grad_acc / n_valid}, "masked_gradient",
      [px, coeff = std::move(grad_coeff)](Tape& tp, const std::vector<double>& gout) {
        if (px < 0) return;
        std::vector<double> g(coeff.size());
        for (size_t i = 0; i < coeff.size(); ++i) g[i] = gout[0] * coeff[i];
        tp.accumulate(px, g.data(), static_cast<int64_t>(g.size()), "masked_gradient");
      });

  return {l1, grad};
}

Tensor uncertainty_loss(Tape& tape, const Tensor& pred, const Tensor& log_var,
                        const Tensor& truth, const Tensor& mask) {
  check_map_shapes(pred, truth, mask, "uncertainty_loss");
  if (log_var.shape() != pred.shape())
    throw UsageError("uncertainty_loss: log-variance " + shape_str(log_var.shape()) +
                     " must match prediction " + shape_str(pred.shape()));
  const double n_valid = valid_count(mask, "uncertainty_loss");
  const int64_t n = pred.numel();
  const double* p = pred.data();
  const double* s = log_var.data();
  const double* t = truth.data();
  const double* m = mask.data();
  const int64_t px = tape.node_of(pred);
  const int64_t ps = tape.node_of(log_var);

  double acc = 0.0;
  std::vector<double> d_pred(n, 0.0);
  std::vector<double> d_logv(n, 0.0);
  for (int64_t i = 0; i < n; ++i) {
    const double e = p[i] - t[i];
    const double att = std::exp(-s[i]);
    acc += m[i] * (std::abs(e) * att + s[i]);
    d_pred[i] = m[i] * sign_of(e) * att / n_valid;
    d_logv[i] = m[i] * (1.0 - std::abs(e) * att) / n_valid;
  }
  return tape.make_output(
      {1}, std::vector<double>{acc / n_valid}, "masked_uncertainty",
      [px, ps, dp = std::move(d_pred), ds = std::move(d_logv)](
          Tape& tp, const std::vector<double>& gout) {
        std::vector<double> g(dp.size());
        if (px >= 0) {
          for (size_t i = 0; i < dp.size(); ++i) g[i] = gout[0] * dp[i];
          tp.accumulate(px, g.data(), static_cast<int64_t>(g.size()), "masked_uncertainty");
        }
        if (ps >= 0) {
          for (size_t i = 0; i < ds.size(); ++i) g[i] = gout[0] * ds[i];
          tp.accumulate(ps, g.data(), static_cast<int64_t>(g.size()), "masked_uncertainty");
        }
      });
}

LossBreakdown total_loss(Tape& tape, const Prediction& pred, const Tensor& truth,
                         const Tensor& mask, const LossWeights& weights) {
  LossBreakdown out;
  auto [l1, grad] = l1_and_gradient_loss(tape, pred.depth, truth, mask);
  out.l1 = l1;
  out.grad = grad;
  out.weighted_l1 = weights.alpha * l1.item();
  out.weighted_grad = weights.beta * grad.item();
  Tensor total = add(tape, scale(tape, l1, weights.alpha), scale(tape, grad, weights.beta));
  if (pred.has_log_var) {
    out.unc = uncertainty_loss(tape, pred.depth, pred.log_var, truth, mask);
    out.weighted_unc = weights.gamma * out.unc.item();
    total = add(tape, total, scale(tape, out.unc, weights.gamma));
  } else {
    out.unc = Tensor::scalar(0.0);
    out.weighted_unc = 0.0;
  }
  out.total = total;
  return out;
}

Metrics compute_metrics(const Tensor& pred, const Tensor& truth, const Tensor& mask) {
  MetricAccumulator acc;
  acc.add(pred, truth, mask);
  return acc.finish();
}

void MetricAccumulator::add(const Tensor& pred, const Tensor& truth, const Tensor& mask) {
  check_map_shapes(pred, truth, mask, "compute_metrics");
  const double* p = pred.data();
  const double* t = truth.data();
  const double* m = mask.data();
  for (int64_t i = 0; i < pred.numel(); ++i) {
    if (m[i] == 0.0) continue;
    const double e = p[i] - t[i];
    sq_err += e * e;
    abs_err += std::abs(e);
    rel_err += std::abs(e) / t[i];
    if (p[i] > 0.0 && std::max(p[i] / t[i], t[i] / p[i]) < 1.25) delta1_hits += 1.0;
    valid += 1.0;
  }
}

Metrics MetricAccumulator::finish() const {
  if (valid <= 0.0) throw UsageError("compute_metrics: mask has no valid pixels");
  Metrics m;
  m.rmse = std::sqrt(sq_err / valid);
  m.abs_rel = rel_err / valid;
  m.delta1 = delta1_hits / valid;
  m.mae = abs_err / valid;
  return m;
}

std::string metrics_csv_header() { return "step,split,rmse,abs_rel,delta1,mae"; }

std::string metrics_csv_row(int64_t step, const std::string& split, const Metrics& m) {
  return std::to_string(step) + "," + split + "," + fmt(m.rmse) + "," + fmt(m.abs_rel) +
         "," + fmt(m.delta1) + "," + fmt(m.mae);
}

}  // namespace graphdepth
