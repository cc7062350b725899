#pragma once

#include <string>
#include <utility>

#include "graphdepth/layers.hpp"
#include "graphdepth/tensor.hpp"

namespace graphdepth {

struct LossWeights {
  double alpha = 0.85;
  double beta = 0.15;
  double gamma = 0.50;
};

void validate(const LossWeights& w);

// Scalars on the tape; total drives backward. Weighted doubles for logging.
struct LossBreakdown {
  Tensor l1;
  Tensor grad;
  Tensor unc;  // zero constant when the uncertainty head is off
  Tensor total;
  double weighted_l1 = 0.0;
  double weighted_grad = 0.0;
  double weighted_unc = 0.0;
};

// pred/truth/mask are BxHxW; mask entries 0 or 1; truth and mask are treated
// as constants. Means divide by the valid-pixel count. Gradient-difference
// terms use forward differences and need both pixels valid.
std::pair<Tensor, Tensor> l1_and_gradient_loss(Tape& tape, const Tensor& pred,
                                               const Tensor& truth, const Tensor& mask);

// masked mean of |err| * exp(-s) + s
Tensor uncertainty_loss(Tape& tape, const Tensor& pred, const Tensor& log_var,
                        const Tensor& truth, const Tensor& mask);

LossBreakdown total_loss(Tape& tape, const Prediction& pred, const Tensor& truth,
                         const Tensor& mask, const LossWeights& weights);

struct Metrics {
  double rmse = 0.0;
  double abs_rel = 0.0;
  double delta1 = 0.0;
  double mae = 0.0;
};

// Plain evaluation (no tape). Truth must be positive on valid pixels.
Metrics compute_metrics(const Tensor& pred, const Tensor& truth, const Tensor& mask);

// Pixel-sums that combine across batches before the final division.
struct MetricAccumulator {
  double sq_err = 0.0;
  double abs_err = 0.0;
  double rel_err = 0.0;
  double delta1_hits = 0.0;
  double valid = 0.0;

  void add(const Tensor& pred, const Tensor& truth, const Tensor& mask);
  Metrics finish() const;
};

std::string metrics_csv_header();
std::string metrics_csv_row(int64_t step, const std::string& split, const Metrics& m);

}  // namespace graphdepth
