#pragma once

#include <functional>
#include <string>
#include <vector>

#include "graphdepth/data.hpp"
#include "graphdepth/model.hpp"
#include "graphdepth/objective.hpp"

namespace graphdepth {

struct TrainConfig {
  double base_lr = 1e-4;
  int64_t batch_size = 8;
  int64_t epochs = 100;
  double clip_max_norm = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
  uint64_t seed = 1;
  int64_t max_steps = 0;        // 0 = run all epochs; otherwise stop after this many steps
  int64_t checkpoint_every = 0; // steps between checkpoints; 0 = final only
  int64_t validate_every = 1;   // epochs between validation passes
};

void validate(const TrainConfig& config);

struct OptimizerState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  int64_t step = 0;
};

OptimizerState make_optimizer_state(GraphDepthModel& model);

// Moments as checkpoint extras ("opt.m.<param>", "opt.v.<param>") so a
// resumed run picks up bit-exactly where it stopped.
NamedArrays optimizer_extras(GraphDepthModel& model, const OptimizerState& state);
OptimizerState optimizer_state_from_extras(GraphDepthModel& model,
                                           const NamedArrays& extras, int64_t step);

// Scales all gradients by max_norm/norm when the global L2 norm exceeds
// max_norm; returns the observed pre-clip norm.
double clip_gradients(std::vector<std::vector<double>>& grads, double max_norm);

double global_norm(const std::vector<std::vector<double>>& grads);

// Bias-corrected adaptive moments with decoupled weight decay:
// param -= lr * m_hat / (sqrt(v_hat) + eps) + lr * wd * param.
void optimizer_step(const std::vector<Tensor*>& params,
                    const std::vector<std::vector<double>>& grads, OptimizerState& state,
                    double lr, const TrainConfig& config);

// base_lr * 0.5 * (1 + cos(pi * step / total_steps)); no warmup.
double lr_schedule(int64_t step, int64_t total_steps, double base_lr);

struct StepInfo {
  int64_t step = 0;  // 0-based
  double lr = 0.0;
  double l1 = 0.0;
  double grad = 0.0;
  double unc = 0.0;
  double total = 0.0;
  double grad_norm = 0.0;       // pre-clip
  double grad_norm_post = 0.0;  // after clipping
};

// Return false to stop training early.
using StepHook = std::function<bool(const StepInfo&)>;

struct TrainResult {
  int64_t steps_run = 0;
  double final_total = 0.0;
  std::string checkpoint_prefix;  // final checkpoint location ("" if out_dir empty)
};

// out_dir receives train_log.csv, metrics.csv, and checkpoints; pass "" to
// train without touching the filesystem.
TrainResult train_loop(GraphDepthModel& model, const Dataset& train_set,
                       const Dataset* val_set, const TrainConfig& config,
                       const LossWeights& weights, const std::string& out_dir,
                       const StepHook& hook = nullptr);

}  // namespace graphdepth
