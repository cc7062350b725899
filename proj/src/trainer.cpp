#include "graphdepth/trainer.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "graphdepth/errors.hpp"

namespace graphdepth {

void validate(const TrainConfig& c) {
  if (!(c.base_lr > 0.0)) throw ConfigError("base_lr must be positive");
  if (c.batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (c.epochs < 1) throw ConfigError("epochs must be at least 1");
  if (!(c.clip_max_norm > 0.0)) throw ConfigError("clip_max_norm must be positive");
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0) || !(c.beta2 >= 0.0 && c.beta2 < 1.0))
    throw ConfigError("betas must lie in [0, 1)");
  if (!(c.epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (!(c.weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (c.max_steps < 0) throw ConfigError("max_steps must be non-negative");
  if (c.checkpoint_every < 0) throw ConfigError("checkpoint_every must be non-negative");
  if (c.validate_every < 1) throw ConfigError("validate_every must be at least 1");
}

OptimizerState make_optimizer_state(GraphDepthModel& model) {
  OptimizerState state;
  for (auto& [name, t] : model.named_parameters()) {
    (void)name;
    state.m.emplace_back(t->numel(), 0.0);
    state.v.emplace_back(t->numel(), 0.0);
  }
  return state;
}

double global_norm(const std::vector<std::vector<double>>& grads) {
  double sq = 0.0;
  for (const auto& g : grads)
    for (double v : g) sq += v * v;
  return std::sqrt(sq);
}

double clip_gradients(std::vector<std::vector<double>>& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (!std::isfinite(norm))
    throw NumericError("gradient norm is non-finite; aborting the step");
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& g : grads)
      for (double& v : g) v *= scale;
  }
  return norm;
}

void optimizer_step(const std::vector<Tensor*>& params,
                    const std::vector<std::vector<double>>& grads, OptimizerState& state,
                    double lr, const TrainConfig& config) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw UsageError("optimizer_step: parameter/gradient/state counts disagree");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    double* p = params[i]->data();
    const std::vector<double>& g = grads[i];
    std::vector<double>& m = state.m[i];
    std::vector<double>& v = state.v[i];
    if (static_cast<int64_t>(g.size()) != params[i]->numel())
      throw UsageError("optimizer_step: gradient size mismatch");
    for (size_t j = 0; j < g.size(); ++j) {
      m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g[j];
      v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      p[j] -= lr * m_hat / (std::sqrt(v_hat) + config.epsilon) +
              lr * config.weight_decay * p[j];
    }
  }
}

double lr_schedule(int64_t step, int64_t total_steps, double base_lr) {
  if (total_steps < 1) throw UsageError("lr_schedule: total_steps must be positive");
  if (step < 0) step = 0;
  if (step > total_steps) step = total_steps;
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return base_lr * 0.5 * (1.0 + std::cos(3.141592653589793238462643383279 * frac));
}

namespace {

std::string fmt(double value) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

}  // namespace

NamedArrays optimizer_extras(GraphDepthModel& model, const OptimizerState& state) {
  NamedArrays extras;
  auto params = model.named_parameters();
  if (params.size() != state.m.size())
    throw UsageError("optimizer state does not match the model's parameters");
  for (size_t i = 0; i < params.size(); ++i) {
    extras.emplace_back("opt.m." + params[i].first, state.m[i]);
    extras.emplace_back("opt.v." + params[i].first, state.v[i]);
  }
  return extras;
}

OptimizerState optimizer_state_from_extras(GraphDepthModel& model,
                                           const NamedArrays& extras, int64_t step) {
  OptimizerState state = make_optimizer_state(model);
  state.step = step;
  auto params = model.named_parameters();
  size_t found = 0;
  for (const auto& [name, values] : extras) {
    for (size_t i = 0; i < params.size(); ++i) {
      std::vector<double>* dst = nullptr;
      if (name == "opt.m." + params[i].first) dst = &state.m[i];
      if (name == "opt.v." + params[i].first) dst = &state.v[i];
      if (!dst) continue;
      if (values.size() != dst->size())
        throw UsageError("optimizer moment '" + name + "' has the wrong size");
      *dst = values;
      ++found;
    }
  }
  if (found != 2 * params.size())
    throw UsageError("checkpoint extras are missing optimizer moments");
  return state;
}

namespace {

Metrics evaluate(GraphDepthModel& model, const Dataset& data, int64_t batch_size) {
  MetricAccumulator acc;
  const int64_t n = static_cast<int64_t>(data.samples.size());
  for (int64_t start = 0; start < n; start += batch_size) {
    std::vector<int64_t> idx;
    for (int64_t i = start; i < std::min(start + batch_size, n); ++i) idx.push_back(i);
    Tensor rgb, depth, mask;
    make_batch(data, idx, &rgb, &depth, &mask);
    Tape tape;
    Prediction pred = model.forward(tape, rgb);
    acc.add(pred.depth, depth, mask);
  }
  return acc.finish();
}

}  // namespace

TrainResult train_loop(GraphDepthModel& model, const Dataset& train_set,
                       const Dataset* val_set, const TrainConfig& config,
                       const LossWeights& weights, const std::string& out_dir,
                       const StepHook& hook) {
  validate(config);
  validate(weights);
  const int64_t n_samples = static_cast<int64_t>(train_set.samples.size());
  if (n_samples < config.batch_size)
    throw UsageError("training set has " + std::to_string(n_samples) +
                     " samples, fewer than one batch of " +
                     std::to_string(config.batch_size));

  const int64_t batches_per_epoch = n_samples / config.batch_size;
  int64_t planned = batches_per_epoch * config.epochs;
  if (config.max_steps > 0) planned = std::min(planned, config.max_steps);

  std::ofstream log;
  std::ofstream metrics_out;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    log.open(out_dir + "/train_log.csv", std::ios::trunc);
    if (!log) throw std::runtime_error("cannot write " + out_dir + "/train_log.csv");
    log << "step,lr,l1,grad,unc,total,grad_norm,grad_norm_post\n";
    if (val_set) {
      metrics_out.open(out_dir + "/metrics.csv", std::ios::trunc);
      if (!metrics_out)
        throw std::runtime_error("cannot write " + out_dir + "/metrics.csv");
      metrics_out << metrics_csv_header() << "\n";
    }
  }

  auto named = model.named_parameters();
  std::vector<Tensor*> params;
  for (auto& [name, t] : named) params.push_back(t);
  OptimizerState state = make_optimizer_state(model);

  TrainResult result;
  int64_t step = 0;
  bool stop = false;
  for (int64_t epoch = 0; epoch < config.epochs && !stop; ++epoch) {
    for (const auto& batch :
         batch_iter(n_samples, config.batch_size, config.seed, epoch)) {
      if (step >= planned) {
        stop = true;
        break;
      }
      Tensor rgb, depth, mask;
      make_batch(train_set, batch, &rgb, &depth, &mask);

      Tape tape;
      model.watch_parameters(tape);
      Prediction pred = model.forward(tape, rgb);
      LossBreakdown loss = total_loss(tape, pred, depth, mask, weights);
      tape.backward(loss.total);

      std::vector<std::vector<double>> grads;
      grads.reserve(params.size());
      for (Tensor* p : params) grads.push_back(tape.grad(*p));

      StepInfo info;
      info.step = step;
      info.grad_norm = clip_gradients(grads, config.clip_max_norm);
      info.grad_norm_post = std::min(info.grad_norm, config.clip_max_norm);
      info.lr = lr_schedule(step, planned, config.base_lr);
      optimizer_step(params, grads, state, info.lr, config);

      info.l1 = loss.weighted_l1;
      info.grad = loss.weighted_grad;
      info.unc = loss.weighted_unc;
      info.total = loss.total.item();
      result.final_total = info.total;

      if (log)
        log << info.step << "," << fmt(info.lr) << "," << fmt(info.l1) << ","
            << fmt(info.grad) << "," << fmt(info.unc) << "," << fmt(info.total) << ","
            << fmt(info.grad_norm) << "," << fmt(info.grad_norm_post) << "\n";

      ++step;
      if (!out_dir.empty() && config.checkpoint_every > 0 &&
          step % config.checkpoint_every == 0)
        save_checkpoint(out_dir + "/checkpoint_" + std::to_string(step), model, step,
                        optimizer_extras(model, state));

      if (hook && !hook(info)) {
        stop = true;
        break;
      }
    }
    if (val_set && !val_set->samples.empty() && (epoch + 1) % config.validate_every == 0 &&
        metrics_out) {
      const Metrics m = evaluate(model, *val_set, config.batch_size);
      metrics_out << metrics_csv_row(step, "val", m) << "\n";
    }
  }

  result.steps_run = step;
  if (!out_dir.empty()) {
    result.checkpoint_prefix = out_dir + "/checkpoint_final";
    save_checkpoint(result.checkpoint_prefix, model, step, optimizer_extras(model, state));
    if (log) {
      log.flush();
      if (!log) throw std::runtime_error("write failed for " + out_dir + "/train_log.csv");
    }
  }
  return result;
}

}  // namespace graphdepth
