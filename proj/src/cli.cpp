#include "graphdepth/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "graphdepth/bench.hpp"
#include "graphdepth/config.hpp"
#include "graphdepth/errors.hpp"
#include "graphdepth/threading.hpp"

namespace graphdepth {

namespace {

std::string sample_id(int64_t i) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%06lld", static_cast<long long>(i));
  return buf;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

// defaults, then the config file, then --set overrides (last one wins)
RunConfig resolve_config(const std::string& config_path,
                         const std::vector<std::string>& sets) {
  RunConfig rc;
  try {
    if (!config_path.empty())
      for (const auto& [k, v] : load_kv_file(config_path)) apply_run_key(rc, k, v);
  } catch (const ParseError& e) {
    throw ConfigError(std::string(e.what()) + " in '" + config_path + "'");
  }
  for (const auto& s : sets) {
    const size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects key=value, got '" + s + "'");
    apply_run_key(rc, trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
  }
  validate(rc);
  return rc;
}

void apply_threads(int threads) {
  if (threads > 0) set_num_threads(threads);
}

int cmd_gen_data(const RunConfig& rc, const std::string& out, const std::string& split,
                 int64_t count) {
  if (count < 1) throw ConfigError("--count must be at least 1");
  const std::string dir = out + "/" + split;
  for (int64_t i = 0; i < count; ++i) {
    SceneConfig sc = rc.scene;
    sc.seed = rc.scene.seed + static_cast<uint64_t>(i);
    write_sample(dir, sample_id(i), generate_scene(sc));
  }
  save_kv_file(dir + "/config.resolved", run_kv(rc));
  std::cout << "wrote " << count << " samples to " << dir << "\n";
  return 0;
}

int cmd_train(RunConfig rc, const std::string& data_root, const std::string& out,
              int64_t steps) {
  if (steps > 0) rc.train.max_steps = steps;
  Dataset train_set = load_dataset(data_root, "train");
  Dataset val_set;
  const bool has_val = split_exists(data_root, "val");
  if (has_val) val_set = load_dataset(data_root, "val");

  GraphDepthModel model(rc.model);
  std::filesystem::create_directories(out);
  save_kv_file(out + "/config.resolved", run_kv(rc));
  const TrainResult result =
      train_loop(model, train_set, has_val ? &val_set : nullptr, rc.train, rc.loss, out);
  std::cout << "trained " << result.steps_run << " steps, final loss "
            << format_double(result.final_total) << ", checkpoint "
            << result.checkpoint_prefix << "\n";
  return 0;
}

int cmd_eval(RunConfig rc, const std::string& checkpoint, const std::string& data_root,
             const std::string& split, const std::string& out, bool dump) {
  int64_t step = 0;
  GraphDepthModel model = load_checkpoint(checkpoint, &step);
  rc.model = model.config();
  const Dataset data = load_dataset(data_root, split);
  if (data.samples.empty())
    throw UsageError("dataset split '" + split + "' under '" + data_root + "' is empty");

  std::filesystem::create_directories(out);
  save_kv_file(out + "/config.resolved", run_kv(rc));

  MetricAccumulator acc;
  const int64_t n = static_cast<int64_t>(data.samples.size());
  const int64_t bs = rc.train.batch_size;
  for (int64_t start = 0; start < n; start += bs) {
    std::vector<int64_t> idx;
    for (int64_t i = start; i < std::min(start + bs, n); ++i) idx.push_back(i);
    Tensor rgb, depth, mask;
    make_batch(data, idx, &rgb, &depth, &mask);
    Tape tape;
    Prediction pred = model.forward(tape, rgb);
    acc.add(pred.depth, depth, mask);

    if (!dump) continue;
    const std::string maps = out + "/maps";
    std::filesystem::create_directories(maps);
    const int64_t H = pred.depth.extent(1), W = pred.depth.extent(2);
    std::vector<float> plane(H * W);
    for (size_t bi = 0; bi < idx.size(); ++bi) {
      const double* d = pred.depth.data() + static_cast<int64_t>(bi) * H * W;
      for (int64_t j = 0; j < H * W; ++j) plane[j] = static_cast<float>(d[j]);
      write_pfm(maps + "/" + data.ids[idx[bi]] + ".depth.pfm", plane.data(), H, W);
      if (!pred.has_log_var) continue;
      const double* s = pred.log_var.data() + static_cast<int64_t>(bi) * H * W;
      // the head predicts log sigma^2; users get sigma
      for (int64_t j = 0; j < H * W; ++j)
        plane[j] = static_cast<float>(std::exp(0.5 * s[j]));
      write_pfm(maps + "/" + data.ids[idx[bi]] + ".sigma.pfm", plane.data(), H, W);
    }
  }
  const Metrics m = acc.finish();
  std::ofstream csv(out + "/metrics.csv", std::ios::trunc);
  if (!csv) throw std::runtime_error("cannot write " + out + "/metrics.csv");
  csv << metrics_csv_header() << "\n" << metrics_csv_row(step, split, m) << "\n";
  csv.flush();
  if (!csv) throw std::runtime_error("write failed for " + out + "/metrics.csv");
  std::cout << metrics_csv_header() << "\n" << metrics_csv_row(step, split, m) << "\n";
  return 0;
}

int cmd_bench(const BenchConfig& bc, const std::string& out) {
  validate(bc);
  const ScalingReport report = run_scaling_bench(bc);
  const std::vector<KernelComparison> cmp = compare_kernels(bc);

  std::filesystem::create_directories(out);
  KvList kv = {
      {"bench.repeats", std::to_string(bc.repeats)},
      {"bench.batch", std::to_string(bc.batch)},
      {"bench.channels", std::to_string(bc.channels)},
      {"bench.knn_k", std::to_string(bc.knn_k)},
      {"bench.threads", std::to_string(num_threads())},
  };
  save_kv_file(out + "/config.resolved", kv);
  {
    std::ofstream csv(out + "/bench.csv", std::ios::trunc);
    if (!csv) throw std::runtime_error("cannot write " + out + "/bench.csv");
    csv << report_csv(report);
  }
  const std::string text = report_text(report, cmp);
  {
    std::ofstream txt(out + "/bench.txt", std::ios::trunc);
    if (!txt) throw std::runtime_error("cannot write " + out + "/bench.txt");
    txt << text;
  }
  std::cout << text;
  return 0;
}

struct PresetResult {
  std::string name;
  std::string graph;
  int64_t steps = 0;
  double final_total = 0.0;
  double rmse = 0.0;
  std::vector<int64_t> gnn_scales;
  int64_t knn_k_clamped = 0;
};

PresetResult run_preset(const std::string& name, ModelConfig mc, const RunConfig& rc,
                        const Dataset& data, int64_t steps) {
  validate(mc);
  TrainConfig tc = rc.train;
  tc.max_steps = steps;
  tc.epochs = std::max(tc.epochs, steps);  // never let the epoch budget cap the run
  GraphDepthModel model(mc);
  const TrainResult tr = train_loop(model, data, nullptr, tc, rc.loss, "");

  PresetResult res;
  res.name = name;
  res.graph = graph_kind_name(mc.graph);
  if (mc.graph == GraphKind::knn) res.graph += std::to_string(mc.knn.k);
  res.steps = tr.steps_run;
  res.final_total = tr.final_total;

  std::vector<int64_t> idx;
  for (int64_t i = 0; i < tc.batch_size; ++i) idx.push_back(i);
  Tensor rgb, depth, mask;
  make_batch(data, idx, &rgb, &depth, &mask);
  Tape tape;
  ForwardStats stats;
  Prediction pred = model.forward(tape, rgb, &stats);
  res.rmse = compute_metrics(pred.depth, depth, mask).rmse;
  res.gnn_scales = stats.gnn_scales;
  res.knn_k_clamped = stats.knn_k_clamped;
  return res;
}

int cmd_ablate(const RunConfig& rc, const std::string& data_root, const std::string& out,
               const std::string& preset, int64_t steps) {
  if (steps < 1) throw ConfigError("--steps must be at least 1");
  if (preset != "table5" && preset != "table6" && preset != "all")
    throw ConfigError("--preset must be table5, table6, or all");

  Dataset data;
  if (!data_root.empty()) {
    data = load_dataset(data_root, "train");
  } else {
    std::filesystem::create_directories(out);
    const std::string dir = out + "/data/train";
    for (int64_t i = 0; i < rc.train.batch_size; ++i) {
      SceneConfig sc = rc.scene;
      sc.seed = rc.scene.seed + static_cast<uint64_t>(i);
      write_sample(dir, sample_id(i), generate_scene(sc));
    }
    data = load_dataset(out + "/data", "train");
  }

  // Cumulative feature columns, then graph variants on the full model.
  auto toggles = [&](bool bneck, bool multi, bool attn, bool unc) {
    ModelConfig mc = rc.model;
    mc.bottleneck_gnn_only = bneck;
    mc.multi_scale_gnn = multi;
    mc.channel_attention = attn;
    mc.uncertainty_head = unc;
    mc.graph = GraphKind::grid8;
    return mc;
  };
  auto graphed = [&](GraphKind g, int64_t k) {
    ModelConfig mc = toggles(false, true, true, true);
    mc.graph = g;
    mc.knn.k = k;
    return mc;
  };

  std::vector<std::pair<std::string, ModelConfig>> runs;
  if (preset == "table5" || preset == "all") {
    runs.emplace_back("baseline", toggles(false, false, false, false));
    runs.emplace_back("bottleneck_gnn", toggles(true, false, false, false));
    runs.emplace_back("multi_scale", toggles(false, true, false, false));
    runs.emplace_back("attention", toggles(false, true, true, false));
    runs.emplace_back("uncertainty", toggles(false, true, true, true));
    ModelConfig knn = graphed(GraphKind::knn, rc.model.knn.k);
    runs.emplace_back("knn", knn);
  }
  if (preset == "table6" || preset == "all") {
    runs.emplace_back("graph_grid4", graphed(GraphKind::grid4, rc.model.knn.k));
    runs.emplace_back("graph_grid8", graphed(GraphKind::grid8, rc.model.knn.k));
    runs.emplace_back("graph_knn8", graphed(GraphKind::knn, 8));
    runs.emplace_back("graph_knn16", graphed(GraphKind::knn, 16));
    runs.emplace_back("graph_knn32", graphed(GraphKind::knn, 32));
  }

  std::filesystem::create_directories(out);
  save_kv_file(out + "/config.resolved", run_kv(rc));

  std::string csv = "preset,graph,steps,final_total,rmse,gnn_scales,knn_k_clamped\n";
  for (const auto& [name, mc] : runs) {
    const PresetResult res = run_preset(name, mc, rc, data, steps);
    std::string scales;
    for (size_t i = 0; i < res.gnn_scales.size(); ++i) {
      if (i) scales += "|";
      scales += std::to_string(res.gnn_scales[i]);
    }
    csv += res.name + "," + res.graph + "," + std::to_string(res.steps) + "," +
           format_double(res.final_total) + "," + format_double(res.rmse) + "," + scales +
           "," + std::to_string(res.knn_k_clamped) + "\n";
  }
  std::ofstream f(out + "/ablate.csv", std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + out + "/ablate.csv");
  f << csv;
  f.flush();
  if (!f) throw std::runtime_error("write failed for " + out + "/ablate.csv");
  std::cout << csv;
  return 0;
}

void error_line(const char* category, const std::string& msg) {
  std::cerr << "error: " << category << ": " << msg << "\n";
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"graph-based monocular depth estimation"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  int threads = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key=value configuration file");
    sub->add_option("--set", sets, "override a configuration key (key=value)");
    sub->add_option("--threads", threads, "worker thread count (default 1)");
  };

  auto* train = app.add_subcommand("train", "train a model and write checkpoints");
  std::string train_data, train_out = "run";
  int64_t train_steps = 0;
  add_common(train);
  train->add_option("--data", train_data, "dataset root directory")->required();
  train->add_option("--out", train_out, "output directory");
  train->add_option("--steps", train_steps, "stop after this many optimizer steps");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
  std::string eval_ckpt, eval_data, eval_split = "val", eval_out = "eval_out";
  bool eval_dump = false;
  add_common(eval);
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint prefix")->required();
  eval->add_option("--data", eval_data, "dataset root directory")->required();
  eval->add_option("--split", eval_split, "dataset split name");
  eval->add_option("--out", eval_out, "output directory");
  eval->add_flag("--dump", eval_dump, "write per-sample depth and sigma maps (PFM)");

  auto* bench = app.add_subcommand("bench", "measure kernel scaling and overheads");
  std::string bench_out = "bench_out";
  BenchConfig bc;
  add_common(bench);
  bench->add_option("--out", bench_out, "output directory");
  bench->add_option("--repeats", bc.repeats, "timed repeats per point (median)");
  bench->add_option("--batch", bc.batch, "images per flat batch");
  bench->add_option("--channels", bc.channels, "feature channels");
  bench->add_option("--knn-k", bc.knn_k, "neighbors for the knn series");

  auto* gen = app.add_subcommand("gen-data", "generate synthetic depth scenes");
  std::string gen_out, gen_split = "train";
  int64_t gen_count = 8;
  uint64_t gen_seed = 0;
  add_common(gen);
  gen->add_option("--out", gen_out, "dataset root directory")->required();
  gen->add_option("--count", gen_count, "number of samples");
  gen->add_option("--split", gen_split, "split subdirectory name");
  auto* gen_seed_opt = gen->add_option("--seed", gen_seed, "base scene seed");

  auto* ablate = app.add_subcommand("ablate", "train the preset grid, one CSV row each");
  std::string ab_data, ab_out = "ablate_out", ab_preset = "all";
  int64_t ab_steps = 10;
  add_common(ablate);
  ablate->add_option("--preset", ab_preset, "table5, table6, or all");
  ablate->add_option("--data", ab_data, "dataset root (generated when omitted)");
  ablate->add_option("--out", ab_out, "output directory");
  ablate->add_option("--steps", ab_steps, "optimizer steps per preset");

  std::vector<const char*> argv;
  argv.push_back("graphdepth");
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    error_line("usage", e.get_name());
    return 1;
  }

  try {
    apply_threads(threads);
    if (*gen) {
      RunConfig rc = resolve_config(config_path, sets);
      if (gen_seed_opt->count() > 0) rc.scene.seed = gen_seed;
      return cmd_gen_data(rc, gen_out, gen_split, gen_count);
    }
    if (*train)
      return cmd_train(resolve_config(config_path, sets), train_data, train_out,
                       train_steps);
    if (*eval)
      return cmd_eval(resolve_config(config_path, sets), eval_ckpt, eval_data, eval_split,
                      eval_out, eval_dump);
    if (*bench) return cmd_bench(bc, bench_out);
    if (*ablate)
      return cmd_ablate(resolve_config(config_path, sets), ab_data, ab_out, ab_preset,
                        ab_steps);
    error_line("usage", "no subcommand given");
    return 1;
  } catch (const ConfigError& e) {
    error_line("config", e.what());
    return 1;
  } catch (const UsageError& e) {
    error_line("usage", e.what());
    return 1;
  } catch (const NumericError& e) {
    error_line("numeric", e.what());
    return 2;
  } catch (const std::exception& e) {
    error_line("runtime", e.what());
    return 2;
  }
}

int run_cli(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args);
}

}  // namespace graphdepth
