#include "graphdepth/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "graphdepth/config.hpp"
#include "graphdepth/errors.hpp"
#include "graphdepth/ops.hpp"
#include "graphdepth/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian");

namespace graphdepth {

void validate(const ModelConfig& config) {
  for (int64_t c : config.encoder_channels)
    if (c < 1) throw ConfigError("model: encoder channels must be positive");
  if (config.stem_channels < 1) throw ConfigError("model: stem channels must be positive");
  if (config.max_depth <= 0.0) throw ConfigError("model: max_depth must be positive");
  if (config.multi_scale_gnn && config.bottleneck_gnn_only)
    throw ConfigError("model: multi_scale_gnn and bottleneck_gnn_only are mutually exclusive");
  if (config.knn.k < 1) throw ConfigError("model: knn.k must be positive");
  if (config.knn.alpha < 0.0 || config.knn.beta < 0.0)
    throw ConfigError("model: knn.alpha and knn.beta must be non-negative");
}

GraphDepthModel::GraphDepthModel(ModelConfig config) : config_(std::move(config)) {
  validate(config_);
  Rng rng(config_.seed);
  stem_ = make_conv_params(3, config_.stem_channels, 3, rng);
  int64_t prev = config_.stem_channels;
  for (int i = 0; i < 4; ++i) {
    enc_[i] = make_conv_params(prev, config_.encoder_channels[i], 3, rng);
    prev = config_.encoder_channels[i];
  }
  bneck_conv_ = make_conv_params(prev, prev, 3, rng);
  if (gnn_at_bottleneck()) bneck_sage_ = make_sage_params(prev, prev, rng);
  for (int l = 0; l < 3; ++l) {
    const int64_t skip = config_.encoder_channels[2 - l];
    const int64_t cat = prev + skip;
    const int64_t out = skip;
    stages_[l].use_attention = config_.channel_attention;
    if (stages_[l].use_attention) stages_[l].attention = make_attention_params(cat, rng);
    stages_[l].use_gnn = l < 2 && gnn_at_decoder();
    if (stages_[l].use_gnn)
      stages_[l].sage = make_sage_params(cat, out, rng);
    else
      stages_[l].conv = make_conv_params(cat, out, 3, rng);
    prev = out;
  }
  heads_ = make_head_params(prev, config_.max_depth, config_.uncertainty_head, rng);
}

std::vector<std::pair<std::string, Tensor*>> GraphDepthModel::named_parameters() {
  std::vector<std::pair<std::string, Tensor*>> out;
  auto conv = [&](const std::string& name, ConvParams& p) {
    out.emplace_back(name + ".w", &p.w);
    out.emplace_back(name + ".b", &p.b);
  };
  auto sage = [&](const std::string& name, SageLayerParams& p) {
    out.emplace_back(name + ".weight", &p.weight);
    out.emplace_back(name + ".bias", &p.bias);
  };
  conv("stem", stem_);
  for (int i = 0; i < 4; ++i) conv("enc" + std::to_string(i + 1), enc_[i]);
  conv("bottleneck.conv", bneck_conv_);
  if (gnn_at_bottleneck()) sage("bottleneck.sage", bneck_sage_);
  for (int l = 0; l < 3; ++l) {
    const std::string stage = "stage" + std::to_string(l + 1);
    if (stages_[l].use_attention) {
      out.emplace_back(stage + ".attn.w1", &stages_[l].attention.w1);
      out.emplace_back(stage + ".attn.b1", &stages_[l].attention.b1);
      out.emplace_back(stage + ".attn.w2", &stages_[l].attention.w2);
      out.emplace_back(stage + ".attn.b2", &stages_[l].attention.b2);
    }
    if (stages_[l].use_gnn)
      sage(stage + ".sage", stages_[l].sage);
    else
      conv(stage + ".conv", stages_[l].conv);
  }
  conv("head.depth", heads_.depth);
  if (heads_.has_unc) conv("head.unc", heads_.unc);
  return out;
}

int64_t GraphDepthModel::parameter_count() {
  int64_t n = 0;
  for (auto& [name, t] : named_parameters()) n += t->numel();
  return n;
}

void GraphDepthModel::watch_parameters(Tape& tape) {
  for (auto& [name, t] : named_parameters()) tape.watch(*t);
}

std::array<Tensor, 4> GraphDepthModel::encode(Tape& tape, const Tensor& input) const {
  if (input.ndim() != 4 || input.extent(1) != 3)
    throw ConfigError("encode: input must be Bx3xHxW, got " + shape_str(input.shape()));
  const int64_t H = input.extent(2), W = input.extent(3);
  if (H < 32 || W < 32 || H % 32 != 0 || W % 32 != 0)
    throw ConfigError("encode: input extents must be divisible by 32, got " +
                      std::to_string(H) + "x" + std::to_string(W));
  Tensor x = conv_block(tape, input, stem_, 2);
  std::array<Tensor, 4> maps;
  for (int i = 0; i < 4; ++i) {
    x = conv_block(tape, x, enc_[i], 2);
    maps[i] = x;
  }
  return maps;
}

std::shared_ptr<const BatchedGraph> GraphDepthModel::graph_for(const Tensor& map,
                                                               ForwardStats* stats) const {
  const int64_t B = map.extent(0), C = map.extent(1), h = map.extent(2), w = map.extent(3);
  const int64_t npi = h * w;
  if (config_.graph != GraphKind::knn) {
    const int conn = config_.graph == GraphKind::grid4 ? 4 : 8;
    auto topo = build_grid_cached(h, w, conn);
    return std::make_shared<const BatchedGraph>(
        broadcast_batch(std::vector<GraphTopology>{*topo}, B, npi));
  }

  KnnParams params = config_.knn;
  params.k = std::min<int64_t>(params.k, npi - 1);
  if (params.k < config_.knn.k && stats) stats->knn_k_clamped++;

  std::vector<GraphTopology> per_image;
  per_image.reserve(B);
  std::vector<double> feat(npi * C);
  std::vector<double> coords(npi * 2);
  for (int64_t v = 0; v < npi; ++v) {
    coords[v * 2] = static_cast<double>(v / w);
    coords[v * 2 + 1] = static_cast<double>(v % w);
  }
  const double* mp = map.data();
  for (int64_t b = 0; b < B; ++b) {
    for (int64_t c = 0; c < C; ++c)
      for (int64_t v = 0; v < npi; ++v) feat[v * C + c] = mp[(b * C + c) * npi + v];
    if (params.k >= 1) {
      per_image.push_back(build_knn(feat.data(), npi, C, coords.data(), params));
    } else {
      // single-node map: no neighbors exist; empty adjacency
      GraphTopology t;
      t.kind = GraphKind::knn;
      t.k = 0;
      t.n_nodes = npi;
      t.offsets.assign(npi + 1, 0);
      per_image.push_back(std::move(t));
    }
  }
  return std::make_shared<const BatchedGraph>(broadcast_batch(per_image, B, npi));
}

Prediction GraphDepthModel::forward(Tape& tape, const Tensor& input,
                                    ForwardStats* stats) const {
  std::array<Tensor, 4> x = encode(tape, input);
  const int64_t Hin = input.extent(2);

  Tensor g = conv_block(tape, x[3], bneck_conv_, 1);
  if (gnn_at_bottleneck()) {
    if (stats) stats->gnn_scales.push_back(Hin / g.extent(2));
    g = sage_forward(tape, g, graph_for(g, stats), bneck_sage_, config_.aggregator);
  }
  for (int l = 0; l < 3; ++l) {
    GraphFactory factory = [this, stats, Hin](const Tensor& s) {
      if (stats) stats->gnn_scales.push_back(Hin / s.extent(2));
      return graph_for(s, stats);
    };
    g = decoder_stage(tape, g, x[2 - l], stages_[l], factory, config_.aggregator);
  }
  return heads(tape, g, heads_);
}

namespace {

std::string shape_csv(const Shape& s) {
  std::string out;
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out;
}

Shape parse_shape_csv(const std::string& s, const std::string& context) {
  Shape shape;
  size_t pos = 0;
  while (pos <= s.size()) {
    const size_t comma = s.find(',', pos);
    const std::string tok = s.substr(pos, comma == std::string::npos ? comma : comma - pos);
    shape.push_back(parse_int(tok, context));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return shape;
}

}  // namespace

void save_checkpoint(const std::string& prefix, GraphDepthModel& model, int64_t step,
                     const NamedArrays& extras) {
  struct Entry {
    std::string name;
    std::string shape;
    int64_t offset;
    int64_t count;
  };
  std::vector<Entry> entries;

  std::ofstream blob(prefix + ".params.bin", std::ios::binary | std::ios::trunc);
  if (!blob) throw std::runtime_error("cannot write " + prefix + ".params.bin");
  int64_t offset = 0;
  auto append = [&](const std::string& name, const std::string& shape, const double* p,
                    int64_t n) {
    blob.write(reinterpret_cast<const char*>(p), n * static_cast<int64_t>(sizeof(double)));
    entries.push_back({name, shape, offset, n});
    offset += n * static_cast<int64_t>(sizeof(double));
  };
  for (auto& [name, t] : model.named_parameters())
    append(name, shape_csv(t->shape()), t->data(), t->numel());
  for (const auto& [name, values] : extras)
    append(name, "", values.data(), static_cast<int64_t>(values.size()));
  blob.flush();
  if (!blob) throw std::runtime_error("write failed for " + prefix + ".params.bin");

  std::ofstream man(prefix + ".manifest.txt", std::ios::trunc);
  if (!man) throw std::runtime_error("cannot write " + prefix + ".manifest.txt");
  man << "format = graphdepth-checkpoint-v1\n";
  man << "step = " << step << "\n";
  for (const auto& [k, v] : model_kv(model.config())) man << k << " = " << v << "\n";
  man << "arrays = " << entries.size() << "\n";
  for (size_t i = 0; i < entries.size(); ++i) {
    man << "array." << i << ".name = " << entries[i].name << "\n";
    if (!entries[i].shape.empty())
      man << "array." << i << ".shape = " << entries[i].shape << "\n";
    man << "array." << i << ".offset = " << entries[i].offset << "\n";
    man << "array." << i << ".count = " << entries[i].count << "\n";
  }
  man.flush();
  if (!man) throw std::runtime_error("write failed for " + prefix + ".manifest.txt");
}

GraphDepthModel load_checkpoint(const std::string& prefix, int64_t* step,
                                NamedArrays* extras) {
  std::ifstream manf(prefix + ".manifest.txt");
  if (!manf) throw std::runtime_error("cannot read " + prefix + ".manifest.txt");
  std::string text((std::istreambuf_iterator<char>(manf)), std::istreambuf_iterator<char>());
  KvList kv = parse_kv_text(text);

  std::map<std::string, std::string> lookup(kv.begin(), kv.end());
  auto need = [&](const std::string& key) -> const std::string& {
    auto it = lookup.find(key);
    if (it == lookup.end())
      throw std::runtime_error("checkpoint manifest missing key '" + key + "'");
    return it->second;
  };
  if (need("format") != "graphdepth-checkpoint-v1")
    throw std::runtime_error("unrecognized checkpoint format '" + lookup["format"] + "'");
  if (step) *step = parse_int(need("step"), "step");

  ModelConfig config;
  for (const auto& [k, v] : kv)
    if (k.rfind("model.", 0) == 0) apply_model_key(config, k, v);
  GraphDepthModel model(config);

  std::ifstream blob(prefix + ".params.bin", std::ios::binary);
  if (!blob) throw std::runtime_error("cannot read " + prefix + ".params.bin");

  auto params = model.named_parameters();
  std::map<std::string, Tensor*> by_name;
  for (auto& [name, t] : params) by_name[name] = t;
  size_t params_loaded = 0;

  const int64_t n_arrays = parse_int(need("arrays"), "arrays");
  for (int64_t i = 0; i < n_arrays; ++i) {
    const std::string base = "array." + std::to_string(i);
    const std::string& name = need(base + ".name");
    const int64_t offset = parse_int(need(base + ".offset"), base);
    const int64_t count = parse_int(need(base + ".count"), base);
    std::vector<double> values(count);
    blob.seekg(offset);
    blob.read(reinterpret_cast<char*>(values.data()),
              count * static_cast<int64_t>(sizeof(double)));
    if (!blob)
      throw std::runtime_error("checkpoint blob truncated while reading '" + name + "'");
    auto it = by_name.find(name);
    if (it != by_name.end()) {
      Tensor* t = it->second;
      const Shape shape = parse_shape_csv(need(base + ".shape"), base);
      if (shape != t->shape())
        throw std::runtime_error("checkpoint parameter '" + name + "' has shape mismatch");
      std::copy(values.begin(), values.end(), t->data());
      params_loaded++;
    } else if (extras) {
      extras->emplace_back(name, std::move(values));
    }
  }
  if (params_loaded != params.size())
    throw std::runtime_error("checkpoint is missing " +
                             std::to_string(params.size() - params_loaded) +
                             " model parameters");
  return model;
}

}  // namespace graphdepth
