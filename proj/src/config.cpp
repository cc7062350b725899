#include "graphdepth/config.hpp"

#include <charconv>
#include <fstream>
#include <iterator>

#include "graphdepth/errors.hpp"

namespace graphdepth {

std::string format_double(double value) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

template <class T>
T parse_via_from_chars(const std::string& text, const std::string& context,
                       const char* wanted) {
  T value{};
  const char* begin = text.data();
  const char* end = begin + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end)
    throw ConfigError("expected " + std::string(wanted) + " for '" + context + "', got '" +
                      text + "'");
  return value;
}

uint64_t parse_uint(const std::string& text, const std::string& context) {
  return parse_via_from_chars<uint64_t>(text, context, "an unsigned integer");
}

}  // namespace

double parse_double(const std::string& text, const std::string& context) {
  return parse_via_from_chars<double>(text, context, "a number");
}

int64_t parse_int(const std::string& text, const std::string& context) {
  return parse_via_from_chars<int64_t>(text, context, "an integer");
}

bool parse_bool(const std::string& text, const std::string& context) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("expected true/false for '" + context + "', got '" + text + "'");
}

namespace {

std::string channels_csv(const std::array<int64_t, 4>& c) {
  std::string out;
  for (size_t i = 0; i < c.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(c[i]);
  }
  return out;
}

std::array<int64_t, 4> parse_channels_csv(const std::string& text, const std::string& key) {
  std::array<int64_t, 4> out{};
  size_t pos = 0;
  for (size_t i = 0; i < 4; ++i) {
    const size_t comma = text.find(',', pos);
    const bool last = (i == 3);
    if (last != (comma == std::string::npos))
      throw ConfigError("expected 4 comma-separated integers for '" + key + "', got '" +
                        text + "'");
    out[i] = parse_int(text.substr(pos, last ? comma : comma - pos), key);
    pos = comma + 1;
  }
  return out;
}

const char* bool_text(bool v) { return v ? "true" : "false"; }

}  // namespace

KvList model_kv(const ModelConfig& c) {
  return {
      {"model.encoder_channels", channels_csv(c.encoder_channels)},
      {"model.stem_channels", std::to_string(c.stem_channels)},
      {"model.graph", graph_kind_name(c.graph)},
      {"model.knn_k", std::to_string(c.knn.k)},
      {"model.knn_alpha", format_double(c.knn.alpha)},
      {"model.knn_beta", format_double(c.knn.beta)},
      {"model.knn_normalize", bool_text(c.knn.normalize)},
      {"model.multi_scale_gnn", bool_text(c.multi_scale_gnn)},
      {"model.bottleneck_gnn_only", bool_text(c.bottleneck_gnn_only)},
      {"model.channel_attention", bool_text(c.channel_attention)},
      {"model.uncertainty_head", bool_text(c.uncertainty_head)},
      {"model.aggregator", aggregator_name(c.aggregator)},
      {"model.max_depth", format_double(c.max_depth)},
      {"model.seed", std::to_string(c.seed)},
  };
}

void apply_model_key(ModelConfig& c, const std::string& key, const std::string& value) {
  if (key == "model.encoder_channels")
    c.encoder_channels = parse_channels_csv(value, key);
  else if (key == "model.stem_channels")
    c.stem_channels = parse_int(value, key);
  else if (key == "model.graph")
    c.graph = graph_kind_from_name(value);
  else if (key == "model.knn_k")
    c.knn.k = parse_int(value, key);
  else if (key == "model.knn_alpha")
    c.knn.alpha = parse_double(value, key);
  else if (key == "model.knn_beta")
    c.knn.beta = parse_double(value, key);
  else if (key == "model.knn_normalize")
    c.knn.normalize = parse_bool(value, key);
  else if (key == "model.multi_scale_gnn")
    c.multi_scale_gnn = parse_bool(value, key);
  else if (key == "model.bottleneck_gnn_only")
    c.bottleneck_gnn_only = parse_bool(value, key);
  else if (key == "model.channel_attention")
    c.channel_attention = parse_bool(value, key);
  else if (key == "model.uncertainty_head")
    c.uncertainty_head = parse_bool(value, key);
  else if (key == "model.aggregator")
    c.aggregator = aggregator_from_name(value);
  else if (key == "model.max_depth")
    c.max_depth = parse_double(value, key);
  else if (key == "model.seed")
    c.seed = parse_uint(value, key);
  else
    throw ConfigError("unknown configuration key '" + key + "'");
}

namespace {

KvList train_kv(const TrainConfig& c) {
  return {
      {"train.base_lr", format_double(c.base_lr)},
      {"train.batch_size", std::to_string(c.batch_size)},
      {"train.epochs", std::to_string(c.epochs)},
      {"train.clip_max_norm", format_double(c.clip_max_norm)},
      {"train.beta1", format_double(c.beta1)},
      {"train.beta2", format_double(c.beta2)},
      {"train.epsilon", format_double(c.epsilon)},
      {"train.weight_decay", format_double(c.weight_decay)},
      {"train.seed", std::to_string(c.seed)},
      {"train.max_steps", std::to_string(c.max_steps)},
      {"train.checkpoint_every", std::to_string(c.checkpoint_every)},
      {"train.validate_every", std::to_string(c.validate_every)},
  };
}

void apply_train_key(TrainConfig& c, const std::string& key, const std::string& value) {
  if (key == "train.base_lr")
    c.base_lr = parse_double(value, key);
  else if (key == "train.batch_size")
    c.batch_size = parse_int(value, key);
  else if (key == "train.epochs")
    c.epochs = parse_int(value, key);
  else if (key == "train.clip_max_norm")
    c.clip_max_norm = parse_double(value, key);
  else if (key == "train.beta1")
    c.beta1 = parse_double(value, key);
  else if (key == "train.beta2")
    c.beta2 = parse_double(value, key);
  else if (key == "train.epsilon")
    c.epsilon = parse_double(value, key);
  else if (key == "train.weight_decay")
    c.weight_decay = parse_double(value, key);
  else if (key == "train.seed")
    c.seed = parse_uint(value, key);
  else if (key == "train.max_steps")
    c.max_steps = parse_int(value, key);
  else if (key == "train.checkpoint_every")
    c.checkpoint_every = parse_int(value, key);
  else if (key == "train.validate_every")
    c.validate_every = parse_int(value, key);
  else
    throw ConfigError("unknown configuration key '" + key + "'");
}

KvList scene_kv(const SceneConfig& c) {
  return {
      {"scene.height", std::to_string(c.height)},
      {"scene.width", std::to_string(c.width)},
      {"scene.planes_min", std::to_string(c.planes_min)},
      {"scene.planes_max", std::to_string(c.planes_max)},
      {"scene.depth_min", format_double(c.depth_min)},
      {"scene.depth_max", format_double(c.depth_max)},
      {"scene.slope_max", format_double(c.slope_max)},
      {"scene.texture_noise", format_double(c.texture_noise)},
      {"scene.kappa", format_double(c.kappa)},
      {"scene.seed", std::to_string(c.seed)},
  };
}

void apply_scene_key(SceneConfig& c, const std::string& key, const std::string& value) {
  if (key == "scene.height")
    c.height = parse_int(value, key);
  else if (key == "scene.width")
    c.width = parse_int(value, key);
  else if (key == "scene.planes_min")
    c.planes_min = parse_int(value, key);
  else if (key == "scene.planes_max")
    c.planes_max = parse_int(value, key);
  else if (key == "scene.depth_min")
    c.depth_min = parse_double(value, key);
  else if (key == "scene.depth_max")
    c.depth_max = parse_double(value, key);
  else if (key == "scene.slope_max")
    c.slope_max = parse_double(value, key);
  else if (key == "scene.texture_noise")
    c.texture_noise = parse_double(value, key);
  else if (key == "scene.kappa")
    c.kappa = parse_double(value, key);
  else if (key == "scene.seed")
    c.seed = parse_uint(value, key);
  else
    throw ConfigError("unknown configuration key '" + key + "'");
}

KvList loss_kv(const LossWeights& w) {
  return {
      {"loss.alpha", format_double(w.alpha)},
      {"loss.beta", format_double(w.beta)},
      {"loss.gamma", format_double(w.gamma)},
  };
}

void apply_loss_key(LossWeights& w, const std::string& key, const std::string& value) {
  if (key == "loss.alpha")
    w.alpha = parse_double(value, key);
  else if (key == "loss.beta")
    w.beta = parse_double(value, key);
  else if (key == "loss.gamma")
    w.gamma = parse_double(value, key);
  else
    throw ConfigError("unknown configuration key '" + key + "'");
}

}  // namespace

void validate(const RunConfig& config) {
  validate(config.model);
  validate(config.train);
  validate(config.scene);
  validate(config.loss);
}

KvList run_kv(const RunConfig& config) {
  KvList kv = model_kv(config.model);
  for (auto& e : train_kv(config.train)) kv.push_back(std::move(e));
  for (auto& e : scene_kv(config.scene)) kv.push_back(std::move(e));
  for (auto& e : loss_kv(config.loss)) kv.push_back(std::move(e));
  return kv;
}

void apply_run_key(RunConfig& config, const std::string& key, const std::string& value) {
  if (key.rfind("model.", 0) == 0)
    apply_model_key(config.model, key, value);
  else if (key.rfind("train.", 0) == 0)
    apply_train_key(config.train, key, value);
  else if (key.rfind("scene.", 0) == 0)
    apply_scene_key(config.scene, key, value);
  else if (key.rfind("loss.", 0) == 0)
    apply_loss_key(config.loss, key, value);
  else
    throw ConfigError("unknown configuration key '" + key + "'");
}

KvList parse_kv_text(const std::string& text) {
  KvList kv;
  size_t line_start = 0;
  while (line_start <= text.size()) {
    size_t nl = text.find('\n', line_start);
    if (nl == std::string::npos) nl = text.size();
    std::string line = text.substr(line_start, nl - line_start);
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (!line.empty()) {
      const size_t eq = line.find('=');
      if (eq == std::string::npos)
        throw ParseError("expected 'key = value', got '" + line + "'",
                         static_cast<long long>(line_start));
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty())
        throw ParseError("missing key before '='", static_cast<long long>(line_start));
      kv.emplace_back(key, value);
    }
    if (nl == text.size()) break;
    line_start = nl + 1;
  }
  return kv;
}

KvList load_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_kv_text(text);
}

std::string render_kv(const KvList& kv) {
  std::string out;
  for (const auto& [k, v] : kv) {
    out += k;
    out += " = ";
    out += v;
    out += "\n";
  }
  return out;
}

void save_kv_file(const std::string& path, const KvList& kv) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << render_kv(kv);
  out.flush();
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace graphdepth
