#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "graphdepth/data.hpp"
#include "graphdepth/model.hpp"
#include "graphdepth/objective.hpp"
#include "graphdepth/trainer.hpp"

namespace graphdepth {

using KvList = std::vector<std::pair<std::string, std::string>>;

// Shortest decimal text that round-trips the exact double.
std::string format_double(double value);

// context names the key being parsed; failures throw ConfigError.
double parse_double(const std::string& text, const std::string& context);
int64_t parse_int(const std::string& text, const std::string& context);
bool parse_bool(const std::string& text, const std::string& context);

// Keys are prefixed "model."; apply_model_key accepts the same keys and
// throws ConfigError on unknown names or bad values.
KvList model_kv(const ModelConfig& config);
void apply_model_key(ModelConfig& config, const std::string& key, const std::string& value);

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  SceneConfig scene;
  LossWeights loss;
};

void validate(const RunConfig& config);

// Full flattened view: model.*, train.*, scene.*, loss.* keys.
KvList run_kv(const RunConfig& config);
void apply_run_key(RunConfig& config, const std::string& key, const std::string& value);

// "key = value" lines; '#' starts a comment; blank lines are skipped.
// Malformed lines throw ParseError carrying the byte offset of the line.
KvList parse_kv_text(const std::string& text);
KvList load_kv_file(const std::string& path);
std::string render_kv(const KvList& kv);
void save_kv_file(const std::string& path, const KvList& kv);

}  // namespace graphdepth
