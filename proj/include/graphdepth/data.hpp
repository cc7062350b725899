#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "graphdepth/tensor.hpp"

namespace graphdepth {

struct Sample {
  int64_t height = 0;
  int64_t width = 0;
  std::vector<double> rgb;    // 3*H*W in [0,1], quantized to 8-bit levels
  std::vector<double> depth;  // H*W, positive where valid, FP32-exact values
  std::vector<double> mask;   // H*W of 0/1
  std::string meta;           // plain-text sidecar content
};

struct SceneConfig {
  int64_t height = 64;
  int64_t width = 64;
  int64_t planes_min = 3;
  int64_t planes_max = 6;
  double depth_min = 0.5;
  double depth_max = 9.5;
  double slope_max = 3.0;       // max |plane tilt| across the image, depth units
  double texture_noise = 0.02;  // rgb speckle amplitude
  double kappa = 0.0;           // stored-depth noise std = kappa * depth
  uint64_t seed = 1;
};

void validate(const SceneConfig& config);

// generate_scene plus the internals the calibration tests need.
struct SceneDetail {
  Sample sample;
  std::vector<int32_t> region;      // H*W region index per pixel
  std::vector<double> depth_clean;  // depth before the kappa noise
  int64_t n_regions = 0;
};

SceneDetail generate_scene_detail(const SceneConfig& config);
Sample generate_scene(const SceneConfig& config);

// PFM, grayscale, little-endian ("Pf\n<W> <H>\n-1.0\n" + bottom-up rows).
void write_pfm(const std::string& path, const float* data, int64_t H, int64_t W);
std::vector<float> read_pfm(const std::string& path, int64_t* H, int64_t* W);

// PPM binary ("P6\n<W> <H>\n255\n"), planes interleaved on disk.
void write_ppm(const std::string& path, const double* rgb, int64_t H, int64_t W);
std::vector<double> read_ppm(const std::string& path, int64_t* H, int64_t* W);

// <dir>/<id>.ppm, <id>.pfm, <id>.mask.pfm, <id>.meta
void write_sample(const std::string& dir, const std::string& id, const Sample& sample);
Sample read_sample(const std::string& dir, const std::string& id);

struct Dataset {
  std::vector<Sample> samples;
  std::vector<std::string> ids;  // parallel to samples
};

// Reads every sample under <root>/<split>, ordered by id.
Dataset load_dataset(const std::string& root, const std::string& split);
bool split_exists(const std::string& root, const std::string& split);

// One epoch of batches: deterministic shuffle from (seed, epoch), final
// partial batch dropped.
std::vector<std::vector<int64_t>> batch_iter(int64_t n_samples, int64_t batch_size,
                                             uint64_t seed, int64_t epoch);

// Stacks samples into Bx3xHxW rgb and BxHxW depth/mask tensors.
void make_batch(const Dataset& data, const std::vector<int64_t>& indices, Tensor* rgb,
                Tensor* depth, Tensor* mask);

}  // namespace graphdepth
