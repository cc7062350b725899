#include "graphdepth/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "graphdepth/errors.hpp"
#include "graphdepth/rng.hpp"

namespace fs = std::filesystem;

namespace graphdepth {

void validate(const SceneConfig& c) {
  if (c.height < 32 || c.width < 32 || c.height % 32 != 0 || c.width % 32 != 0)
    throw ConfigError("scene extents must be positive multiples of 32, got " +
                      std::to_string(c.height) + "x" + std::to_string(c.width));
  if (c.planes_min < 1 || c.planes_max < c.planes_min)
    throw ConfigError("plane count range must satisfy 1 <= min <= max");
  if (!(c.depth_min > 0.0) || !(c.depth_max > c.depth_min))
    throw ConfigError("depth range must satisfy 0 < min < max");
  if (!(c.slope_max >= 0.0)) throw ConfigError("slope_max must be non-negative");
  if (!(c.texture_noise >= 0.0)) throw ConfigError("texture_noise must be non-negative");
  if (!(c.kappa >= 0.0)) throw ConfigError("kappa must be non-negative");
}

namespace {

std::string fmt(double value) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

double quantize8(double v) {
  v = std::min(std::max(v, 0.0), 1.0);
  return std::round(v * 255.0) / 255.0;
}

}  // namespace

SceneDetail generate_scene_detail(const SceneConfig& config) {
  validate(config);
  const int64_t H = config.height, W = config.width;
  const int64_t n_pixels = H * W;
  Rng rng(config.seed);

  const int64_t n_regions =
      config.planes_min + rng.index(config.planes_max - config.planes_min + 1);

  struct Region {
    double site_r, site_c;
    double a, b, base;       // depth plane over normalized coords
    double albedo[3];
  };
  std::vector<Region> regions(n_regions);
  for (auto& reg : regions) {
    reg.site_r = rng.uniform(0.0, static_cast<double>(H - 1));
    reg.site_c = rng.uniform(0.0, static_cast<double>(W - 1));
  }
  for (auto& reg : regions) {
    reg.a = rng.uniform(-config.slope_max, config.slope_max);
    reg.b = rng.uniform(-config.slope_max, config.slope_max);
    reg.base = rng.uniform(config.depth_min, config.depth_max);
    for (double& ch : reg.albedo) ch = rng.uniform(0.75, 1.0);
  }

  SceneDetail detail;
  detail.n_regions = n_regions;
  detail.region.resize(n_pixels);
  detail.depth_clean.resize(n_pixels);
  Sample& s = detail.sample;
  s.height = H;
  s.width = W;
  s.rgb.resize(3 * n_pixels);
  s.depth.resize(n_pixels);
  s.mask.assign(n_pixels, 1.0);

  for (int64_t r = 0; r < H; ++r) {
    for (int64_t c = 0; c < W; ++c) {
      const int64_t i = r * W + c;
      int32_t best = 0;
      double best_d = 0.0;
      for (int64_t j = 0; j < n_regions; ++j) {
        const double dr = static_cast<double>(r) - regions[j].site_r;
        const double dc = static_cast<double>(c) - regions[j].site_c;
        const double d = dr * dr + dc * dc;
        if (j == 0 || d < best_d) {
          best = static_cast<int32_t>(j);
          best_d = d;
        }
      }
      detail.region[i] = best;

      const Region& reg = regions[best];
      const double x = static_cast<double>(c) / static_cast<double>(W - 1);
      const double y = static_cast<double>(r) / static_cast<double>(H - 1);
      double z = reg.a * x + reg.b * y + reg.base;
      z = std::min(std::max(z, config.depth_min), config.depth_max);
      detail.depth_clean[i] = z;

      const double shade = 1.0 - 0.85 * (z - config.depth_min) / depth_range;
      for (int ch = 0; ch < 3; ++ch)
        s.rgb[ch * n_pixels + i] = reg.albedo[ch] * shade;
    }
  }

  for (int64_t i = 0; i < 3 * n_pixels; ++i)
    s.rgb[i] = quantize8(s.rgb[i] + rng.uniform(-config.texture_noise, config.texture_noise));

  // Additive heteroscedastic noise on the stored depth; the clean value stays
  // in depth_clean. Quantize to FP32 so disk and memory agree exactly.
  for (int64_t i = 0; i < n_pixels; ++i) {
    double z = detail.depth_clean[i];
    if (config.kappa > 0.0) z += config.kappa * detail.depth_clean[i] * rng.normal();
    z = std::max(z, 1e-3);
    s.depth[i] = static_cast<double>(static_cast<float>(z));
  }

  s.meta = "seed = " + std::to_string(config.seed) + "\n" +
           "height = " + std::to_string(H) + "\n" +
           "width = " + std::to_string(W) + "\n" +
           "planes_min = " + std::to_string(config.planes_min) + "\n" +
           "planes_max = " + std::to_string(config.planes_max) + "\n" +
           "depth_min = " + fmt(config.depth_min) + "\n" +
           "depth_max = " + fmt(config.depth_max) + "\n" +
           "slope_max = " + fmt(config.slope_max) + "\n" +
           "texture_noise = " + fmt(config.texture_noise) + "\n" +
           "kappa = " + fmt(config.kappa) + "\n" +
           "n_regions = " + std::to_string(n_regions) + "\n";
  return detail;
}

Sample generate_scene(const SceneConfig& config) {
  return generate_scene_detail(config).sample;
}

namespace {

// Whole-file reader plus token scanning with byte offsets for error reports.
std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'", 0);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return text;
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

// Skips whitespace and '#' comment lines (netpbm-style headers).
void skip_separators(const std::string& text, size_t& pos) {
  while (pos < text.size()) {
    if (is_space(text[pos])) {
      ++pos;
    } else if (text[pos] == '#') {
      while (pos < text.size() && text[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
}

std::string next_token(const std::string& text, size_t& pos, const std::string& path) {
  skip_separators(text, pos);
  const size_t start = pos;
  while (pos < text.size() && !is_space(text[pos]) && text[pos] != '#') ++pos;
  if (pos == start)
    throw ParseError("unexpected end of header in '" + path + "'",
                     static_cast<long long>(start));
  return text.substr(start, pos - start);
}

int64_t header_int(const std::string& text, size_t& pos, const std::string& path) {
  const size_t at = pos;
  const std::string tok = next_token(text, pos, path);
  int64_t v = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || v < 1)
    throw ParseError("bad dimension '" + tok + "' in '" + path + "'",
                     static_cast<long long>(at));
  return v;
}

// After the last header token exactly one whitespace byte precedes the payload.
void expect_single_space(const std::string& text, size_t& pos, const std::string& path) {
  if (pos >= text.size() || !is_space(text[pos]))
    throw ParseError("missing separator before payload in '" + path + "'",
                     static_cast<long long>(pos));
  ++pos;
}

static_assert(sizeof(float) == 4);

}  // namespace

void write_pfm(const std::string& path, const float* data, int64_t H, int64_t W) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << "Pf\n" << W << " " << H << "\n-1.0\n";
  for (int64_t r = H - 1; r >= 0; --r)
    out.write(reinterpret_cast<const char*>(data + r * W),
              W * static_cast<int64_t>(sizeof(float)));
  out.flush();
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

std::vector<float> read_pfm(const std::string& path, int64_t* H, int64_t* W) {
  const std::string text = slurp(path);
  size_t pos = 0;
  const std::string magic = next_token(text, pos, path);
  if (magic == "PF")
    throw ParseError("color PFM not supported in '" + path + "'", 0);
  if (magic != "Pf") throw ParseError("not a PFM file: '" + path + "'", 0);
  const int64_t width = header_int(text, pos, path);
  const int64_t height = header_int(text, pos, path);
  const size_t scale_at = pos;
  const std::string scale_tok = next_token(text, pos, path);
  double scale = 0.0;
  auto [ptr, ec] = std::from_chars(scale_tok.data(), scale_tok.data() + scale_tok.size(),
                                   scale);
  if (ec != std::errc() || ptr != scale_tok.data() + scale_tok.size() || scale == 0.0)
    throw ParseError("bad scale '" + scale_tok + "' in '" + path + "'",
                     static_cast<long long>(scale_at));
  if (scale > 0.0)
    throw ParseError("big-endian PFM not supported in '" + path + "'",
                     static_cast<long long>(scale_at));
  expect_single_space(text, pos, path);

  const int64_t count = height * width;
  if (text.size() - pos < static_cast<size_t>(count) * sizeof(float))
    throw ParseError("truncated PFM payload in '" + path + "'",
                     static_cast<long long>(text.size()));
  std::vector<float> data(count);
  for (int64_t r = height - 1; r >= 0; --r) {
    std::memcpy(data.data() + r * width, text.data() + pos, width * sizeof(float));
    pos += width * sizeof(float);
  }
  if (H) *H = height;
  if (W) *W = width;
  return data;
}

void write_ppm(const std::string& path, const double* rgb, int64_t H, int64_t W) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << "P6\n" << W << " " << H << "\n255\n";
  const int64_t n = H * W;
  std::vector<unsigned char> row(3 * W);
  for (int64_t r = 0; r < H; ++r) {
    for (int64_t c = 0; c < W; ++c)
      for (int ch = 0; ch < 3; ++ch) {
        const double v = std::min(std::max(rgb[ch * n + r * W + c], 0.0), 1.0);
        row[c * 3 + ch] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<int64_t>(row.size()));
  }
  out.flush();
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

std::vector<double> read_ppm(const std::string& path, int64_t* H, int64_t* W) {
  const std::string text = slurp(path);
  size_t pos = 0;
  if (next_token(text, pos, path) != "P6")
    throw ParseError("not a binary PPM file: '" + path + "'", 0);
  const int64_t width = header_int(text, pos, path);
  const int64_t height = header_int(text, pos, path);
  const size_t maxval_at = pos;
  const int64_t maxval = header_int(text, pos, path);
  if (maxval != 255)
    throw ParseError("unsupported PPM maxval " + std::to_string(maxval) + " in '" + path +
                         "'",
                     static_cast<long long>(maxval_at));
  expect_single_space(text, pos, path);

  const int64_t n = height * width;
  if (text.size() - pos < static_cast<size_t>(3 * n))
    throw ParseError("truncated PPM payload in '" + path + "'",
                     static_cast<long long>(text.size()));
  std::vector<double> rgb(3 * n);
  for (int64_t i = 0; i < n; ++i)
    for (int ch = 0; ch < 3; ++ch)
      rgb[ch * n + i] =
          static_cast<double>(static_cast<unsigned char>(text[pos + i * 3 + ch])) / 255.0;
  if (H) *H = height;
  if (W) *W = width;
  return rgb;
}

void write_sample(const std::string& dir, const std::string& id, const Sample& sample) {
  fs::create_directories(dir);
  const std::string base = dir + "/" + id;
  write_ppm(base + ".ppm", sample.rgb.data(), sample.height, sample.width);

  const int64_t n = sample.height * sample.width;
  std::vector<float> f(n);
  for (int64_t i = 0; i < n; ++i) f[i] = static_cast<float>(sample.depth[i]);
  write_pfm(base + ".pfm", f.data(), sample.height, sample.width);
  for (int64_t i = 0; i < n; ++i) f[i] = static_cast<float>(sample.mask[i]);
  write_pfm(base + ".mask.pfm", f.data(), sample.height, sample.width);

  std::ofstream meta(base + ".meta", std::ios::trunc);
  if (!meta) throw std::runtime_error("cannot write '" + base + ".meta'");
  meta << sample.meta;
  meta.flush();
  if (!meta) throw std::runtime_error("write failed for '" + base + ".meta'");
}

Sample read_sample(const std::string& dir, const std::string& id) {
  const std::string base = dir + "/" + id;
  Sample s;
  s.rgb = read_ppm(base + ".ppm", &s.height, &s.width);

  int64_t h = 0, w = 0;
  std::vector<float> depth = read_pfm(base + ".pfm", &h, &w);
  if (h != s.height || w != s.width)
    throw ParseError("depth extents disagree with rgb for sample '" + base + "'", 0);
  s.depth.assign(depth.begin(), depth.end());

  std::vector<float> mask = read_pfm(base + ".mask.pfm", &h, &w);
  if (h != s.height || w != s.width)
    throw ParseError("mask extents disagree with rgb for sample '" + base + "'", 0);
  s.mask.assign(mask.begin(), mask.end());

  std::ifstream meta(base + ".meta", std::ios::binary);
  if (meta)
    s.meta.assign((std::istreambuf_iterator<char>(meta)), std::istreambuf_iterator<char>());
  return s;
}

bool split_exists(const std::string& root, const std::string& split) {
  std::error_code ec;
  return fs::is_directory(root + "/" + split, ec);
}

Dataset load_dataset(const std::string& root, const std::string& split) {
  const std::string dir = root + "/" + split;
  if (!split_exists(root, split))
    throw ConfigError("dataset split directory '" + dir + "' does not exist");
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const fs::path p = entry.path();
    if (p.extension() == ".ppm") ids.push_back(p.stem().string());
  }
  std::sort(ids.begin(), ids.end());
  Dataset out;
  out.samples.reserve(ids.size());
  for (const auto& id : ids) out.samples.push_back(read_sample(dir, id));
  out.ids = std::move(ids);
  return out;
}

std::vector<std::vector<int64_t>> batch_iter(int64_t n_samples, int64_t batch_size,
                                             uint64_t seed, int64_t epoch) {
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (n_samples < 1) throw UsageError("cannot iterate over an empty dataset");
  std::vector<int64_t> order(n_samples);
  for (int64_t i = 0; i < n_samples; ++i) order[i] = i;
  Rng rng(seed ^ (0x9e3779b97f4a7c15ULL * static_cast<uint64_t>(epoch + 1)));
  rng.shuffle(order.begin(), order.end());

  std::vector<std::vector<int64_t>> batches;
  for (int64_t start = 0; start + batch_size <= n_samples; start += batch_size)
    batches.emplace_back(order.begin() + start, order.begin() + start + batch_size);
  return batches;
}

void make_batch(const Dataset& data, const std::vector<int64_t>& indices, Tensor* rgb,
                Tensor* depth, Tensor* mask) {
  if (indices.empty()) throw UsageError("make_batch: empty index list");
  for (int64_t idx : indices)
    if (idx < 0 || idx >= static_cast<int64_t>(data.samples.size()))
      throw UsageError("make_batch: sample index " + std::to_string(idx) +
                       " out of range");
  const int64_t B = static_cast<int64_t>(indices.size());
  const int64_t H = data.samples[indices[0]].height;
  const int64_t W = data.samples[indices[0]].width;
  const int64_t n = H * W;
  Tensor r({B, 3, H, W});
  Tensor d({B, H, W});
  Tensor m({B, H, W});
  for (int64_t b = 0; b < B; ++b) {
    const Sample& s = data.samples[indices[b]];
    if (s.height != H || s.width != W)
      throw UsageError("make_batch: samples have mixed extents");
    std::copy(s.rgb.begin(), s.rgb.end(), r.data() + b * 3 * n);
    std::copy(s.depth.begin(), s.depth.end(), d.data() + b * n);
    std::copy(s.mask.begin(), s.mask.end(), m.data() + b * n);
  }
  if (rgb) *rgb = std::move(r);
  if (depth) *depth = std::move(d);
  if (mask) *mask = std::move(m);
}

}  // namespace graphdepth
