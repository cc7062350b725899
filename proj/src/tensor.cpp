#include "graphdepth/tensor.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>

#include "graphdepth/errors.hpp"
#include "graphdepth/rng.hpp"

namespace graphdepth {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t e : s) {
    if (e < 0) throw ConfigError("negative extent in shape " + shape_str(s));
    n *= e;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape)
    : shape_(std::move(shape)),
      data_(std::make_shared<std::vector<double>>(shape_numel(shape_), 0.0)) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)) {
  if (shape_numel(shape_) != static_cast<int64_t>(values.size()))
    throw ConfigError("shape " + shape_str(shape_) + " does not match " +
                      std::to_string(values.size()) + " values");
  data_ = std::make_shared<std::vector<double>>(std::move(values));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::full(Shape shape, double v) {
  Tensor t(std::move(shape));
  std::fill(t.data_->begin(), t.data_->end(), v);
  return t;
}

int64_t Tensor::extent(int i) const {
  if (i < 0 || i >= ndim())
    throw ConfigError("extent index " + std::to_string(i) + " out of range for " +
                      shape_str(shape_));
  return shape_[i];
}

double* Tensor::data() {
  if (!data_) throw ConfigError("empty tensor has no data");
  return data_->data();
}

const double* Tensor::data() const {
  if (!data_) throw ConfigError("empty tensor has no data");
  return data_->data();
}

double Tensor::item() const {
  if (numel() != 1) throw ConfigError("item() on tensor of shape " + shape_str(shape_));
  return (*data_)[0];
}

Tensor randn(Shape shape, Rng& rng, double stddev) {
  Tensor t(std::move(shape));
  double* p = t.data();
  for (int64_t i = 0; i < t.numel(); ++i) p[i] = stddev * rng.normal();
  return t;
}

namespace {
std::atomic<uint64_t> g_tape_uid{1};
}

Tape::Tape() : uid_(g_tape_uid.fetch_add(1, std::memory_order_relaxed)) {}

void Tape::watch(Tensor& t) {
  if (!t.data_) throw ConfigError("cannot watch an empty tensor");
  if (t.node_ >= 0 && t.tape_uid_ == uid_)
    throw std::logic_error("tensor is already on this tape");
  t.node_ = static_cast<int64_t>(nodes_.size());
  t.tape_uid_ = uid_;
  nodes_.push_back({"leaf", nullptr});
  grads_.emplace_back(t.numel(), 0.0);
}

Tensor Tape::make_output(Shape shape, std::shared_ptr<std::vector<double>> values,
                         const char* op, BackwardFn fn) {
  if (!values) throw std::logic_error("make_output: null storage");
  const int64_t id = static_cast<int64_t>(nodes_.size());
  if (shape_numel(shape) != static_cast<int64_t>(values->size()))
    throw ConfigError(std::string(op) + ": shape " + shape_str(shape) +
                      " does not match value count " + std::to_string(values->size()));
  for (double v : *values)
    if (!std::isfinite(v))
      throw NumericError(std::string(op) + " produced a non-finite value (tensor id " +
                         std::to_string(id) + ")");
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(values);
  t.node_ = id;
  t.tape_uid_ = uid_;
  nodes_.push_back({op, std::move(fn)});
  grads_.emplace_back(t.numel(), 0.0);
  return t;
}

Tensor Tape::make_output(Shape shape, std::vector<double> values, const char* op,
                         BackwardFn fn) {
  return make_output(std::move(shape),
                     std::make_shared<std::vector<double>>(std::move(values)), op,
                     std::move(fn));
}

void Tape::accumulate(int64_t node, const double* g, int64_t n, const char* producing_op) {
  if (node < 0) return;
  if (node >= static_cast<int64_t>(grads_.size()))
    throw std::logic_error("accumulate: node out of range");
  std::vector<double>& buf = grads_[node];
  if (static_cast<int64_t>(buf.size()) != n)
    throw std::logic_error(std::string("accumulate: size mismatch from ") + producing_op);
  for (int64_t i = 0; i < n; ++i) {
    if (!std::isfinite(g[i]))
      throw NumericError(std::string(producing_op) + " produced a non-finite gradient");
    buf[i] += g[i];
  }
}

void Tape::backward(const Tensor& loss) {
  const int64_t root = node_of(loss);
  if (root < 0) throw UsageError("backward: loss is not on this tape");
  if (loss.numel() != 1)
    throw UsageError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  if (ran_backward_) throw UsageError("backward already ran on this tape");
  ran_backward_ = true;
  grads_[root][0] = 1.0;
  for (int64_t i = root; i >= 0; --i)
    if (nodes_[i].fn) nodes_[i].fn(*this, grads_[i]);
}

const std::vector<double>& Tape::grad(const Tensor& t) const {
  const int64_t id = node_of(t);
  if (id < 0) throw UsageError("grad requested for a tensor not on this tape");
  return grads_[id];
}

int64_t Tape::node_of(const Tensor& t) const {
  if (t.node_ < 0 || t.tape_uid_ != uid_) return -1;
  return t.node_;
}

}  // namespace graphdepth
