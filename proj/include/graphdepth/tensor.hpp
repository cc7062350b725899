#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace graphdepth {

class Rng;

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

class Tape;

// Dense row-major FP64 tensor. Copies share storage; tape ops never mutate
// their inputs, so sharing is safe.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> values);
  static Tensor scalar(double v);
  static Tensor full(Shape shape, double v);

  const Shape& shape() const { return shape_; }
  int64_t numel() const { return data_ ? static_cast<int64_t>(data_->size()) : 0; }
  int64_t extent(int i) const;
  int ndim() const { return static_cast<int>(shape_.size()); }
  double* data();
  const double* data() const;
  const std::shared_ptr<std::vector<double>>& storage() const { return data_; }
  double item() const;

  bool tracked() const { return node_ >= 0; }
  int64_t node() const { return node_; }
  uint64_t tape_uid() const { return tape_uid_; }

 private:
  friend class Tape;
  Shape shape_;
  std::shared_ptr<std::vector<double>> data_;
  int64_t node_ = -1;
  uint64_t tape_uid_ = 0;
};

Tensor randn(Shape shape, Rng& rng, double stddev = 1.0);

// Records primitive applications in execution order and replays them in exact
// reverse order on backward. Gradients accumulate additively on fan-out.
// One backward pass per tape.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const std::vector<double>&)>;

  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  uint64_t uid() const { return uid_; }
  int64_t size() const { return static_cast<int64_t>(nodes_.size()); }

  // Registers t as a differentiable leaf.
  void watch(Tensor& t);

  // Registers an op result. The backward fn receives this node's accumulated
  // gradient and pushes contributions to the parents via accumulate().
  Tensor make_output(Shape shape, std::shared_ptr<std::vector<double>> values,
                     const char* op, BackwardFn fn);
  Tensor make_output(Shape shape, std::vector<double> values, const char* op, BackwardFn fn);

  // Adds g (length n) into the gradient of `node`; no-op when node < 0.
  void accumulate(int64_t node, const double* g, int64_t n, const char* producing_op);

  void backward(const Tensor& loss);

  const std::vector<double>& grad(const Tensor& t) const;

  // Node id of t on this tape; -1 when t is untracked or belongs to another
  // tape, in which case it acts as a constant here.
  int64_t node_of(const Tensor& t) const;

 private:
  struct Node {
    const char* op;
    BackwardFn fn;  // null for leaves
  };

  uint64_t uid_;
  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
  bool ran_backward_ = false;
};

}  // namespace graphdepth
