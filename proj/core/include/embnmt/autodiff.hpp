#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "embnmt/vocab.hpp"

namespace embnmt::ad {

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
  bool operator==(const Shape&) const = default;
};

std::string to_string(Shape s);

// Dense row-major matrix of doubles. Scalars are 1x1.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor(1, 1, v); }

  Shape shape() const { return {rows_, cols_}; }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const double& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  // Value of a 1x1 tensor.
  double item() const;
  bool all_finite() const;

  bool operator==(const Tensor&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

using ParamId = std::size_t;
using GradientMap = std::unordered_map<ParamId, Tensor>;

class Tape;

// Handle to a node recorded on a Tape.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  Shape shape() const { return value().shape(); }
  Tape& tape() const { return *tape_; }
  std::size_t index() const { return index_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}

  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

struct TapeOptions {
  // Record local-gradient closures. Off for pure inference.
  bool record = true;
  // Fault on any NaN/Inf produced by a primitive.
  bool checked = true;
};

// Append-only record of primitive applications. Every node's inputs precede it.
// backward() may run once per recording.
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Tensor& out_grad)>;

  explicit Tape(TapeOptions options = {});
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Leaf whose gradient is reachable through grad() after backward().
  Var variable(Tensor value);
  // Leaf referring to externally owned storage that must outlive the tape.
  // Its gradient is reported under `id` by backward().
  Var parameter(ParamId id, const Tensor& value);

  // Used by primitives. The closure is kept only when recording and when some
  // input needs a gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, Backward backward);
  Var record(Tensor value, std::span<const Var> inputs, Backward backward);

  // Gradients for every parameter leaf on this tape; unreached leaves get zeros.
  GradientMap backward(Var loss);

  // Gradient of a node after backward(); zeros when unreached.
  Tensor grad(Var v) const;

  void accumulate(std::size_t index, const Tensor& g);
  // Adds into the node's gradient buffer in place, allocating it on first use.
  Tensor& grad_buffer(std::size_t index);

  const Tensor& value(std::size_t index) const;
  bool requires_grad(std::size_t index) const { return nodes_[index].requires_grad; }
  bool recording() const { return options_.record; }
  bool checked() const { return options_.checked; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor owned;
    const Tensor* external = nullptr;
    Tensor grad;
    Backward backward;
    bool is_param = false;
    bool requires_grad = false;
    ParamId param_id = 0;
  };

  TapeOptions options_;
  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// Primitive set. Binary elementwise ops broadcast 2-D operands whose extents are
// equal or 1 along each axis.
Var matmul(Var a, Var b, bool transpose_b = false);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var tanh(Var a);
Var sigmoid(Var a);
// Column-wise concatenation of operands with equal row counts.
Var concat(std::span<const Var> parts);
Var concat(std::initializer_list<Var> parts);
// Columns [begin, end).
Var slice(Var a, std::size_t begin, std::size_t end);
Var softmax(Var a);
// Natural log with inputs clamped from below at `floor`.
Var log(Var a, double floor = 0.0);
Var sum(Var a);
// Sum along each row, giving a column vector.
Var row_sum(Var a);
Var mean(Var a);
// Inverted dropout with a fixed keep-mask of 0/1 entries.
Var dropout(Var a, const Tensor& mask, double p);
// Rows of `table` selected by ids.
Var embedding_lookup(Var table, std::span<const WordId> ids);
Var scale(Var a, double s);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
// `f` must build a scalar on the tape of its argument.
double finite_difference_check(const std::function<Var(Var)>& f, const Tensor& point, double epsilon);

}  // namespace embnmt::ad
