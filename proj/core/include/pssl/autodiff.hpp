#pragma once

// Minimal reverse-mode differentiation over dense double matrices.
//
// A Tape records every operation applied to its Vars. backward(root) walks the
// record in reverse and fills gradient slots; leaves created with bind() also
// push their gradient into the bound parameter's grad slot.

#include "pssl/common.hpp"
#include "pssl/params.hpp"

#include <functional>
#include <vector>

namespace pssl::ad {

class Tape;

class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  // Value of a 1x1 Var.
  double item() const;

  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const;
  std::size_t id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Matrix& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  // Leaf whose gradient is kept and readable through grad().
  Var variable(Matrix value);
  // Leaf reading a parameter; backward() adds into tensor.grad when trainable.
  Var bind(Tensor& tensor);

  // Records an operation. fn is only kept when some input requires a gradient.
  Var record(Matrix value, std::initializer_list<Var> inputs, BackwardFn fn);

  void backward(const Var& root);
  // Zeros of the node's shape when the node was not reached.
  Matrix grad(const Var& v) const;

  const Matrix& value(const Var& v) const { return nodes_[v.id()].value; }
  bool requires_grad(const Var& v) const { return nodes_[v.id()].requires_grad; }
  void accumulate(const Var& v, const Matrix& g);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardFn backward;
    Tensor* param = nullptr;
  };

  Var push(Node node);
  void check_owned(const Var& v) const;

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// Elementwise and linear algebra.
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);

// Broadcasting: row is 1 x cols(x), col is rows(x) x 1.
Var add_row(const Var& x, const Var& row);
Var mul_row(const Var& x, const Var& row);
Var add_col(const Var& x, const Var& col);
Var mul_col(const Var& x, const Var& col);
// Repeats a 1 x d row n times.
Var tile_rows(const Var& row, Index n);

Var relu(const Var& a);
Var softplus(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var sqrt(const Var& a);
Var square(const Var& a);
Var reciprocal(const Var& a);

// Reductions.
Var sum(const Var& a);
Var mean(const Var& a);
Var col_sum(const Var& a);
Var col_mean(const Var& a);
Var row_sum(const Var& a);
Var row_mean(const Var& a);
// Diagonal of a square matrix as a 1 x d row.
Var diagonal(const Var& a);
// Row-wise log(sum(exp(.))) with a max-shift; n x m -> n x 1.
Var logsumexp_rows(const Var& a);

Var hconcat(const Var& a, const Var& b);

// Image layout: each row is one sample stored channel-major (C, H, W).
struct ImageShape {
  int channels = 3;
  int height = 32;
  int width = 32;
  Index size() const { return static_cast<Index>(channels) * height * width; }
};

// weight: out_channels x (in_channels * k * k); bias: 1 x out_channels.
Var conv2d(const Var& x, const Var& weight, const Var& bias, const ImageShape& in, int kernel, int stride,
           int padding);
ImageShape conv2d_output_shape(const ImageShape& in, int out_channels, int kernel, int stride, int padding);
// Mean over spatial positions; n x (C*H*W) -> n x C.
Var global_avg_pool(const Var& x, const ImageShape& in);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator-(const Var& a) { return scale(a, -1.0); }
inline Var operator*(double c, const Var& a) { return scale(a, c); }
inline Var operator*(const Var& a, double c) { return scale(a, c); }
inline Var operator+(const Var& a, double c) { return add_scalar(a, c); }
inline Var operator-(double c, const Var& a) { return add_scalar(scale(a, -1.0), c); }

}  // namespace pssl::ad
