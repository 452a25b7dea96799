#include "pssl/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace pssl::ad {

const Matrix& Var::value() const { return tape().value(*this); }

double Var::item() const {
  const Matrix& v = value();
  require(v.rows() == 1 && v.cols() == 1, "Var::item on a non-scalar value");
  return v(0, 0);
}

Tape& Var::tape() const {
  require(tape_ != nullptr, "use of an unrecorded Var");
  return *tape_;
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::check_owned(const Var& v) const {
  require(v.tape_ == this && v.id_ < nodes_.size(), "Var belongs to a different tape");
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::variable(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::bind(Tensor& tensor) {
  Node n;
  n.value = tensor.value;
  n.requires_grad = tensor.trainable;
  n.param = &tensor;
  return push(std::move(n));
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  for (const Var& in : inputs) {
    check_owned(in);
    n.requires_grad = n.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  return push(std::move(n));
}

void Tape::accumulate(const Var& v, const Matrix& g) {
  Node& n = nodes_[v.id()];
  if (!n.requires_grad) return;
  if (!n.has_grad) {
    n.grad = g;
    n.has_grad = true;
  } else {
    n.grad += g;
  }
}

void Tape::backward(const Var& root) {
  require(root.valid(), "backward: no forward evaluation was recorded");
  check_owned(root);
  require(!backward_done_, "backward: tape already consumed");
  const Node& r = nodes_[root.id()];
  require(r.value.rows() == 1 && r.value.cols() == 1, "backward: root must be a scalar");
  backward_done_ = true;
  if (!r.requires_grad) return;
  accumulate(root, Matrix::Ones(1, 1));
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad) continue;
    if (n.backward) n.backward(*this, n.grad);
    if (n.param != nullptr && n.param->trainable) n.param->grad += n.grad;
  }
}

Matrix Tape::grad(const Var& v) const {
  check_owned(v);
  const Node& n = nodes_[v.id()];
  if (n.has_grad) return n.grad;
  return Matrix::Zero(n.value.rows(), n.value.cols());
}

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  require(a.rows() == b.rows() && a.cols() == b.cols(),
          std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
              " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
}

void require_same_tape(const Var& a, const Var& b) {
  require(&a.tape() == &b.tape(), "operands recorded on different tapes");
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require(a.cols() == b.rows(), "matmul: inner dimension mismatch");
  return a.tape().record(a.value() * b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, g * t.value(b).transpose());
    if (t.requires_grad(b)) t.accumulate(b, t.value(a).transpose() * g);
  });
}

Var transpose(const Var& a) {
  return a.tape().record(a.value().transpose(), {a},
                         [a](Tape& t, const Matrix& g) { t.accumulate(a, g.transpose()); });
}

Var add(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "add");
  return a.tape().record(a.value() + b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "sub");
  return a.tape().record(a.value() - b.value(), {a, b}, [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    if (t.requires_grad(b)) t.accumulate(b, -g);
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "mul");
  return a.tape().record(a.value().cwiseProduct(b.value()), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate(a, g.cwiseProduct(t.value(b)));
    if (t.requires_grad(b)) t.accumulate(b, g.cwiseProduct(t.value(a)));
  });
}

Var div(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "div");
  return a.tape().record(a.value().cwiseQuotient(b.value()), {a, b}, [a, b](Tape& t, const Matrix& g) {
    const Matrix& bv = t.value(b);
    if (t.requires_grad(a)) t.accumulate(a, g.cwiseQuotient(bv));
    if (t.requires_grad(b)) {
      t.accumulate(b, -g.cwiseProduct(t.value(a)).cwiseQuotient(bv.cwiseProduct(bv)));
    }
  });
}

Var scale(const Var& a, double c) {
  return a.tape().record(a.value() * c, {a}, [a, c](Tape& t, const Matrix& g) { t.accumulate(a, g * c); });
}

Var add_scalar(const Var& a, double c) {
  return a.tape().record(a.value().array() + c, {a}, [a](Tape& t, const Matrix& g) { t.accumulate(a, g); });
}

Var add_row(const Var& x, const Var& row) {
  require_same_tape(x, row);
  require(row.rows() == 1 && row.cols() == x.cols(), "add_row: row must be 1 x cols");
  Matrix out = x.value().rowwise() + row.value().row(0);
  return x.tape().record(std::move(out), {x, row}, [x, row](Tape& t, const Matrix& g) {
    t.accumulate(x, g);
    if (t.requires_grad(row)) t.accumulate(row, g.colwise().sum());
  });
}

Var mul_row(const Var& x, const Var& row) {
  require_same_tape(x, row);
  require(row.rows() == 1 && row.cols() == x.cols(), "mul_row: row must be 1 x cols");
  Matrix out = x.value().array().rowwise() * row.value().row(0).array();
  return x.tape().record(std::move(out), {x, row}, [x, row](Tape& t, const Matrix& g) {
    if (t.requires_grad(x)) {
      t.accumulate(x, (g.array().rowwise() * t.value(row).row(0).array()).matrix());
    }
    if (t.requires_grad(row)) t.accumulate(row, g.cwiseProduct(t.value(x)).colwise().sum());
  });
}

Var add_col(const Var& x, const Var& col) {
  require_same_tape(x, col);
  require(col.cols() == 1 && col.rows() == x.rows(), "add_col: col must be rows x 1");
  Matrix out = x.value().colwise() + col.value().col(0);
  return x.tape().record(std::move(out), {x, col}, [x, col](Tape& t, const Matrix& g) {
    t.accumulate(x, g);
    if (t.requires_grad(col)) t.accumulate(col, g.rowwise().sum());
  });
}

Var mul_col(const Var& x, const Var& col) {
  require_same_tape(x, col);
  require(col.cols() == 1 && col.rows() == x.rows(), "mul_col: col must be rows x 1");
  Matrix out = x.value().array().colwise() * col.value().col(0).array();
  return x.tape().record(std::move(out), {x, col}, [x, col](Tape& t, const Matrix& g) {
    if (t.requires_grad(x)) {
      t.accumulate(x, (g.array().colwise() * t.value(col).col(0).array()).matrix());
    }
    if (t.requires_grad(col)) t.accumulate(col, g.cwiseProduct(t.value(x)).rowwise().sum());
  });
}

Var tile_rows(const Var& row, Index n) {
  require(row.rows() == 1, "tile_rows: expected a 1 x d row");
  Matrix out = row.value().replicate(n, 1);
  return row.tape().record(std::move(out), {row},
                           [row](Tape& t, const Matrix& g) { t.accumulate(row, g.colwise().sum()); });
}

Var relu(const Var& a) {
  return a.tape().record(a.value().cwiseMax(0.0), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, (t.value(a).array() > 0.0).select(g, 0.0).matrix());
  });
}

namespace {

double softplus_value(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var softplus(const Var& a) {
  return a.tape().record(a.value().unaryExpr(&softplus_value), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, g.cwiseProduct(t.value(a).unaryExpr(&sigmoid)));
  });
}

Var exp(const Var& a) {
  Matrix out = a.value().array().exp();
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, g.cwiseProduct(t.value(a).array().exp().matrix()));
  });
}

Var log(const Var& a) {
  Matrix out = a.value().array().log();
  return a.tape().record(std::move(out), {a},
                         [a](Tape& t, const Matrix& g) { t.accumulate(a, g.cwiseQuotient(t.value(a))); });
}

Var sqrt(const Var& a) {
  Matrix out = a.value().array().sqrt();
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, (g.array() / (2.0 * t.value(a).array().sqrt())).matrix());
  });
}

Var square(const Var& a) {
  return a.tape().record(a.value().array().square(), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, 2.0 * g.cwiseProduct(t.value(a)));
  });
}

Var reciprocal(const Var& a) {
  return a.tape().record(a.value().array().inverse(), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, (-g.array() / t.value(a).array().square()).matrix());
  });
}

Var sum(const Var& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    const Matrix& v = t.value(a);
    t.accumulate(a, Matrix::Constant(v.rows(), v.cols(), g(0, 0)));
  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().size());
  require(n > 0, "mean of an empty matrix");
  return scale(sum(a), 1.0 / n);
}

Var col_sum(const Var& a) {
  Matrix out = a.value().colwise().sum();
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, g.replicate(t.value(a).rows(), 1));
  });
}

Var col_mean(const Var& a) {
  require(a.rows() > 0, "col_mean of an empty matrix");
  return scale(col_sum(a), 1.0 / static_cast<double>(a.rows()));
}

Var row_sum(const Var& a) {
  Matrix out = a.value().rowwise().sum();
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, g.replicate(1, t.value(a).cols()));
  });
}

Var row_mean(const Var& a) {
  require(a.cols() > 0, "row_mean of an empty matrix");
  return scale(row_sum(a), 1.0 / static_cast<double>(a.cols()));
}

Var diagonal(const Var& a) {
  require(a.rows() == a.cols(), "diagonal: matrix must be square");
  Matrix out = a.value().diagonal().transpose();
  return a.tape().record(std::move(out), {a}, [a](Tape& t, const Matrix& g) {
    const Index d = t.value(a).rows();
    Matrix full = Matrix::Zero(d, d);
    full.diagonal() = g.row(0).transpose();
    t.accumulate(a, full);
  });
}

Var logsumexp_rows(const Var& a) {
  const Matrix& v = a.value();
  require(v.cols() > 0, "logsumexp_rows: no columns");
  Vector shift = v.rowwise().maxCoeff();
  Matrix out(v.rows(), 1);
  for (Index i = 0; i < v.rows(); ++i) {
    out(i, 0) = shift(i) + std::log((v.row(i).array() - shift(i)).exp().sum());
  }
  return a.tape().record(out, {a}, [a, out](Tape& t, const Matrix& g) {
    const Matrix& x = t.value(a);
    Matrix soft = (x.colwise() - out.col(0)).array().exp();
    t.accumulate(a, (soft.array().colwise() * g.col(0).array()).matrix());
  });
}

Var hconcat(const Var& a, const Var& b) {
  require_same_tape(a, b);
  require(a.rows() == b.rows(), "hconcat: row mismatch");
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a.value(), b.value();
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, const Matrix& g) {
    const Index ca = t.value(a).cols();
    if (t.requires_grad(a)) t.accumulate(a, g.leftCols(ca));
    if (t.requires_grad(b)) t.accumulate(b, g.rightCols(g.cols() - ca));
  });
}

ImageShape conv2d_output_shape(const ImageShape& in, int out_channels, int kernel, int stride, int padding) {
  require(kernel > 0 && stride > 0 && padding >= 0, "conv2d: invalid geometry");
  ImageShape out;
  out.channels = out_channels;
  out.height = (in.height + 2 * padding - kernel) / stride + 1;
  out.width = (in.width + 2 * padding - kernel) / stride + 1;
  require(out.height > 0 && out.width > 0, "conv2d: kernel larger than padded input");
  return out;
}

namespace {

struct ConvGeometry {
  ImageShape in;
  ImageShape out;
  int kernel;
  int stride;
  int padding;
};

// (C*k*k) x (Ho*Wo) patch matrix for one sample.
Matrix im2col(const double* x, const ConvGeometry& g) {
  const int k = g.kernel;
  Matrix cols = Matrix::Zero(static_cast<Index>(g.in.channels) * k * k, static_cast<Index>(g.out.height) * g.out.width);
  for (int c = 0; c < g.in.channels; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const Index r = (static_cast<Index>(c) * k + ky) * k + kx;
        for (int oy = 0; oy < g.out.height; ++oy) {
          const int iy = oy * g.stride - g.padding + ky;
          if (iy < 0 || iy >= g.in.height) continue;
          for (int ox = 0; ox < g.out.width; ++ox) {
            const int ix = ox * g.stride - g.padding + kx;
            if (ix < 0 || ix >= g.in.width) continue;
            cols(r, static_cast<Index>(oy) * g.out.width + ox) =
                x[(static_cast<Index>(c) * g.in.height + iy) * g.in.width + ix];
          }
        }
      }
  return cols;
}

void col2im_add(const Matrix& cols, double* dx, const ConvGeometry& g) {
  const int k = g.kernel;
  for (int c = 0; c < g.in.channels; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const Index r = (static_cast<Index>(c) * k + ky) * k + kx;
        for (int oy = 0; oy < g.out.height; ++oy) {
          const int iy = oy * g.stride - g.padding + ky;
          if (iy < 0 || iy >= g.in.height) continue;
          for (int ox = 0; ox < g.out.width; ++ox) {
            const int ix = ox * g.stride - g.padding + kx;
            if (ix < 0 || ix >= g.in.width) continue;
            dx[(static_cast<Index>(c) * g.in.height + iy) * g.in.width + ix] +=
                cols(r, static_cast<Index>(oy) * g.out.width + ox);
          }
        }
      }
}

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, const ImageShape& in, int kernel, int stride,
           int padding) {
  require(x.cols() == in.size(), "conv2d: input width does not match image shape");
  const Index out_c = weight.rows();
  require(weight.cols() == static_cast<Index>(in.channels) * kernel * kernel, "conv2d: weight shape mismatch");
  require(bias.rows() == 1 && bias.cols() == out_c, "conv2d: bias must be 1 x out_channels");
  ConvGeometry g{in, conv2d_output_shape(in, static_cast<int>(out_c), kernel, stride, padding), kernel, stride,
                 padding};

  const Index n = x.rows();
  const Index spatial = static_cast<Index>(g.out.height) * g.out.width;
  RowMajor xr = x.value();
  RowMajor out(n, out_c * spatial);
  for (Index s = 0; s < n; ++s) {
    Matrix cols = im2col(xr.row(s).data(), g);
    RowMajor y = (weight.value() * cols).colwise() + bias.value().row(0).transpose();
    out.row(s) = Eigen::Map<const Eigen::RowVectorXd>(y.data(), y.size());
  }
  return x.tape().record(Matrix(out), {x, weight, bias}, [x, weight, bias, g](Tape& t, const Matrix& gout) {
    const Index n = t.value(x).rows();
    const Index out_c = t.value(weight).rows();
    const Index spatial = static_cast<Index>(g.out.height) * g.out.width;
    RowMajor xr = t.value(x);
    RowMajor gr = gout;
    Matrix dw = Matrix::Zero(t.value(weight).rows(), t.value(weight).cols());
    Matrix db = Matrix::Zero(1, out_c);
    RowMajor dx = RowMajor::Zero(n, xr.cols());
    const bool need_x = t.requires_grad(x);
    for (Index s = 0; s < n; ++s) {
      RowMajor gs = Eigen::Map<const RowMajor>(gr.row(s).data(), out_c, spatial);
      Matrix cols = im2col(xr.row(s).data(), g);
      dw.noalias() += gs * cols.transpose();
      db += gs.rowwise().sum().transpose();
      if (need_x) {
        Matrix dcols = t.value(weight).transpose() * gs;
        col2im_add(dcols, dx.row(s).data(), g);
      }
    }
    if (need_x) t.accumulate(x, Matrix(dx));
    if (t.requires_grad(weight)) t.accumulate(weight, dw);
    if (t.requires_grad(bias)) t.accumulate(bias, db);
  });
}

Var global_avg_pool(const Var& x, const ImageShape& in) {
  require(x.cols() == in.size(), "global_avg_pool: shape mismatch");
  const Index hw = static_cast<Index>(in.height) * in.width;
  const Index n = x.rows();
  Matrix out(n, in.channels);
  const Matrix& v = x.value();
  for (Index s = 0; s < n; ++s)
    for (int c = 0; c < in.channels; ++c) out(s, c) = v.row(s).segment(c * hw, hw).mean();
  return x.tape().record(std::move(out), {x}, [x, in, hw](Tape& t, const Matrix& g) {
    const Index n = g.rows();
    Matrix dx(n, in.size());
    for (Index s = 0; s < n; ++s)
      for (int c = 0; c < in.channels; ++c) dx.row(s).segment(c * hw, hw).setConstant(g(s, c) / double(hw));
    t.accumulate(x, dx);
  });
}

}  // namespace pssl::ad
