#include "embnmt/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "embnmt/errors.hpp"

namespace embnmt::ad {

std::string to_string(Shape s) { return "[" + std::to_string(s.rows) + "x" + std::to_string(s.cols) + "]"; }

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw ContractViolation("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                            to_string({rows, cols}));
  }
}

double Tensor::item() const {
  if (size() != 1) throw ContractViolation("item() on non-scalar tensor " + to_string(shape()));
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

const Tensor& Var::value() const { return tape_->value(index_); }

// ---------------------------------------------------------------------------
// Tape

Tape::Tape(TapeOptions options) : options_(options) { nodes_.reserve(256); }

Var Tape::constant(Tensor value) {
  Node n;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor value) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = options_.record;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(ParamId id, const Tensor& value) {
  Node n;
  n.external = &value;
  n.is_param = true;
  n.param_id = id;
  n.requires_grad = options_.record;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::span<const Var> inputs, Backward backward) {
  if (options_.checked && !value.all_finite()) {
    throw std::domain_error("non-finite value produced at tape node " + std::to_string(nodes_.size()));
  }
  Node n;
  n.owned = std::move(value);
  if (options_.record) {
    for (const Var& in : inputs) {
      if (in.tape_ != this) throw ContractViolation("operand recorded on a different tape");
      n.requires_grad = n.requires_grad || nodes_[in.index_].requires_grad;
    }
    if (n.requires_grad) n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, Backward backward) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()), std::move(backward));
}

const Tensor& Tape::value(std::size_t index) const {
  const Node& n = nodes_[index];
  return n.external ? *n.external : n.owned;
}

Tensor& Tape::grad_buffer(std::size_t index) {
  Node& n = nodes_[index];
  if (n.grad.size() == 0 && value(index).size() != 0) {
    const Shape s = value(index).shape();
    n.grad = Tensor(s.rows, s.cols);
  }
  return n.grad;
}

void Tape::accumulate(std::size_t index, const Tensor& g) {
  Tensor& buf = grad_buffer(index);
  if (buf.shape() != g.shape()) {
    throw ContractViolation("gradient shape " + to_string(g.shape()) + " does not match node shape " +
                            to_string(buf.shape()));
  }
  auto dst = buf.data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

GradientMap Tape::backward(Var loss) {
  if (loss.tape_ != this) throw ContractViolation("loss is not on this tape");
  if (!options_.record) throw ContractViolation("backward on a tape that does not record gradients");
  if (backward_done_) throw ContractViolation("backward already ran for this recording");
  if (loss.value().size() != 1) {
    throw ContractViolation("backward requires a scalar loss, got " + to_string(loss.shape()));
  }
  backward_done_ = true;

  grad_buffer(loss.index_)[0] = 1.0;
  for (std::size_t i = loss.index_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.size() == 0) continue;
    n.backward(*this, n.grad);
  }

  GradientMap grads;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if (!n.is_param) continue;
    const Shape s = value(i).shape();
    auto [it, inserted] = grads.try_emplace(n.param_id, s.rows, s.cols);
    if (n.grad.size() != 0) {
      auto dst = it->second.data();
      auto src = n.grad.data();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }
  return grads;
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.index_];
  if (n.grad.size() != 0) return n.grad;
  const Shape s = value(v.index_).shape();
  return Tensor(s.rows, s.cols);
}

// ---------------------------------------------------------------------------
// Primitives

namespace {

Shape broadcast_shape(Shape a, Shape b, const char* op) {
  auto dim = [&](std::size_t x, std::size_t y) {
    if (x == y || y == 1) return x;
    if (x == 1) return y;
    throw ContractViolation(std::string(op) + ": incompatible shapes " + to_string(a) + " and " + to_string(b));
  };
  return {dim(a.rows, b.rows), dim(a.cols, b.cols)};
}

// Sums a gradient of the broadcast output shape back down to `target`.
Tensor reduce_to(const Tensor& g, Shape target) {
  if (g.shape() == target) return g;
  Tensor out(target.rows, target.cols);
  for (std::size_t r = 0; r < g.rows(); ++r) {
    const std::size_t tr = target.rows == 1 ? 0 : r;
    for (std::size_t c = 0; c < g.cols(); ++c) {
      out(tr, target.cols == 1 ? 0 : c) += g(r, c);
    }
  }
  return out;
}

enum class BinaryOp { kAdd, kSub, kMul };

Var binary(Var a, Var b, BinaryOp op, const char* name) {
  Tape& tape = a.tape();
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  const Shape out_shape = broadcast_shape(x.shape(), y.shape(), name);
  Tensor out(out_shape.rows, out_shape.cols);
  const bool xr = x.rows() == 1, xc = x.cols() == 1, yr = y.rows() == 1, yc = y.cols() == 1;
  for (std::size_t r = 0; r < out_shape.rows; ++r) {
    for (std::size_t c = 0; c < out_shape.cols; ++c) {
      const double u = x(xr ? 0 : r, xc ? 0 : c);
      const double v = y(yr ? 0 : r, yc ? 0 : c);
      switch (op) {
        case BinaryOp::kAdd: out(r, c) = u + v; break;
        case BinaryOp::kSub: out(r, c) = u - v; break;
        case BinaryOp::kMul: out(r, c) = u * v; break;
      }
    }
  }
  const std::size_t ia = a.index(), ib = b.index();
  return tape.record(std::move(out), {a, b}, [ia, ib, op](Tape& t, const Tensor& g) {
    const Tensor& x = t.value(ia);
    const Tensor& y = t.value(ib);
    if (op == BinaryOp::kMul) {
      const bool xr = x.rows() == 1, xc = x.cols() == 1, yr = y.rows() == 1, yc = y.cols() == 1;
      if (t.requires_grad(ia)) {
        Tensor& gx = t.grad_buffer(ia);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < g.cols(); ++c) gx(xr ? 0 : r, xc ? 0 : c) += g(r, c) * y(yr ? 0 : r, yc ? 0 : c);
      }
      if (t.requires_grad(ib)) {
        Tensor& gy = t.grad_buffer(ib);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < g.cols(); ++c) gy(yr ? 0 : r, yc ? 0 : c) += g(r, c) * x(xr ? 0 : r, xc ? 0 : c);
      }
      return;
    }
    if (t.requires_grad(ia)) t.accumulate(ia, reduce_to(g, x.shape()));
    if (t.requires_grad(ib)) {
      Tensor gy = reduce_to(g, y.shape());
      if (op == BinaryOp::kSub) {
        for (double& v : gy.data()) v = -v;
      }
      t.accumulate(ib, gy);
    }
  });
}

}  // namespace

Var add(Var a, Var b) { return binary(a, b, BinaryOp::kAdd, "add"); }
Var sub(Var a, Var b) { return binary(a, b, BinaryOp::kSub, "sub"); }
Var mul(Var a, Var b) { return binary(a, b, BinaryOp::kMul, "mul"); }

Var matmul(Var a, Var b, bool transpose_b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  const std::size_t m = x.rows(), k = x.cols();
  const std::size_t kb = transpose_b ? y.cols() : y.rows();
  const std::size_t n = transpose_b ? y.rows() : y.cols();
  if (k != kb) {
    throw ContractViolation("matmul: incompatible shapes " + to_string(x.shape()) + " and " + to_string(y.shape()) +
                            (transpose_b ? " (transposed)" : ""));
  }
  Tensor out(m, n);
  if (!transpose_b) {
    for (std::size_t i = 0; i < m; ++i) {
      double* o = &out(i, 0);
      for (std::size_t p = 0; p < k; ++p) {
        const double xv = x(i, p);
        if (xv == 0.0) continue;
        const double* yr = &y(p, 0);
        for (std::size_t j = 0; j < n; ++j) o[j] += xv * yr[j];
      }
    }
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      const double* xr = &x(i, 0);
      for (std::size_t j = 0; j < n; ++j) {
        const double* yr = &y(j, 0);
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s += xr[p] * yr[p];
        out(i, j) = s;
      }
    }
  }
  const std::size_t ia = a.index(), ib = b.index();
  return a.tape().record(std::move(out), {a, b}, [ia, ib, transpose_b, m, k, n](Tape& t, const Tensor& g) {
    const Tensor& x = t.value(ia);
    const Tensor& y = t.value(ib);
    if (t.requires_grad(ia)) {
      Tensor& gx = t.grad_buffer(ia);
      for (std::size_t i = 0; i < m; ++i) {
        const double* gr = &g(i, 0);
        double* gxr = &gx(i, 0);
        if (!transpose_b) {
          // gx = g * y^T
          for (std::size_t p = 0; p < k; ++p) {
            const double* yr = &y(p, 0);
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += gr[j] * yr[j];
            gxr[p] += s;
          }
        } else {
          // gx = g * y
          for (std::size_t j = 0; j < n; ++j) {
            const double gv = gr[j];
            if (gv == 0.0) continue;
            const double* yr = &y(j, 0);
            for (std::size_t p = 0; p < k; ++p) gxr[p] += gv * yr[p];
          }
        }
      }
    }
    if (t.requires_grad(ib)) {
      Tensor& gy = t.grad_buffer(ib);
      for (std::size_t i = 0; i < m; ++i) {
        const double* xr = &x(i, 0);
        const double* gr = &g(i, 0);
        if (!transpose_b) {
          // gy = x^T * g
          for (std::size_t p = 0; p < k; ++p) {
            const double xv = xr[p];
            if (xv == 0.0) continue;
            double* gyr = &gy(p, 0);
            for (std::size_t j = 0; j < n; ++j) gyr[j] += xv * gr[j];
          }
        } else {
          // gy = g^T * x
          for (std::size_t j = 0; j < n; ++j) {
            const double gv = gr[j];
            if (gv == 0.0) continue;
            double* gyr = &gy(j, 0);
            for (std::size_t p = 0; p < k; ++p) gyr[p] += gv * xr[p];
          }
        }
      }
    }
  });
}

Var tanh(Var a) {
  Tensor out = a.value();
  for (double& v : out.data()) v = std::tanh(v);
  const std::size_t ia = a.index();
  Tape& tape = a.tape();
  const std::size_t self = tape.size();
  return tape.record(std::move(out), {a}, [ia, self](Tape& t, const Tensor& g) {
    const Tensor& y = t.value(self);
    Tensor& gx = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Var sigmoid(Var a) {
  Tensor out = a.value();
  for (double& v : out.data()) v = 1.0 / (1.0 + std::exp(-v));
  const std::size_t ia = a.index();
  Tape& tape = a.tape();
  const std::size_t self = tape.size();
  return tape.record(std::move(out), {a}, [ia, self](Tape& t, const Tensor& g) {
    const Tensor& y = t.value(self);
    Tensor& gx = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw ContractViolation("concat: no operands");
  const std::size_t rows = parts[0].value().rows();
  std::size_t cols = 0;
  for (const Var& p : parts) {
    if (p.value().rows() != rows) {
      throw ContractViolation("concat: row mismatch " + to_string(parts[0].shape()) + " and " + to_string(p.shape()));
    }
    cols += p.value().cols();
  }
  Tensor out(rows, cols);
  std::vector<std::size_t> indices;
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(&v(r, 0), v.cols(), &out(r, off));
    indices.push_back(p.index());
    offsets.push_back(off);
    off += v.cols();
  }
  return parts[0].tape().record(std::move(out), parts, [indices, offsets](Tape& t, const Tensor& g) {
    for (std::size_t i = 0; i < indices.size(); ++i) {
      if (!t.requires_grad(indices[i])) continue;
      Tensor& gx = t.grad_buffer(indices[i]);
      for (std::size_t r = 0; r < gx.rows(); ++r) {
        const double* src = &g(r, offsets[i]);
        double* dst = &gx(r, 0);
        for (std::size_t c = 0; c < gx.cols(); ++c) dst[c] += src[c];
      }
    }
  });
}

Var concat(std::initializer_list<Var> parts) { return concat(std::span<const Var>(parts.begin(), parts.size())); }

Var slice(Var a, std::size_t begin, std::size_t end) {
  const Tensor& x = a.value();
  if (begin > end || end > x.cols()) {
    throw ContractViolation("slice: columns [" + std::to_string(begin) + ", " + std::to_string(end) +
                            ") out of range for " + to_string(x.shape()));
  }
  Tensor out(x.rows(), end - begin);
  for (std::size_t r = 0; r < x.rows(); ++r) std::copy_n(&x(r, begin), end - begin, &out(r, 0));
  const std::size_t ia = a.index();
  return a.tape().record(std::move(out), {a}, [ia, begin](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(ia);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      for (std::size_t c = 0; c < g.cols(); ++c) gx(r, begin + c) += g(r, c);
    }
  });
}

Var softmax(Var a) {
  Tensor out = a.value();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    double* row = &out(r, 0);
    const double mx = *std::max_element(row, row + out.cols());
    double z = 0.0;
    for (std::size_t c = 0; c < out.cols(); ++c) {
      row[c] = std::exp(row[c] - mx);
      z += row[c];
    }
    for (std::size_t c = 0; c < out.cols(); ++c) row[c] /= z;
  }
  const std::size_t ia = a.index();
  Tape& tape = a.tape();
  const std::size_t self = tape.size();
  return tape.record(std::move(out), {a}, [ia, self](Tape& t, const Tensor& g) {
    const Tensor& y = t.value(self);
    Tensor& gx = t.grad_buffer(ia);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) dot += g(r, c) * y(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c) gx(r, c) += y(r, c) * (g(r, c) - dot);
    }
  });
}

Var log(Var a, double floor) {
  Tensor out = a.value();
  for (double& v : out.data()) v = std::log(std::max(v, floor));
  const std::size_t ia = a.index();
  return a.tape().record(std::move(out), {a}, [ia, floor](Tape& t, const Tensor& g) {
    const Tensor& x = t.value(ia);
    Tensor& gx = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x[i] > floor) gx[i] += g[i] / x[i];
    }
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::size_t ia = a.index();
  return a.tape().record(Tensor::scalar(s), {a}, [ia](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(ia);
    const double gv = g[0];
    for (double& v : gx.data()) v += gv;
  });
}

Var row_sum(Var a) {
  const Tensor& x = a.value();
  Tensor out(x.rows(), 1);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double s = 0.0;
    for (double v : x.row(r)) s += v;
    out(r, 0) = s;
  }
  const std::size_t ia = a.index();
  return a.tape().record(std::move(out), {a}, [ia](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(ia);
    for (std::size_t r = 0; r < gx.rows(); ++r) {
      for (std::size_t c = 0; c < gx.cols(); ++c) gx(r, c) += g(r, 0);
    }
  });
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ContractViolation("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var dropout(Var a, const Tensor& mask, double p) {
  if (mask.shape() != a.shape()) {
    throw ContractViolation("dropout: mask shape " + to_string(mask.shape()) + " does not match " +
                            to_string(a.shape()));
  }
  if (!(p >= 0.0 && p < 1.0)) throw ContractViolation("dropout: p must be in [0, 1)");
  const double keep_scale = 1.0 / (1.0 - p);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i] * keep_scale;
  const std::size_t ia = a.index();
  return a.tape().record(std::move(out), {a}, [ia, mask, keep_scale](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i] * keep_scale;
  });
}

Var embedding_lookup(Var table, std::span<const WordId> ids) {
  const Tensor& w = table.value();
  Tensor out(ids.size(), w.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= w.rows()) {
      throw ContractViolation("embedding_lookup: id " + std::to_string(ids[i]) + " out of range for table " +
                              to_string(w.shape()));
    }
    std::copy_n(&w(static_cast<std::size_t>(ids[i]), 0), w.cols(), &out(i, 0));
  }
  const std::size_t it = table.index();
  std::vector<WordId> rows(ids.begin(), ids.end());
  return table.tape().record(std::move(out), {table}, [it, rows = std::move(rows)](Tape& t, const Tensor& g) {
    Tensor& gw = t.grad_buffer(it);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      double* dst = &gw(static_cast<std::size_t>(rows[i]), 0);
      const double* src = &g(i, 0);
      for (std::size_t c = 0; c < g.cols(); ++c) dst[c] += src[c];
    }
  });
}

Var scale(Var a, double s) {
  Tensor out = a.value();
  for (double& v : out.data()) v *= s;
  const std::size_t ia = a.index();
  return a.tape().record(std::move(out), {a}, [ia, s](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * s;
  });
}

// ---------------------------------------------------------------------------

double finite_difference_check(const std::function<Var(Var)>& f, const Tensor& point, double epsilon) {
  Tensor analytic;
  {
    Tape tape;
    Var x = tape.variable(point);
    Var y = f(x);
    tape.backward(y);
    analytic = tape.grad(x);
  }
  auto eval = [&](const Tensor& p) {
    Tape tape({.record = false, .checked = true});
    return f(tape.variable(p)).value().item();
  };
  double worst = 0.0;
  Tensor probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double orig = point[i];
    probe[i] = orig + epsilon;
    const double up = eval(probe);
    probe[i] = orig - epsilon;
    const double down = eval(probe);
    probe[i] = orig;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace embnmt::ad
