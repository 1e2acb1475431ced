#include "lgnn/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace lgnn {

namespace {

using MatMap = Eigen::Map<
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap = Eigen::Map<
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

int64_t shape_product(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::shared_ptr<detail::TensorImpl> make_impl(std::vector<int64_t> shape,
                                              std::vector<double> values) {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  return impl;
}

// Output of an op: non-leaf, needs_grad iff any input does and the tape
// is recording.
Tensor make_output(std::vector<int64_t> shape, std::vector<double> values,
                   bool needs_grad) {
  auto impl = make_impl(std::move(shape), std::move(values));
  impl->is_leaf = false;
  impl->needs_grad = needs_grad;
  return Tensor::wrap(std::move(impl));
}

bool track(const Tensor& t) {
  return Tape::active().recording() && t.impl()->needs_grad;
}

}  // namespace

std::string shape_str(const std::vector<int64_t>& shape) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

Tensor Tensor::zeros(std::vector<int64_t> shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(std::vector<int64_t> shape, double value,
                    bool requires_grad) {
  for (int64_t d : shape)
    if (d <= 0) throw ShapeError("tensor dimension must be positive, got " +
                                 shape_str(shape));
  std::vector<double> v(static_cast<size_t>(shape_product(shape)), value);
  auto impl = make_impl(std::move(shape), std::move(v));
  impl->needs_grad = requires_grad;
  return wrap(std::move(impl));
}

Tensor Tensor::from(std::vector<int64_t> shape, std::vector<double> values,
                    bool requires_grad) {
  if (shape_product(shape) != static_cast<int64_t>(values.size()))
    throw ShapeError("value count " + std::to_string(values.size()) +
                     " does not match shape " + shape_str(shape));
  auto impl = make_impl(std::move(shape), std::move(values));
  impl->needs_grad = requires_grad;
  return wrap(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

double Tensor::item() const {
  if (size() != 1)
    throw ContractError("item() requires a scalar tensor, got shape " +
                        shape_str(shape()));
  return impl_->values[0];
}

Tape& Tape::active() {
  thread_local Tape tape;
  return tape;
}

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw ContractError("backward requires a scalar loss, got shape " +
                        shape_str(loss.shape()));
  auto& seed = loss.impl()->grad_buffer();
  seed[0] += 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  ops_.clear();
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul shape mismatch: " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  const int64_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  std::vector<double> out(static_cast<size_t>(n * m));
  {
    ConstMatMap A(a.data().data(), n, k);
    ConstMatMap B(b.data().data(), k, m);
    MatMap C(out.data(), n, m);
    C.noalias() = A * B;
  }
  bool ta = track(a), tb = track(b);
  Tensor y = make_output({n, m}, std::move(out), ta || tb);
  if (ta || tb) {
    Tape::active().record([ai = a.handle(), bi = b.handle(), oi = y.handle(),
                           n, k, m, ta, tb] {
      if (oi->grad.empty()) return;
      ConstMatMap G(oi->grad.data(), n, m);
      if (ta) {
        ConstMatMap B(bi->values.data(), k, m);
        MatMap GA(ai->grad_buffer().data(), n, k);
        GA.noalias() += G * B.transpose();
      }
      if (tb) {
        ConstMatMap A(ai->values.data(), n, k);
        MatMap GB(bi->grad_buffer().data(), k, m);
        GB.noalias() += A.transpose() * G;
      }
    });
  }
  return y;
}

namespace {

struct UnaryFns {
  double (*f)(double);
  // derivative expressed in terms of (x, f(x))
  double (*df)(double, double);
};

const UnaryFns& unary_table(EltOp op) {
  static const UnaryFns kSigmoid{
      [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); }};
  static const UnaryFns kTanh{[](double x) { return std::tanh(x); },
                              [](double, double y) { return 1.0 - y * y; }};
  static const UnaryFns kRelu{[](double x) { return x > 0.0 ? x : 0.0; },
                              [](double x, double) { return x > 0.0 ? 1.0 : 0.0; }};
  static const UnaryFns kElu{
      [](double x) { return x > 0.0 ? x : std::expm1(x); },
      [](double x, double y) { return x > 0.0 ? 1.0 : y + 1.0; }};
  static const UnaryFns kExp{[](double x) { return std::exp(x); },
                             [](double, double y) { return y; }};
  static const UnaryFns kLog1p{[](double x) { return std::log1p(x); },
                               [](double x, double) { return 1.0 / (1.0 + x); }};
  static const UnaryFns kLog{[](double x) { return std::log(x); },
                             [](double x, double) { return 1.0 / x; }};
  switch (op) {
    case EltOp::Sigmoid: return kSigmoid;
    case EltOp::Tanh: return kTanh;
    case EltOp::Relu: return kRelu;
    case EltOp::Elu: return kElu;
    case EltOp::Exp: return kExp;
    case EltOp::Log1p: return kLog1p;
    case EltOp::Log: return kLog;
  }
  throw ContractError("unknown elementwise op");
}

}  // namespace

Tensor elementwise(EltOp op, const Tensor& x) {
  const auto in = x.data();
  if (op == EltOp::Log1p || op == EltOp::Log) {
    const double lo = op == EltOp::Log1p ? -1.0 : 0.0;
    for (size_t i = 0; i < in.size(); ++i)
      if (!(in[i] > lo))
        throw DomainError("elementwise domain violation at index " +
                          std::to_string(i) + ": value " + std::to_string(in[i]));
  }
  const UnaryFns& fns = unary_table(op);
  std::vector<double> out(in.size());
  for (size_t i = 0; i < in.size(); ++i) out[i] = fns.f(in[i]);
  bool t = track(x);
  Tensor y = make_output(x.shape(), std::move(out), t);
  if (t) {
    Tape::active().record([xi = x.handle(), oi = y.handle(), op] {
      if (oi->grad.empty()) return;
      const UnaryFns& fns = unary_table(op);
      auto& gx = xi->grad_buffer();
      for (size_t i = 0; i < gx.size(); ++i)
        gx[i] += oi->grad[i] * fns.df(xi->values[i], oi->values[i]);
    });
  }
  return y;
}

Tensor leaky_relu(const Tensor& x, double negative_slope) {
  const auto in = x.data();
  std::vector<double> out(in.size());
  for (size_t i = 0; i < in.size(); ++i)
    out[i] = in[i] > 0.0 ? in[i] : negative_slope * in[i];
  bool t = track(x);
  Tensor y = make_output(x.shape(), std::move(out), t);
  if (t) {
    Tape::active().record([xi = x.handle(), oi = y.handle(), negative_slope] {
      if (oi->grad.empty()) return;
      auto& gx = xi->grad_buffer();
      for (size_t i = 0; i < gx.size(); ++i)
        gx[i] += oi->grad[i] * (xi->values[i] > 0.0 ? 1.0 : negative_slope);
    });
  }
  return y;
}

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + " shape mismatch: " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<double> out(a.data().begin(), a.data().end());
  for (size_t i = 0; i < out.size(); ++i) out[i] += b.data()[i];
  bool ta = track(a), tb = track(b);
  Tensor y = make_output(a.shape(), std::move(out), ta || tb);
  if (ta || tb) {
    Tape::active().record([ai = a.handle(), bi = b.handle(), oi = y.handle(),
                           ta, tb] {
      if (oi->grad.empty()) return;
      if (ta) {
        auto& g = ai->grad_buffer();
        for (size_t i = 0; i < g.size(); ++i) g[i] += oi->grad[i];
      }
      if (tb) {
        auto& g = bi->grad_buffer();
        for (size_t i = 0; i < g.size(); ++i) g[i] += oi->grad[i];
      }
    });
  }
  return y;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<double> out(a.data().begin(), a.data().end());
  for (size_t i = 0; i < out.size(); ++i) out[i] -= b.data()[i];
  bool ta = track(a), tb = track(b);
  Tensor y = make_output(a.shape(), std::move(out), ta || tb);
  if (ta || tb) {
    Tape::active().record([ai = a.handle(), bi = b.handle(), oi = y.handle(),
                           ta, tb] {
      if (oi->grad.empty()) return;
      if (ta) {
        auto& g = ai->grad_buffer();
        for (size_t i = 0; i < g.size(); ++i) g[i] += oi->grad[i];
      }
      if (tb) {
        auto& g = bi->grad_buffer();
        for (size_t i = 0; i < g.size(); ++i) g[i] -= oi->grad[i];
      }
    });
  }
  return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (int64_t i = 0; i < a.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  bool ta = track(a), tb = track(b);
  Tensor y = make_output(a.shape(), std::move(out), ta || tb);
  if (ta || tb) {
    Tape::active().record([ai = a.handle(), bi = b.handle(), oi = y.handle(),
                           ta, tb] {
      if (oi->grad.empty()) return;
      if (ta) {
        auto& g = ai->grad_buffer();
        for (size_t i = 0; i < g.size(); ++i) g[i] += oi->grad[i] * bi->values[i];
      }
      if (tb) {
        auto& g = bi->grad_buffer();
        for (size_t i = 0; i < g.size(); ++i) g[i] += oi->grad[i] * ai->values[i];
      }
    });
  }
  return y;
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.size());
  for (int64_t i = 0; i < a.size(); ++i) out[i] = a.data()[i] * s;
  bool ta = track(a);
  Tensor y = make_output(a.shape(), std::move(out), ta);
  if (ta) {
    Tape::active().record([ai = a.handle(), oi = y.handle(), s] {
      if (oi->grad.empty()) return;
      auto& g = ai->grad_buffer();
      for (size_t i = 0; i < g.size(); ++i) g[i] += oi->grad[i] * s;
    });
  }
  return y;
}

Tensor add_rowvec(const Tensor& a, const Tensor& bias) {
  if (a.ndim() != 2 || bias.ndim() != 1 || bias.dim(0) != a.dim(1))
    throw ShapeError("add_rowvec shape mismatch: " + shape_str(a.shape()) +
                     " + " + shape_str(bias.shape()));
  const int64_t n = a.dim(0), m = a.dim(1);
  std::vector<double> out(a.data().begin(), a.data().end());
  for (int64_t r = 0; r < n; ++r)
    for (int64_t c = 0; c < m; ++c) out[r * m + c] += bias.data()[c];
  bool ta = track(a), tb = track(bias);
  Tensor y = make_output(a.shape(), std::move(out), ta || tb);
  if (ta || tb) {
    Tape::active().record([ai = a.handle(), bi = bias.handle(),
                           oi = y.handle(), n, m, ta, tb] {
      if (oi->grad.empty()) return;
      if (ta) {
        auto& g = ai->grad_buffer();
        for (size_t i = 0; i < g.size(); ++i) g[i] += oi->grad[i];
      }
      if (tb) {
        auto& g = bi->grad_buffer();
        for (int64_t r = 0; r < n; ++r)
          for (int64_t c = 0; c < m; ++c) g[c] += oi->grad[r * m + c];
      }
    });
  }
  return y;
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw ContractError("concat of zero tensors");
  const int nd = parts[0].ndim();
  if (axis < 0 || axis >= nd)
    throw ShapeError("concat axis " + std::to_string(axis) +
                     " out of range for ndim " + std::to_string(nd));
  for (const Tensor& p : parts) {
    if (p.ndim() != nd)
      throw ShapeError("concat rank mismatch: " + shape_str(p.shape()) +
                       " vs " + shape_str(parts[0].shape()));
    for (int d = 0; d < nd; ++d)
      if (d != axis && p.dim(d) != parts[0].dim(d))
        throw ShapeError("concat non-axis dimension mismatch: " +
                         shape_str(p.shape()) + " vs " +
                         shape_str(parts[0].shape()));
  }
  std::vector<int64_t> shape = parts[0].shape();
  shape[axis] = 0;
  for (const Tensor& p : parts) shape[axis] += p.dim(axis);

  // Row-major layout: treat as [outer, axis_dim, inner] blocks.
  int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= shape[d];
  for (int d = axis + 1; d < nd; ++d) inner *= shape[d];
  const int64_t out_axis = shape[axis];

  std::vector<double> out(static_cast<size_t>(outer * out_axis * inner));
  int64_t off = 0;
  for (const Tensor& p : parts) {
    const int64_t pa = p.dim(axis);
    for (int64_t o = 0; o < outer; ++o)
      std::copy_n(p.data().data() + o * pa * inner, pa * inner,
                  out.data() + (o * out_axis + off) * inner);
    off += pa;
  }
  bool any = false;
  for (const Tensor& p : parts) any = any || track(p);
  Tensor y = make_output(shape, std::move(out), any);
  if (any) {
    std::vector<std::shared_ptr<detail::TensorImpl>> srcs;
    std::vector<int64_t> axes;
    for (const Tensor& p : parts) {
      srcs.push_back(p.handle());
      axes.push_back(p.dim(axis));
    }
    Tape::active().record([srcs = std::move(srcs), axes = std::move(axes),
                           oi = y.handle(), outer, inner, out_axis] {
      if (oi->grad.empty()) return;
      int64_t off = 0;
      for (size_t k = 0; k < srcs.size(); ++k) {
        const int64_t pa = axes[k];
        if (srcs[k]->needs_grad) {
          auto& g = srcs[k]->grad_buffer();
          for (int64_t o = 0; o < outer; ++o) {
            const double* src = oi->grad.data() + (o * out_axis + off) * inner;
            double* dst = g.data() + o * pa * inner;
            for (int64_t i = 0; i < pa * inner; ++i) dst[i] += src[i];
          }
        }
        off += pa;
      }
    });
  }
  return y;
}

Tensor concat(std::initializer_list<Tensor> parts, int axis) {
  std::vector<Tensor> v(parts);
  return concat(std::span<const Tensor>(v), axis);
}

Tensor gather_rows(const Tensor& x, std::span<const int64_t> rows) {
  if (x.ndim() != 2) throw ShapeError("gather_rows requires a 2-D tensor");
  const int64_t n = x.dim(0), m = x.dim(1);
  for (int64_t r : rows)
    if (r < 0 || r >= n)
      throw IndexError("gather_rows index " + std::to_string(r) +
                       " out of range [0," + std::to_string(n) + ")");
  std::vector<double> out(rows.size() * static_cast<size_t>(m));
  for (size_t i = 0; i < rows.size(); ++i)
    std::copy_n(x.data().data() + rows[i] * m, m, out.data() + i * m);
  bool t = track(x);
  Tensor y = make_output({static_cast<int64_t>(rows.size()), m}, std::move(out), t);
  if (t) {
    std::vector<int64_t> idx(rows.begin(), rows.end());
    Tape::active().record([xi = x.handle(), oi = y.handle(),
                           idx = std::move(idx), m] {
      if (oi->grad.empty()) return;
      auto& g = xi->grad_buffer();
      for (size_t i = 0; i < idx.size(); ++i)
        for (int64_t c = 0; c < m; ++c)
          g[idx[i] * m + c] += oi->grad[i * m + c];
    });
  }
  return y;
}

Tensor slice_rows(const Tensor& x, int64_t start, int64_t count) {
  if (x.ndim() != 2) throw ShapeError("slice_rows requires a 2-D tensor");
  const int64_t n = x.dim(0), m = x.dim(1);
  if (start < 0 || count <= 0 || start + count > n)
    throw IndexError("slice_rows range [" + std::to_string(start) + "," +
                     std::to_string(start + count) + ") out of [0," +
                     std::to_string(n) + ")");
  std::vector<double> out(x.data().begin() + start * m,
                          x.data().begin() + (start + count) * m);
  bool t = track(x);
  Tensor y = make_output({count, m}, std::move(out), t);
  if (t) {
    Tape::active().record([xi = x.handle(), oi = y.handle(), start, m] {
      if (oi->grad.empty()) return;
      auto& g = xi->grad_buffer();
      for (size_t i = 0; i < oi->grad.size(); ++i)
        g[static_cast<size_t>(start * m) + i] += oi->grad[i];
    });
  }
  return y;
}

Tensor slice_cols(const Tensor& x, int64_t start, int64_t count) {
  if (x.ndim() != 2) throw ShapeError("slice_cols requires a 2-D tensor");
  const int64_t n = x.dim(0), m = x.dim(1);
  if (start < 0 || count <= 0 || start + count > m)
    throw IndexError("slice_cols range [" + std::to_string(start) + "," +
                     std::to_string(start + count) + ") out of [0," +
                     std::to_string(m) + ")");
  std::vector<double> out(static_cast<size_t>(n * count));
  for (int64_t r = 0; r < n; ++r)
    std::copy_n(x.data().data() + r * m + start, count, out.data() + r * count);
  bool t = track(x);
  Tensor y = make_output({n, count}, std::move(out), t);
  if (t) {
    Tape::active().record([xi = x.handle(), oi = y.handle(), start, n, m,
                           count] {
      if (oi->grad.empty()) return;
      auto& g = xi->grad_buffer();
      for (int64_t r = 0; r < n; ++r)
        for (int64_t c = 0; c < count; ++c)
          g[static_cast<size_t>(r * m + start + c)] +=
              oi->grad[static_cast<size_t>(r * count + c)];
    });
  }
  return y;
}

Tensor mul_colvec(const Tensor& x, const Tensor& v) {
  if (x.ndim() != 2 || v.size() != x.dim(0))
    throw ShapeError("mul_colvec shape mismatch: " + shape_str(x.shape()) +
                     " * " + shape_str(v.shape()));
  const int64_t n = x.dim(0), m = x.dim(1);
  std::vector<double> out(static_cast<size_t>(n * m));
  for (int64_t r = 0; r < n; ++r)
    for (int64_t c = 0; c < m; ++c)
      out[static_cast<size_t>(r * m + c)] =
          x.data()[static_cast<size_t>(r * m + c)] *
          v.data()[static_cast<size_t>(r)];
  bool tx = track(x), tv = track(v);
  Tensor y = make_output(x.shape(), std::move(out), tx || tv);
  if (tx || tv) {
    Tape::active().record([xi = x.handle(), vi = v.handle(), oi = y.handle(),
                           n, m, tx, tv] {
      if (oi->grad.empty()) return;
      if (tx) {
        auto& g = xi->grad_buffer();
        for (int64_t r = 0; r < n; ++r)
          for (int64_t c = 0; c < m; ++c)
            g[static_cast<size_t>(r * m + c)] +=
                oi->grad[static_cast<size_t>(r * m + c)] *
                vi->values[static_cast<size_t>(r)];
      }
      if (tv) {
        auto& g = vi->grad_buffer();
        for (int64_t r = 0; r < n; ++r) {
          double s = 0.0;
          for (int64_t c = 0; c < m; ++c)
            s += oi->grad[static_cast<size_t>(r * m + c)] *
                 xi->values[static_cast<size_t>(r * m + c)];
          g[static_cast<size_t>(r)] += s;
        }
      }
    });
  }
  return y;
}

Tensor segment_aggregate(const Tensor& values, std::span<const int64_t> segments,
                         int64_t n_segments, SegmentMode mode) {
  const int64_t e = values.dim(0);
  const int64_t d = values.ndim() == 2 ? values.dim(1) : 1;
  if (values.ndim() > 2)
    throw ShapeError("segment_aggregate requires a 1-D or 2-D tensor");
  if (static_cast<int64_t>(segments.size()) != e)
    throw ShapeError("segment id count " + std::to_string(segments.size()) +
                     " does not match row count " + std::to_string(e));
  for (int64_t s : segments)
    if (s < 0 || s >= n_segments)
      throw IndexError("segment id " + std::to_string(s) + " out of range [0," +
                       std::to_string(n_segments) + ")");

  std::vector<double> out(static_cast<size_t>(n_segments * d), 0.0);
  std::vector<int64_t> counts(static_cast<size_t>(n_segments), 0);
  std::vector<int64_t> argmax;
  if (mode == SegmentMode::Max) {
    argmax.assign(static_cast<size_t>(n_segments * d), -1);
    for (int64_t i = 0; i < e; ++i) {
      const int64_t s = segments[i];
      for (int64_t c = 0; c < d; ++c) {
        const double v = values.data()[i * d + c];
        int64_t& a = argmax[s * d + c];
        if (a < 0 || v > out[s * d + c]) {
          out[s * d + c] = v;
          a = i;
        }
      }
      ++counts[s];
    }
    // empty segments stay at zero
  } else {
    for (int64_t i = 0; i < e; ++i) {
      const int64_t s = segments[i];
      for (int64_t c = 0; c < d; ++c) out[s * d + c] += values.data()[i * d + c];
      ++counts[s];
    }
    if (mode == SegmentMode::Mean)
      for (int64_t s = 0; s < n_segments; ++s)
        if (counts[s] > 0)
          for (int64_t c = 0; c < d; ++c)
            out[s * d + c] /= static_cast<double>(counts[s]);
  }

  std::vector<int64_t> shape = values.ndim() == 2
                                   ? std::vector<int64_t>{n_segments, d}
                                   : std::vector<int64_t>{n_segments};
  bool t = track(values);
  Tensor y = make_output(std::move(shape), std::move(out), t);
  if (t) {
    std::vector<int64_t> segs(segments.begin(), segments.end());
    Tape::active().record([vi = values.handle(), oi = y.handle(),
                           segs = std::move(segs), counts = std::move(counts),
                           argmax = std::move(argmax), d, mode] {
      if (oi->grad.empty()) return;
      auto& g = vi->grad_buffer();
      if (mode == SegmentMode::Max) {
        for (size_t j = 0; j < argmax.size(); ++j)
          if (argmax[j] >= 0) {
            const int64_t c = static_cast<int64_t>(j) % d;
            g[argmax[j] * d + c] += oi->grad[j];
          }
      } else {
        for (size_t i = 0; i < segs.size(); ++i) {
          const int64_t s = segs[i];
          const double w = mode == SegmentMode::Mean
                               ? 1.0 / static_cast<double>(counts[s])
                               : 1.0;
          for (int64_t c = 0; c < d; ++c)
            g[i * d + c] += oi->grad[s * d + c] * w;
        }
      }
    });
  }
  return y;
}

Tensor segment_softmax(const Tensor& logits, std::span<const int64_t> segments,
                       int64_t n_segments) {
  const int64_t e = logits.dim(0);
  const int64_t h = logits.ndim() == 2 ? logits.dim(1) : 1;
  if (logits.ndim() > 2)
    throw ShapeError("segment_softmax requires a 1-D or 2-D tensor");
  if (static_cast<int64_t>(segments.size()) != e)
    throw ShapeError("segment id count mismatch in segment_softmax");
  for (int64_t s : segments)
    if (s < 0 || s >= n_segments)
      throw IndexError("segment id out of range in segment_softmax");

  // max-shifted exp, per segment and column
  std::vector<double> segmax(static_cast<size_t>(n_segments * h),
                             -std::numeric_limits<double>::infinity());
  for (int64_t i = 0; i < e; ++i)
    for (int64_t c = 0; c < h; ++c)
      segmax[segments[i] * h + c] =
          std::max(segmax[segments[i] * h + c], logits.data()[i * h + c]);
  std::vector<double> out(static_cast<size_t>(e * h));
  std::vector<double> denom(static_cast<size_t>(n_segments * h), 0.0);
  for (int64_t i = 0; i < e; ++i)
    for (int64_t c = 0; c < h; ++c) {
      const double v =
          std::exp(logits.data()[i * h + c] - segmax[segments[i] * h + c]);
      out[i * h + c] = v;
      denom[segments[i] * h + c] += v;
    }
  for (int64_t i = 0; i < e; ++i)
    for (int64_t c = 0; c < h; ++c) out[i * h + c] /= denom[segments[i] * h + c];

  bool t = track(logits);
  Tensor y = make_output(logits.shape(), std::move(out), t);
  if (t) {
    std::vector<int64_t> segs(segments.begin(), segments.end());
    Tape::active().record([xi = logits.handle(), oi = y.handle(),
                           segs = std::move(segs), n_segments, h] {
      if (oi->grad.empty()) return;
      // d logit_i = p_i * (g_i - sum_j p_j g_j) within the segment
      const int64_t e = static_cast<int64_t>(segs.size());
      std::vector<double> dot(static_cast<size_t>(n_segments * h), 0.0);
      for (int64_t i = 0; i < e; ++i)
        for (int64_t c = 0; c < h; ++c)
          dot[segs[i] * h + c] += oi->values[i * h + c] * oi->grad[i * h + c];
      auto& g = xi->grad_buffer();
      for (int64_t i = 0; i < e; ++i)
        for (int64_t c = 0; c < h; ++c)
          g[i * h + c] += oi->values[i * h + c] *
                          (oi->grad[i * h + c] - dot[segs[i] * h + c]);
    });
  }
  return y;
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  bool t = track(x);
  Tensor y = make_output({1}, {s}, t);
  if (t) {
    Tape::active().record([xi = x.handle(), oi = y.handle()] {
      if (oi->grad.empty()) return;
      auto& g = xi->grad_buffer();
      for (double& v : g) v += oi->grad[0];
    });
  }
  return y;
}

Tensor mean(const Tensor& x) {
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor dropout(const Tensor& x, double p, std::mt19937_64& rng, bool training) {
  if (p < 0.0 || p >= 1.0)
    throw ConfigError("dropout rate must be in [0,1), got " + std::to_string(p));
  if (!training || p == 0.0) return x;
  std::vector<double> mask(x.size());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double keep = 1.0 - p;
  for (auto& m : mask) m = u(rng) < keep ? 1.0 / keep : 0.0;
  std::vector<double> out(x.size());
  for (int64_t i = 0; i < x.size(); ++i) out[i] = x.data()[i] * mask[i];
  bool t = track(x);
  Tensor y = make_output(x.shape(), std::move(out), t);
  if (t) {
    Tape::active().record([xi = x.handle(), oi = y.handle(),
                           mask = std::move(mask)] {
      if (oi->grad.empty()) return;
      auto& g = xi->grad_buffer();
      for (size_t i = 0; i < g.size(); ++i) g[i] += oi->grad[i] * mask[i];
    });
  }
  return y;
}

}  // namespace lgnn
