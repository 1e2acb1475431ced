#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lgnn/errors.hpp"

namespace lgnn {

namespace detail {

struct TensorImpl {
  std::vector<int64_t> shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until first accumulation
  bool needs_grad = false;   // participates in the current tape
  bool is_leaf = true;

  int64_t size() const { return static_cast<int64_t>(values.size()); }
  // Lazily allocates the zero-initialized adjoint buffer.
  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(values.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

// Dense row-major f64 tensor. Value-semantic handle over shared storage:
// copies alias the same buffer, matching how parameters flow through the
// tape. Values are immutable after construction except for gradient
// accumulation during backward() and explicit optimizer updates.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int64_t> shape, bool requires_grad = false);
  static Tensor full(std::vector<int64_t> shape, double value,
                     bool requires_grad = false);
  static Tensor from(std::vector<int64_t> shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<int64_t>& shape() const { return impl_->shape; }
  int ndim() const { return static_cast<int>(impl_->shape.size()); }
  int64_t dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
  int64_t size() const { return impl_->size(); }

  std::span<double> data() { return impl_->values; }
  std::span<const double> data() const { return impl_->values; }
  double item() const;

  bool requires_grad() const { return impl_->is_leaf && impl_->needs_grad; }
  bool needs_grad() const { return impl_->needs_grad; }
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  void zero_grad() { impl_->grad.clear(); }

  detail::TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<detail::TensorImpl>& handle() const { return impl_; }

  static Tensor wrap(std::shared_ptr<detail::TensorImpl> impl) {
    Tensor t;
    t.impl_ = std::move(impl);
    return t;
  }

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

// Ordered record of executed operations. backward() replays the adjoint
// of each recorded operation exactly once, in reverse order, then clears
// the tape. One tape per thread; distinct runs on distinct threads do not
// interact.
class Tape {
 public:
  static Tape& active();

  bool recording() const { return recording_; }
  void set_recording(bool on) { recording_ = on; }

  void record(std::function<void()> backward_fn) {
    ops_.push_back(std::move(backward_fn));
  }

  size_t size() const { return ops_.size(); }
  void clear() { ops_.clear(); }

  // Seeds d(loss)/d(loss) = 1 and propagates adjoints to every leaf with
  // requires_grad. The loss must be a connected scalar.
  void backward(const Tensor& loss);

 private:
  std::vector<std::function<void()>> ops_;
  bool recording_ = true;
};

// Disables tape recording for the enclosing scope (evaluation paths).
class NoGradGuard {
 public:
  NoGradGuard() : prev_(Tape::active().recording()) {
    Tape::active().set_recording(false);
  }
  ~NoGradGuard() { Tape::active().set_recording(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

enum class EltOp { Sigmoid, Tanh, Relu, Elu, Exp, Log1p, Log };

enum class SegmentMode { Sum, Mean, Max };

Tensor matmul(const Tensor& a, const Tensor& b);

Tensor elementwise(EltOp op, const Tensor& x);
inline Tensor sigmoid(const Tensor& x) { return elementwise(EltOp::Sigmoid, x); }
inline Tensor tanh_op(const Tensor& x) { return elementwise(EltOp::Tanh, x); }
inline Tensor relu(const Tensor& x) { return elementwise(EltOp::Relu, x); }
inline Tensor elu(const Tensor& x) { return elementwise(EltOp::Elu, x); }
inline Tensor exp_op(const Tensor& x) { return elementwise(EltOp::Exp, x); }
inline Tensor log1p_op(const Tensor& x) { return elementwise(EltOp::Log1p, x); }
inline Tensor log_op(const Tensor& x) { return elementwise(EltOp::Log, x); }
Tensor leaky_relu(const Tensor& x, double negative_slope = 0.2);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
// a: [n x m], bias: [m]; adds the bias to every row.
Tensor add_rowvec(const Tensor& a, const Tensor& bias);

Tensor concat(std::span<const Tensor> parts, int axis);
Tensor concat(std::initializer_list<Tensor> parts, int axis);

Tensor gather_rows(const Tensor& x, std::span<const int64_t> rows);

// Contiguous views materialized as copies; backward scatters the adjoint.
Tensor slice_rows(const Tensor& x, int64_t start, int64_t count);
Tensor slice_cols(const Tensor& x, int64_t start, int64_t count);

// x: [n x m] scaled per row by v: [n] or [n x 1].
Tensor mul_colvec(const Tensor& x, const Tensor& v);

// values: [E x d] (or [E]); segments[e] in [0, n_segments).
Tensor segment_aggregate(const Tensor& values, std::span<const int64_t> segments,
                         int64_t n_segments, SegmentMode mode);

// Column-wise softmax within each segment; logits [E] or [E x h].
Tensor segment_softmax(const Tensor& logits, std::span<const int64_t> segments,
                       int64_t n_segments);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Inverted dropout: scales kept entries by 1/(1-p). Identity when not
// training or p == 0.
Tensor dropout(const Tensor& x, double p, std::mt19937_64& rng, bool training);

inline void backward(const Tensor& loss) { Tape::active().backward(loss); }

std::string shape_str(const std::vector<int64_t>& shape);

}  // namespace lgnn
