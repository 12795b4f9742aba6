#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mivolo/error.hpp"

namespace mivolo {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient reaches this node
  bool requires_grad = false;
  bool is_leaf = true;

  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
  }
};

// Dense row-major double tensor. Copies of a Tensor share storage; use clone()
// for an independent value.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values);
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(const Shape& shape);
  static Tensor full(const Shape& shape, double value);
  static Tensor scalar(double value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const double> data() const { return impl_->data; }
  // Mutating values of a tensor that is already on a tape invalidates that tape.
  std::span<double> mutable_data() { return impl_->data; }
  double item() const;
  double operator[](std::size_t i) const { return impl_->data[i]; }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  std::span<double> mutable_grad();
  void zero_grad();

  Tensor clone() const;
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }
  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// Ordered record of differentiable ops. Ops record onto the tape active on
// the calling thread (see TapeScope) when any input requires a gradient.
class Tape {
 public:
  using ImplPtr = std::shared_ptr<TensorImpl>;
  using BackwardFn = std::function<void(const TensorImpl& out)>;

  struct Entry {
    std::vector<ImplPtr> inputs;
    ImplPtr output;
    BackwardFn backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::vector<ImplPtr> inputs, ImplPtr output, BackwardFn backward);

  // Populates grads of every requires_grad leaf reachable from `loss`.
  // Leaf gradients accumulate; call Tensor::zero_grad between steps.
  void backward(const Tensor& loss);

  void reset();
  std::size_t size() const { return entries_.size(); }
  bool consumed() const { return consumed_; }
  const std::vector<Entry>& entries() const { return entries_; }

  static Tape* active();

 private:
  friend class TapeScope;
  std::vector<Entry> entries_;
  bool consumed_ = false;
};

// Makes `tape` the recording target on this thread for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Runs backward on the active tape.
void backward(const Tensor& loss);

namespace detail {
// True when an op over `inputs` must be recorded.
bool wants_grad(std::initializer_list<const Tensor*> inputs);
Tensor make_result(Shape shape, std::vector<double> data, bool tracked);
}  // namespace detail

// ---- ops -----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
// Batched matmul: [B x m x k] * [B x k x n] -> [B x m x n].
Tensor bmm(const Tensor& a, const Tensor& b);
// x[... x in] * w[in x out] + bias[out]; bias may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
// Adds bias[n] to every row of x[... x n].
Tensor add_bias(const Tensor& x, const Tensor& bias);

Tensor gelu(const Tensor& x);
Tensor softmax(const Tensor& x, std::size_t axis);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-6);

Tensor reshape(const Tensor& x, const Shape& shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& order);
Tensor transpose(const Tensor& x, std::size_t axis0, std::size_t axis1);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);

Tensor sum(const Tensor& x);
// Mean over axis 0 of a [n x d] tensor -> [d].
Tensor mean_rows(const Tensor& x);

// Sliding local windows of a [C x H x W] map -> [C*k*k x L] columns, channel
// major then window offset (row-major within the window).
Tensor unfold(const Tensor& x, std::size_t kernel, std::size_t stride, std::size_t pad);
// Inverse scatter of unfold; overlapping contributions are summed.
Tensor fold(const Tensor& cols, std::size_t channels, std::size_t height, std::size_t width,
            std::size_t kernel, std::size_t stride, std::size_t pad);

// Elementwise keep-mask scaled by 1/(1-p) (inverted dropout). `mask` holds 0/1.
Tensor apply_mask(const Tensor& x, const std::vector<double>& mask, double keep_scale);

// Throws NumericalError naming `label` on the first NaN/Inf value.
void check_finite(const Tensor& x, const std::string& label);

}  // namespace mivolo
