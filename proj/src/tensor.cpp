#include "mivolo/tensor.hpp"

#include <cmath>
#include <sstream>

namespace mivolo {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> values) : impl_(std::make_shared<TensorImpl>()) {
  for (auto d : shape)
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
  if (shape_numel(shape) != values.size())
    throw DimensionError("shape " + shape_str(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
}

Tensor Tensor::zeros(const Shape& shape) { return full(shape, 0.0); }

Tensor Tensor::full(const Shape& shape, double value) {
  return Tensor(shape, std::vector<double>(shape_numel(shape), value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  return *this;
}

std::span<double> Tensor::mutable_grad() {
  impl_->ensure_grad();
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::clone() const { return Tensor(impl_->shape, impl_->data); }

// ---- tape ------------------------------------------------------------------

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* Tape::active() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

void Tape::record(std::vector<ImplPtr> inputs, ImplPtr output, BackwardFn backward) {
  if (consumed_) throw MisuseError("recording onto a tape that already ran backward; call reset()");
  output->is_leaf = false;
  output->requires_grad = true;
  entries_.push_back({std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw DimensionError("backward needs a scalar loss, got " +
                         (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  if (consumed_) throw MisuseError("backward called twice on the same tape without reset()");
  if (entries_.empty()) throw MisuseError("backward on an empty tape");
  consumed_ = true;

  auto* root = loss.impl().get();
  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->output->grad.empty()) continue;  // no path to the loss
    it->backward(*it->output);
  }
}

void Tape::reset() {
  entries_.clear();
  consumed_ = false;
}

void backward(const Tensor& loss) {
  Tape* tape = Tape::active();
  if (!tape) throw MisuseError("backward with no active tape");
  tape->backward(loss);
}

namespace detail {

bool wants_grad(std::initializer_list<const Tensor*> inputs) {
  if (!Tape::active()) return false;
  for (const Tensor* t : inputs)
    if (t && t->defined() && t->requires_grad()) return true;
  return false;
}

Tensor make_result(Shape shape, std::vector<double> data, bool tracked) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = tracked;
  impl->is_leaf = !tracked;
  return Tensor(std::move(impl));
}

}  // namespace detail

void check_finite(const Tensor& x, const std::string& label) {
  auto values = x.data();
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      std::ostringstream os;
      os << label << ": non-finite value " << values[i] << " at flat index " << i << " of "
         << shape_str(x.shape());
      throw NumericalError(os.str());
    }
  }
}

}  // namespace mivolo
