#include "vora/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "vora/errors.hpp"

VORA_BEGIN_NAMESPACE

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

std::size_t numel_of(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t extent : shape) n *= extent;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::vector<real>& detail::TensorImpl::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0f);
  return grad;
}

Tensor Tensor::zeros(const Shape& shape) { return full(shape, 0.0f); }

Tensor Tensor::full(const Shape& shape, real value) {
  return from(shape, std::vector<real>(numel_of(shape), value));
}

Tensor Tensor::from(const Shape& shape, std::vector<real> values) {
  for (std::size_t extent : shape) {
    if (extent == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (numel_of(shape) != values.size()) {
    throw ShapeError("shape " + shape_str(shape) + " needs " + std::to_string(numel_of(shape)) +
                     " values, got " + std::to_string(values.size()));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = shape;
  impl->data = std::move(values);
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(real value) { return from({1}, {value}); }

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= impl_->shape.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(impl_->shape));
  }
  return impl_->shape[axis];
}

std::size_t Tensor::numel() const { return impl_->data.size(); }

std::span<const real> Tensor::data() const { return impl_->data; }
std::span<real> Tensor::mutable_data() { return impl_->data; }

real Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str(shape()));
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool value) {
  impl_->requires_grad = value;
  return *this;
}

bool Tensor::has_grad() const { return !impl_->grad.empty(); }
std::span<const real> Tensor::grad() const { return impl_->grad; }
void Tensor::clear_grad() {
  impl_->grad.clear();
  impl_->grad.shrink_to_fit();
}

bool Tensor::has_node() const { return impl_->node != nullptr; }

void Tensor::backward() const {
  if (numel() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " + shape_str(shape()));
  }
  if (!impl_->requires_grad) return;

  // Collect every recorded tensor reachable from the loss.
  std::vector<detail::TensorImpl*> order;
  std::unordered_set<const detail::TensorImpl*> seen;
  std::vector<detail::TensorImpl*> stack{impl_.get()};
  seen.insert(impl_.get());
  while (!stack.empty()) {
    detail::TensorImpl* t = stack.back();
    stack.pop_back();
    if (!t->node) continue;
    order.push_back(t);
    for (const auto& in : t->node->inputs) {
      if (in->requires_grad && seen.insert(in.get()).second) stack.push_back(in.get());
    }
  }
  std::sort(order.begin(), order.end(), [](const detail::TensorImpl* a, const detail::TensorImpl* b) {
    return a->node->seq > b->node->seq;
  });

  impl_->grad_buffer()[0] += 1.0f;
  for (detail::TensorImpl* t : order) {
    if (t->grad.empty()) continue;
    t->node->backward(*t);
  }
}

Tensor Tensor::clone() const {
  Tensor out = from(shape(), impl_->data);
  out.impl_->requires_grad = impl_->requires_grad;
  return out;
}

Tensor Tensor::detach() const { return from(shape(), impl_->data); }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

VORA_END_NAMESPACE
