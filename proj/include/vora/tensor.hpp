#pragma once

#include "vora/real.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

VORA_BEGIN_NAMESPACE

using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorImpl;

// One recorded operation. `seq` is the global recording index, so sorting
// reachable nodes by descending `seq` replays the tape in reverse order.
struct Node {
  std::uint64_t seq = 0;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  // Reads out.grad, accumulates into inputs[i]->grad for inputs that
  // require grad.
  std::function<void(const TensorImpl& out)> backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<real> data;
  std::vector<real> grad;  // empty == absent
  bool requires_grad = false;
  std::shared_ptr<Node> node;

  // Allocates a zero gradient if absent and returns it.
  std::vector<real>& grad_buffer();
};

}  // namespace detail

/// Dense row-major float32 tensor. Copies are shallow handles to the same
/// storage, like framework tensors; use clone() for an independent copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& shape);
  static Tensor full(const Shape& shape, real value);
  static Tensor from(const Shape& shape, std::vector<real> values);
  static Tensor scalar(real value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;

  std::span<const real> data() const;
  std::span<real> mutable_data();
  real at(std::size_t flat_index) const { return data()[flat_index]; }
  real item() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool value);
  bool has_grad() const;
  std::span<const real> grad() const;
  void clear_grad();

  /// True when this tensor is the output of a recorded operation.
  bool has_node() const;

  /// Reverse-mode sweep from a scalar tensor. Gradients accumulate into
  /// every reachable tensor that requires grad.
  void backward() const;

  /// Deep copy of data with no graph history; keeps requires_grad.
  Tensor clone() const;
  /// Shares nothing with the graph; requires_grad false.
  Tensor detach() const;

  std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// While alive, operations on the current thread record no graph.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

VORA_END_NAMESPACE
