#pragma once

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace adx {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct Node;
}

/// Dense row-major tensor of 64-bit floats with reverse-mode autodiff.
///
/// A Tensor is a cheap handle onto a shared graph node. Operations create new
/// nodes; when any input requires a gradient (and grad mode is enabled) the
/// node records its parents and a backward function. Shapes never change
/// after construction.
///
/// Gradient semantics: backward() recomputes gradients of interior nodes from
/// scratch on every call, while gradients of leaves accumulate across calls
/// until zero_grad() is invoked. Optimisers reset leaf gradients explicitly.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  /// Direct write access. Intended for parameter initialisation and optimiser
  /// updates on leaves; writing into an interior node invalidates its graph.
  std::span<double> mutable_values();
  double operator[](std::size_t flat_index) const { return values()[flat_index]; }
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool is_leaf() const;

  /// Gradient buffer; empty if backward() has not reached this tensor.
  std::span<const double> grad() const;
  bool has_grad() const;
  void zero_grad();

  /// Back-propagates from this scalar through the recorded graph.
  void backward() const;

  /// New leaf with a copy of the values and no history.
  Tensor detach() const;

  // Internal: graph node access for the autograd machinery.
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Disables graph recording on the current thread for its lifetime.
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

}  // namespace adx
