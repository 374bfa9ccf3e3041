#pragma once

// Extension point for defining differentiable operations outside the core.

#include <functional>
#include <span>
#include <vector>

#include "adx/core/tensor.hpp"

namespace adx::autograd {

/// What a backward function sees: the gradient flowing into the op's output,
/// and accessors for its inputs. input_grad(i) is empty when input i does
/// not require a gradient; otherwise contributions must be added to it.
class BackwardContext {
 public:
  BackwardContext(std::span<const double> out_grad, std::span<const double> out_value,
                  std::span<const Tensor> inputs);

  std::span<const double> out_grad() const { return out_grad_; }
  std::span<const double> out_value() const { return out_value_; }
  std::span<const double> input_value(std::size_t i) const;
  const Shape& input_shape(std::size_t i) const;
  std::span<double> input_grad(std::size_t i) const;
  bool needs_grad(std::size_t i) const;

 private:
  std::span<const double> out_grad_;
  std::span<const double> out_value_;
  std::span<const Tensor> inputs_;
};

using BackwardFn = std::function<void(const BackwardContext&)>;

/// Creates the output tensor of an operation. The backward function is kept
/// only if graph recording is enabled and some input requires a gradient.
Tensor record(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
              BackwardFn backward);

}  // namespace adx::autograd
