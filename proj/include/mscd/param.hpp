#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mscd/rng.hpp"
#include "mscd/tensor.hpp"

namespace mscd {

/// A trainable tensor (with gradient buffer) and its momentum buffer.
struct Parameter {
  std::string name;
  TensorF value;
  TensorF velocity;
};

/// Ordered, named collection of parameters. Insertion order is the iteration
/// and serialization order.
class ParamSet {
 public:
  /// Adds a parameter; allocates its gradient and a zero momentum buffer.
  /// Returns the parameter's index.
  std::size_t add(std::string name, TensorF value);

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  /// Throws if no parameter has this name.
  Parameter& find(const std::string& name);
  const Parameter& find(const std::string& name) const;

  /// Total scalar count over all parameters.
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<Parameter> params_;
};

/// v <- momentum * v + grad; w <- w - lr * v. Gradients are left in place.
void sgd_momentum_step(ParamSet& params, float lr, float momentum);

/// Normal(0, sqrt(2 / fan_in)) samples for a Cout x Cin x kh x kw kernel.
TensorF he_init(const Shape& kernel_shape, Rng& rng);

}  // namespace mscd
