#include "mscd/param.hpp"

#include <cmath>

namespace mscd {

std::size_t ParamSet::add(std::string name, TensorF value) {
  for (const auto& p : params_) {
    if (p.name == name) throw Error("duplicate parameter name " + name);
  }
  value.ensure_grad();
  TensorF velocity(value.shape());
  params_.push_back({std::move(name), std::move(value), std::move(velocity)});
  return params_.size() - 1;
}

Parameter& ParamSet::find(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return p;
  }
  throw Error("no parameter named " + name);
}

const Parameter& ParamSet::find(const std::string& name) const {
  return const_cast<ParamSet*>(this)->find(name);
}

std::size_t ParamSet::scalar_count() const {
  std::size_t total = 0;
  for (const auto& p : params_) total += static_cast<std::size_t>(p.value.size());
  return total;
}

void ParamSet::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

void sgd_momentum_step(ParamSet& params, float lr, float momentum) {
  for (auto& p : params) {
    if (!p.value.has_grad()) throw Error("parameter " + p.name + " has no gradient");
    if (!p.velocity.same_shape(p.value)) throw ShapeError("momentum buffer shape mismatch for " + p.name);
  }
  for (auto& p : params) {
    auto v = p.velocity.array();
    v = momentum * v + p.value.grad();
    p.value.array() -= lr * v;
  }
}

TensorF he_init(const Shape& kernel_shape, Rng& rng) {
  if (kernel_shape.size() != 4) throw ShapeError("he_init expects a 4-d kernel shape, got " + to_string(kernel_shape));
  const Index fan_in = kernel_shape[1] * kernel_shape[2] * kernel_shape[3];
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  TensorF kernel(kernel_shape);
  for (Index i = 0; i < kernel.size(); ++i) kernel[i] = static_cast<float>(rng.normal(0.0, stddev));
  return kernel;
}

}  // namespace mscd
