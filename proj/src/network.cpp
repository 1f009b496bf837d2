#include "mscd/network.hpp"

namespace mscd {

void Arch::validate() const {
  if (projection_layers < 1) throw Error("arch: projection_layers (L1) must be >= 1");
  if (head_layers < 1) throw Error("arch: head_layers (L2) must be >= 1");
  if (clusters < 2) throw Error("arch: clusters (K) must be >= 2");
  if (width < 1) throw Error("arch: width must be >= 1");
  if (input_channels < 1) throw Error("arch: input_channels must be >= 1");
}

ConvStack::ConvStack(const std::string& prefix, std::vector<LayerShape> layers, Rng& rng)
    : prefix_(prefix), layers_(std::move(layers)) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& shape = layers_[i];
    const std::string id = std::to_string(i);
    Slots slot{};
    slot.weight = params_.add(prefix + ".conv" + id + ".weight",
                              he_init({shape.out_channels, shape.in_channels, shape.kernel_size, shape.kernel_size}, rng));
    slot.bias = params_.add(prefix + ".conv" + id + ".bias", TensorF({shape.out_channels}));
    if (shape.activated) {
      slot.scale = params_.add(prefix + ".bn" + id + ".scale", TensorF({shape.out_channels}, 1.0f));
      slot.shift = params_.add(prefix + ".bn" + id + ".shift", TensorF({shape.out_channels}));
      slot.running = running_.size();
      running_.emplace_back(shape.out_channels);
    }
    slots_.push_back(slot);
  }
}

TensorF ConvStack::forward(const TensorF& x, Mode mode, Tape* tape) {
  if (tape != nullptr) tape->assign(layers_.size(), LayerTape{});
  TensorF h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& slot = slots_[i];
    LayerTape* lt = tape != nullptr ? &(*tape)[i] : nullptr;
    h = conv2d_forward(h, params_[slot.weight].value, params_[slot.bias].value, Padding::Same,
                       lt != nullptr ? &lt->conv : nullptr);
    if (!layers_[i].activated) continue;
    TensorF activated = relu(h);
    if (lt != nullptr) lt->pre_relu = std::move(h);
    h = batchnorm_forward(activated, params_[slot.scale].value, params_[slot.shift].value,
                          running_[slot.running], mode, lt != nullptr ? &lt->norm : nullptr);
  }
  return h;
}

TensorF ConvStack::backward(const Tape& tape, TensorF grad, bool need_input_grad) {
  if (tape.size() != layers_.size()) throw Error("conv stack backward: tape does not match " + prefix_);
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const auto& slot = slots_[i];
    const auto& lt = tape[i];
    if (layers_[i].activated) {
      auto bn = batchnorm_backward(lt.norm, params_[slot.scale].value, grad);
      params_[slot.scale].value.grad() += bn.scale.array();
      params_[slot.shift].value.grad() += bn.shift.array();
      grad = relu_backward(lt.pre_relu, bn.input);
    }
    const bool want_input = i > 0 || need_input_grad;
    auto conv = conv2d_backward(lt.conv, params_[slot.weight].value, grad, want_input);
    params_[slot.weight].value.grad() += conv.kernel.array();
    params_[slot.bias].value.grad() += conv.bias.array();
    grad = std::move(conv.input);
  }
  return grad;
}

namespace {

std::vector<LayerShape> projection_shapes(const Arch& arch) {
  std::vector<LayerShape> shapes;
  Index in = arch.input_channels;
  for (int i = 0; i < arch.projection_layers; ++i) {
    shapes.push_back({in, arch.width, 3, true});
    in = arch.width;
  }
  return shapes;
}

std::vector<LayerShape> head_shapes(const Arch& arch) {
  std::vector<LayerShape> shapes;
  for (int i = 0; i < arch.head_layers; ++i) {
    const bool last = i + 1 == arch.head_layers;
    shapes.push_back({arch.width, last ? arch.clusters : arch.width, 1, !last});
  }
  return shapes;
}

}  // namespace

SiameseCDModel::SiameseCDModel(const Arch& arch, Rng& rng) : arch_(arch) {
  arch_.validate();
  opt_ = ConvStack("f_opt", projection_shapes(arch_), rng);
  if (!arch_.shared_projections) sar_ = ConvStack("f_sar", projection_shapes(arch_), rng);
  head_ = ConvStack("h", head_shapes(arch_), rng);
}

TensorF SiameseCDModel::forward_branch(ConvStack& projection, const TensorF& x, Mode mode, BranchTape* tape) {
  require_rank4(x, "model input");
  if (x.dim(1) != arch_.input_channels) {
    throw ShapeError("model input has " + std::to_string(x.dim(1)) + " channels, expected " +
                     std::to_string(arch_.input_channels));
  }
  TensorF features = projection.forward(x, mode, tape != nullptr ? &tape->projection : nullptr);
  return head_.forward(features, mode, tape != nullptr ? &tape->head : nullptr);
}

void SiameseCDModel::backward_branch(ConvStack& projection, const BranchTape& tape, const TensorF& grad_y) {
  TensorF grad_features = head_.backward(tape.head, grad_y, true);
  projection.backward(tape.projection, std::move(grad_features), false);
}

TensorF SiameseCDModel::forward_opt(const TensorF& x, Mode mode, BranchTape* tape) {
  return forward_branch(f_opt(), x, mode, tape);
}

TensorF SiameseCDModel::forward_sar(const TensorF& z, Mode mode, BranchTape* tape) {
  return forward_branch(f_sar(), z, mode, tape);
}

void SiameseCDModel::backward_opt(const BranchTape& tape, const TensorF& grad_y) {
  backward_branch(f_opt(), tape, grad_y);
}

void SiameseCDModel::backward_sar(const BranchTape& tape, const TensorF& grad_y) {
  backward_branch(f_sar(), tape, grad_y);
}

std::vector<ConvStack*> SiameseCDModel::stacks() {
  std::vector<ConvStack*> out{&opt_};
  if (!arch_.shared_projections) out.push_back(&sar_);
  out.push_back(&head_);
  return out;
}

std::vector<const ConvStack*> SiameseCDModel::stacks() const {
  std::vector<const ConvStack*> out{&opt_};
  if (!arch_.shared_projections) out.push_back(&sar_);
  out.push_back(&head_);
  return out;
}

void SiameseCDModel::zero_grad() {
  for (auto* s : stacks()) s->params().zero_grad();
}

void SiameseCDModel::sgd_step(float lr, float momentum) {
  for (auto* s : stacks()) sgd_momentum_step(s->params(), lr, momentum);
}

std::size_t SiameseCDModel::parameter_count() const {
  std::size_t total = 0;
  for (const auto* s : stacks()) total += s->params().scalar_count();
  return total;
}

SiameseCDModel build_model(const Arch& arch, Rng& rng) { return SiameseCDModel(arch, rng); }

}  // namespace mscd
