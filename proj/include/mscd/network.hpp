#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mscd/ops.hpp"
#include "mscd/param.hpp"
#include "mscd/rng.hpp"

namespace mscd {

/// Architecture of one branch: `projection_layers` 3x3 convs of `width`
/// kernels, then `head_layers` 1x1 convs ending in `clusters` kernels.
/// Every layer but the last is followed by ReLU and then batch norm.
struct Arch {
  int projection_layers = 4;
  int head_layers = 1;
  int clusters = 4;
  int width = 64;
  int input_channels = 3;
  bool shared_projections = false;

  void validate() const;
  friend bool operator==(const Arch&, const Arch&) = default;
};

struct LayerShape {
  Index in_channels;
  Index out_channels;
  Index kernel_size;
  bool activated;  // ReLU + batch norm after the conv
};

/// A sequence of conv layers with their parameters and batch-norm state.
class ConvStack {
 public:
  struct LayerTape {
    Conv2dRecord<float> conv;
    TensorF pre_relu;
    BatchNormRecord<float> norm;
  };
  using Tape = std::vector<LayerTape>;

  ConvStack() = default;
  ConvStack(const std::string& prefix, std::vector<LayerShape> layers, Rng& rng);

  TensorF forward(const TensorF& x, Mode mode, Tape* tape = nullptr);

  /// Accumulates parameter gradients from `grad_output`. Returns the input
  /// gradient, or an empty tensor when `need_input_grad` is false.
  TensorF backward(const Tape& tape, TensorF grad_output, bool need_input_grad);

  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  std::vector<BatchNormStats<float>>& running() { return running_; }
  const std::vector<BatchNormStats<float>>& running() const { return running_; }
  const std::vector<LayerShape>& layers() const { return layers_; }
  const std::string& prefix() const { return prefix_; }

 private:
  struct Slots {
    std::size_t weight, bias, scale, shift, running;
  };

  std::string prefix_;
  std::vector<LayerShape> layers_;
  std::vector<Slots> slots_;
  ParamSet params_;
  std::vector<BatchNormStats<float>> running_;
};

/// Two-branch network: sensor-specific projections f_opt and f_sar feeding
/// one shared prediction head h.
class SiameseCDModel {
 public:
  struct BranchTape {
    ConvStack::Tape projection;
    ConvStack::Tape head;
  };

  SiameseCDModel(const Arch& arch, Rng& rng);

  const Arch& arch() const { return arch_; }

  /// y = h(f_opt(x)); x is N x input_channels x R x C, y is N x K x R x C.
  TensorF forward_opt(const TensorF& x, Mode mode, BranchTape* tape = nullptr);
  /// y = h(f_sar(z)).
  TensorF forward_sar(const TensorF& z, Mode mode, BranchTape* tape = nullptr);

  /// Accumulate gradients of a loss with respect to the branch output.
  void backward_opt(const BranchTape& tape, const TensorF& grad_y);
  void backward_sar(const BranchTape& tape, const TensorF& grad_y);

  ConvStack& f_opt() { return opt_; }
  ConvStack& f_sar() { return arch_.shared_projections ? opt_ : sar_; }
  ConvStack& head() { return head_; }
  const ConvStack& f_opt() const { return opt_; }
  const ConvStack& f_sar() const { return arch_.shared_projections ? opt_ : sar_; }
  const ConvStack& head() const { return head_; }

  /// Distinct stacks in serialization order: f_opt, f_sar (unless shared), h.
  std::vector<ConvStack*> stacks();
  std::vector<const ConvStack*> stacks() const;

  void zero_grad();
  void sgd_step(float lr, float momentum);
  std::size_t parameter_count() const;

 private:
  TensorF forward_branch(ConvStack& projection, const TensorF& x, Mode mode, BranchTape* tape);
  void backward_branch(ConvStack& projection, const BranchTape& tape, const TensorF& grad_y);

  Arch arch_;
  ConvStack opt_;
  ConvStack sar_;
  ConvStack head_;
};

/// He-initialized model; deterministic for a given rng state.
SiameseCDModel build_model(const Arch& arch, Rng& rng);

/// Checkpoint file: ASCII manifest (magic "MSCD1", architecture, one line per
/// tensor with name and shape) followed by raw little-endian float32 payloads
/// in manifest order. Holds parameters and batch-norm running statistics.
void save_checkpoint(const SiameseCDModel& model, const std::filesystem::path& path);
SiameseCDModel load_checkpoint(const std::filesystem::path& path);

}  // namespace mscd
