#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <vector>

#include "mscd/parallel.hpp"
#include "mscd/tensor.hpp"

namespace mscd {

enum class Padding { Same, None };
enum class Mode { Train, Eval };

namespace detail {

struct ConvGeometry {
  Index channels, rows, cols;  // input
  Index kernel_rows, kernel_cols;
  Index pad_rows, pad_cols;
  Index out_rows, out_cols;

  Index patch_size() const { return channels * kernel_rows * kernel_cols; }
  bool pointwise() const { return kernel_rows == 1 && kernel_cols == 1; }
  /// Output rows processed per im2col block; keeps the column buffer small.
  Index block_rows() const { return std::max<Index>(1, 4096 / out_cols); }
};

template <typename Scalar>
ConvGeometry conv_geometry(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel, Padding padding) {
  require_rank4(input, "conv input");
  require_rank4(kernel, "conv kernel");
  if (input.dim(1) != kernel.dim(1)) {
    throw ShapeError("conv input has " + std::to_string(input.dim(1)) + " channels, kernel expects " +
                     std::to_string(kernel.dim(1)));
  }
  ConvGeometry g{};
  g.channels = input.dim(1);
  g.rows = input.dim(2);
  g.cols = input.dim(3);
  g.kernel_rows = kernel.dim(2);
  g.kernel_cols = kernel.dim(3);
  if (padding == Padding::Same) {
    if (g.kernel_rows % 2 == 0 || g.kernel_cols % 2 == 0) {
      throw ShapeError("same padding needs odd kernel sizes, got " + to_string(kernel.shape()));
    }
    g.pad_rows = g.kernel_rows / 2;
    g.pad_cols = g.kernel_cols / 2;
  }
  g.out_rows = g.rows + 2 * g.pad_rows - g.kernel_rows + 1;
  g.out_cols = g.cols + 2 * g.pad_cols - g.kernel_cols + 1;
  if (g.out_rows <= 0 || g.out_cols <= 0) {
    throw ShapeError("conv kernel " + to_string(kernel.shape()) + " larger than input " +
                     to_string(input.shape()));
  }
  return g;
}

/// Fills `cols` (patch_size x block pixels) for output rows [row0, row1).
template <typename Scalar>
void im2col(const Scalar* plane, const ConvGeometry& g, Index row0, Index row1,
            Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& cols) {
  const Index width = (row1 - row0) * g.out_cols;
  cols.resize(g.patch_size(), width);
  for (Index c = 0; c < g.channels; ++c) {
    const Scalar* src = plane + c * g.rows * g.cols;
    for (Index ki = 0; ki < g.kernel_rows; ++ki) {
      for (Index kj = 0; kj < g.kernel_cols; ++kj) {
        Scalar* dst = cols.data() + ((c * g.kernel_rows + ki) * g.kernel_cols + kj) * width;
        const Index shift = kj - g.pad_cols;
        const Index lo = std::max<Index>(0, -shift);
        const Index hi = std::min<Index>(g.out_cols, g.cols - shift);
        for (Index r = row0; r < row1; ++r, dst += g.out_cols) {
          const Index in_r = r + ki - g.pad_rows;
          if (in_r < 0 || in_r >= g.rows || lo >= hi) {
            std::fill(dst, dst + g.out_cols, Scalar(0));
            continue;
          }
          std::fill(dst, dst + lo, Scalar(0));
          std::copy(src + in_r * g.cols + lo + shift, src + in_r * g.cols + hi + shift, dst + lo);
          std::fill(dst + hi, dst + g.out_cols, Scalar(0));
        }
      }
    }
  }
}

/// Geometry of the input-gradient pass: a correlation of the upstream
/// gradient with the spatially flipped, channel-transposed kernel.
inline ConvGeometry transposed_geometry(const ConvGeometry& g, Index out_channels) {
  ConvGeometry t{};
  t.channels = out_channels;
  t.rows = g.out_rows;
  t.cols = g.out_cols;
  t.kernel_rows = g.kernel_rows;
  t.kernel_cols = g.kernel_cols;
  t.pad_rows = g.kernel_rows - 1 - g.pad_rows;
  t.pad_cols = g.kernel_cols - 1 - g.pad_cols;
  t.out_rows = g.rows;
  t.out_cols = g.cols;
  return t;
}

/// Cin x (Cout * kh * kw) matrix of the kernel flipped in both spatial axes.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> flipped_kernel(const Tensor<Scalar>& kernel) {
  const Index cout = kernel.dim(0), cin = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> flipped(cin, cout * kh * kw);
  for (Index co = 0; co < cout; ++co) {
    for (Index ci = 0; ci < cin; ++ci) {
      for (Index i = 0; i < kh; ++i) {
        for (Index j = 0; j < kw; ++j) {
          flipped(ci, (co * kh + (kh - 1 - i)) * kw + (kw - 1 - j)) = kernel.at(co, ci, i, j);
        }
      }
    }
  }
  return flipped;
}

/// out (Cout x out pixels) = weights * im2col(plane), processed in row blocks.
template <typename Scalar, typename Weights, typename Out>
void correlate(const Scalar* plane, const ConvGeometry& g, const Weights& weights, Out&& out,
               Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& cols) {
  const Index step = g.block_rows();
  for (Index r0 = 0; r0 < g.out_rows; r0 += step) {
    const Index r1 = std::min(g.out_rows, r0 + step);
    im2col(plane, g, r0, r1, cols);
    out.middleCols(r0 * g.out_cols, cols.cols()).noalias() = weights * cols;
  }
}

}  // namespace detail

/// Input saved by conv2d_forward for the backward pass.
template <typename Scalar>
struct Conv2dRecord {
  Tensor<Scalar> input;
  Padding padding = Padding::Same;

  bool valid() const { return !input.empty(); }
};

template <typename Scalar>
struct Conv2dGrads {
  Tensor<Scalar> input;  // empty when not requested
  Tensor<Scalar> kernel;
  Tensor<Scalar> bias;
};

/// Stride-1 cross-correlation plus per-output-channel bias.
/// Same padding zero-pads so the output keeps the input's spatial size.
template <typename Scalar>
Tensor<Scalar> conv2d_forward(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel,
                              const Tensor<Scalar>& bias, Padding padding,
                              Conv2dRecord<Scalar>* record = nullptr) {
  using Matrix = typename Tensor<Scalar>::Matrix;
  const auto g = detail::conv_geometry(input, kernel, padding);
  const Index out_channels = kernel.dim(0);
  if (bias.size() != out_channels) {
    throw ShapeError("conv bias has " + std::to_string(bias.size()) + " entries, expected " +
                     std::to_string(out_channels));
  }
  Tensor<Scalar> output({input.dim(0), out_channels, g.out_rows, g.out_cols});
  const typename Tensor<Scalar>::ConstMatrixMap weights(kernel.data(), out_channels, g.patch_size());
  const Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> b(bias.data(), out_channels);

  parallel_for(input.dim(0), [&](Index n) {
    auto out = output.sample(n);
    if (g.pointwise()) {
      out.noalias() = weights * input.sample(n);
    } else {
      Matrix cols;
      detail::correlate(input.data() + n * g.channels * g.rows * g.cols, g, weights, out, cols);
    }
    out.colwise() += b;
  });

  if (record != nullptr) {
    record->input = input;
    record->padding = padding;
  }
  return output;
}

template <typename Scalar>
Conv2dGrads<Scalar> conv2d_backward(const Conv2dRecord<Scalar>& record, const Tensor<Scalar>& kernel,
                                    const Tensor<Scalar>& grad_output, bool need_input_grad = true) {
  using Matrix = typename Tensor<Scalar>::Matrix;
  if (!record.valid()) throw Error("conv2d_backward called without a recorded forward pass");
  const auto& input = record.input;
  const auto g = detail::conv_geometry(input, kernel, record.padding);
  const Index batch = input.dim(0);
  const Index out_channels = kernel.dim(0);
  if (grad_output.shape() != Shape{batch, out_channels, g.out_rows, g.out_cols}) {
    throw ShapeError("conv upstream gradient has shape " + to_string(grad_output.shape()));
  }

  Conv2dGrads<Scalar> grads;
  if (need_input_grad) grads.input = Tensor<Scalar>(input.shape());
  const typename Tensor<Scalar>::ConstMatrixMap weights(kernel.data(), out_channels, g.patch_size());

  // Per-sample partials, reduced in sample order so the result does not
  // depend on the worker count.
  std::vector<Matrix> kernel_parts(static_cast<std::size_t>(batch));
  std::vector<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> bias_parts(static_cast<std::size_t>(batch));
  const auto tg = detail::transposed_geometry(g, out_channels);
  Matrix flipped;
  if (need_input_grad && !g.pointwise()) flipped = detail::flipped_kernel(kernel);

  parallel_for(batch, [&](Index n) {
    const auto dy = grad_output.sample(n);
    auto& dw = kernel_parts[static_cast<std::size_t>(n)];
    bias_parts[static_cast<std::size_t>(n)] = dy.rowwise().sum();
    if (g.pointwise()) {
      dw.noalias() = dy * input.sample(n).transpose();
      if (need_input_grad) grads.input.sample(n).noalias() = weights.transpose() * dy;
      return;
    }
    dw = Matrix::Zero(out_channels, g.patch_size());
    Matrix cols;
    const Index step = g.block_rows();
    const Scalar* plane = input.data() + n * g.channels * g.rows * g.cols;
    for (Index r0 = 0; r0 < g.out_rows; r0 += step) {
      const Index r1 = std::min(g.out_rows, r0 + step);
      const auto dy_block = dy.middleCols(r0 * g.out_cols, (r1 - r0) * g.out_cols);
      detail::im2col(plane, g, r0, r1, cols);
      dw.noalias() += dy_block * cols.transpose();
    }
    if (need_input_grad) {
      detail::correlate(grad_output.data() + n * out_channels * g.out_rows * g.out_cols, tg, flipped,
                        grads.input.sample(n), cols);
    }
  });

  grads.kernel = Tensor<Scalar>(kernel.shape());
  grads.bias = Tensor<Scalar>({out_channels});
  typename Tensor<Scalar>::MatrixMap dkernel(grads.kernel.data(), out_channels, g.patch_size());
  Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> dbias(grads.bias.data(), out_channels);
  for (Index n = 0; n < batch; ++n) {
    dkernel += kernel_parts[static_cast<std::size_t>(n)];
    dbias += bias_parts[static_cast<std::size_t>(n)];
  }
  return grads;
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& t) {
  Tensor<Scalar> out(t.shape());
  out.array() = t.array().max(Scalar(0));
  return out;
}

/// Gradient passes where the forward input was strictly positive.
template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& grad_output) {
  if (!input.same_shape(grad_output)) throw ShapeError("relu_backward shape mismatch");
  Tensor<Scalar> out(input.shape());
  out.array() = (input.array() > Scalar(0)).select(grad_output.array(), Scalar(0));
  return out;
}

/// Per-channel running statistics for batch normalization.
template <typename Scalar>
struct BatchNormStats {
  Tensor<Scalar> mean;
  Tensor<Scalar> var;

  explicit BatchNormStats(Index channels = 1)
      : mean({channels}, Scalar(0)), var({channels}, Scalar(1)) {}
};

template <typename Scalar>
struct BatchNormRecord {
  Tensor<Scalar> normalized;        // (x - mean) * inv_std
  std::vector<Scalar> inv_std;      // per channel
  Mode mode = Mode::Train;

  bool valid() const { return !normalized.empty(); }
};

template <typename Scalar>
struct BatchNormGrads {
  Tensor<Scalar> input;
  Tensor<Scalar> scale;
  Tensor<Scalar> shift;
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

/// Train mode normalizes with batch statistics over (batch, rows, cols) and
/// folds them into `running` (biased variance for normalization, unbiased for
/// the running estimate). Eval mode uses `running` and leaves it untouched.
template <typename Scalar>
Tensor<Scalar> batchnorm_forward(const Tensor<Scalar>& x, const Tensor<Scalar>& scale,
                                 const Tensor<Scalar>& shift, BatchNormStats<Scalar>& running, Mode mode,
                                 BatchNormRecord<Scalar>* record = nullptr) {
  require_rank4(x, "batchnorm input");
  const Index channels = x.dim(1);
  if (scale.size() != channels || shift.size() != channels || running.mean.size() != channels ||
      running.var.size() != channels) {
    throw ShapeError("batchnorm parameters do not match " + std::to_string(channels) + " channels");
  }
  const Index batch = x.dim(0);
  const Index plane = x.plane();
  const double count = static_cast<double>(batch * plane);

  Tensor<Scalar> normalized(x.shape());
  Tensor<Scalar> out(x.shape());
  std::vector<Scalar> inv_std(static_cast<std::size_t>(channels));
  for (Index c = 0; c < channels; ++c) {
    double mean = 0.0;
    double var = 0.0;
    if (mode == Mode::Train) {
      for (Index n = 0; n < batch; ++n) mean += x.sample(n).row(c).template cast<double>().sum();
      mean /= count;
      for (Index n = 0; n < batch; ++n) {
        var += (x.sample(n).row(c).template cast<double>().array() - mean).square().sum();
      }
      var /= count;
      const double unbiased = count > 1 ? var * count / (count - 1) : var;
      running.mean[c] = static_cast<Scalar>((1 - kBatchNormMomentum) * running.mean[c] + kBatchNormMomentum * mean);
      running.var[c] = static_cast<Scalar>((1 - kBatchNormMomentum) * running.var[c] + kBatchNormMomentum * unbiased);
    } else {
      mean = running.mean[c];
      var = running.var[c];
    }
    const auto istd = static_cast<Scalar>(1.0 / std::sqrt(var + kBatchNormEps));
    const auto m = static_cast<Scalar>(mean);
    inv_std[static_cast<std::size_t>(c)] = istd;
    for (Index n = 0; n < batch; ++n) {
      auto xhat = normalized.sample(n).row(c);
      xhat = (x.sample(n).row(c).array() - m) * istd;
      out.sample(n).row(c) = xhat.array() * scale[c] + shift[c];
    }
  }
  if (record != nullptr) {
    record->normalized = std::move(normalized);
    record->inv_std = std::move(inv_std);
    record->mode = mode;
  }
  return out;
}

template <typename Scalar>
BatchNormGrads<Scalar> batchnorm_backward(const BatchNormRecord<Scalar>& record, const Tensor<Scalar>& scale,
                                          const Tensor<Scalar>& grad_output) {
  if (!record.valid()) throw Error("batchnorm_backward called without a recorded forward pass");
  const auto& xhat = record.normalized;
  if (!xhat.same_shape(grad_output)) throw ShapeError("batchnorm upstream gradient shape mismatch");
  const Index channels = xhat.dim(1);
  const Index batch = xhat.dim(0);
  const double count = static_cast<double>(batch * xhat.plane());

  BatchNormGrads<Scalar> grads{Tensor<Scalar>(xhat.shape()), Tensor<Scalar>({channels}),
                               Tensor<Scalar>({channels})};
  for (Index c = 0; c < channels; ++c) {
    double sum_dy = 0.0;
    double sum_dy_xhat = 0.0;
    for (Index n = 0; n < batch; ++n) {
      const auto dy = grad_output.sample(n).row(c).template cast<double>();
      sum_dy += dy.sum();
      sum_dy_xhat += (dy.array() * xhat.sample(n).row(c).template cast<double>().array()).sum();
    }
    grads.shift[c] = static_cast<Scalar>(sum_dy);
    grads.scale[c] = static_cast<Scalar>(sum_dy_xhat);

    const Scalar gain = scale[c] * record.inv_std[static_cast<std::size_t>(c)];
    if (record.mode == Mode::Eval) {
      for (Index n = 0; n < batch; ++n) grads.input.sample(n).row(c) = grad_output.sample(n).row(c) * gain;
      continue;
    }
    // dx = gain * (dy - mean(dy) - xhat * mean(dy * xhat))
    const auto mean_dy = static_cast<Scalar>(sum_dy / count);
    const auto mean_dy_xhat = static_cast<Scalar>(sum_dy_xhat / count);
    for (Index n = 0; n < batch; ++n) {
      grads.input.sample(n).row(c) =
          gain * (grad_output.sample(n).row(c).array() - mean_dy - xhat.sample(n).row(c).array() * mean_dy_xhat);
    }
  }
  return grads;
}

}  // namespace mscd
