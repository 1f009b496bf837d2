#include "mscd/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>

#include "mscd/losses.hpp"
#include "mscd/ops.hpp"
#include "mscd/rng.hpp"

namespace mscd {

namespace {

TensorF random_tensor(const Shape& shape, Rng& rng, double scale = 1.0) {
  TensorF t(shape);
  for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<float>(rng.normal(0.0, scale));
  return t;
}

/// Random tensor whose entries satisfy |x| > margin.
TensorF away_from_zero(const Shape& shape, Rng& rng, double margin) {
  TensorF t(shape);
  for (Index i = 0; i < t.size(); ++i) {
    double v = 0.0;
    do {
      v = rng.normal();
    } while (std::abs(v) <= margin);
    t[i] = static_cast<float>(v);
  }
  return t;
}

using TensorD = Tensor<double>;

/// Numeric gradient of `loss` with respect to `target` by central differences.
/// The loss is evaluated through the double instantiation of the operator so
/// rounding in the difference quotient stays far below the tolerance.
TensorF numeric_gradient(TensorD& target, double step, const std::function<double()>& loss) {
  TensorF grad(target.shape());
  for (Index i = 0; i < target.size(); ++i) {
    const double saved = target[i];
    target[i] = saved + step;
    const double up = loss();
    target[i] = saved - step;
    const double down = loss();
    target[i] = saved;
    grad[i] = static_cast<float>((up - down) / (2.0 * step));
  }
  return grad;
}

double weighted_sum(const TensorD& out, const TensorF& weights) {
  double s = 0.0;
  for (Index i = 0; i < out.size(); ++i) s += out[i] * weights[i];
  return s;
}

double relative_error(const TensorF& analytic, const TensorF& numeric) {
  const Eigen::ArrayXd a = analytic.array().cast<double>();
  const Eigen::ArrayXd n = numeric.array().cast<double>();
  const double scale = std::max({a.matrix().norm(), n.matrix().norm(), 1e-12});
  return (a - n).matrix().norm() / scale;
}

class Suite {
 public:
  Suite(const GradcheckOptions& options, GradcheckReport& report) : options_(options), report_(report) {}

  void compare(const std::string& op, const std::string& wrt, std::uint64_t seed, const TensorF& analytic,
               const TensorF& numeric) {
    const double err = relative_error(analytic, numeric);
    report_.cases.push_back({op, wrt, seed, err, err < options_.tolerance});
  }

  void conv(std::uint64_t seed) {
    Rng rng(seed);
    const Index batch = 1 + static_cast<Index>(rng.below(2));
    const Index in_ch = 1 + static_cast<Index>(rng.below(3));
    const Index out_ch = 1 + static_cast<Index>(rng.below(3));
    const Index ksize = rng.below(3) == 0 ? 1 : 3;
    const Padding padding = rng.below(2) == 0 ? Padding::Same : Padding::None;
    const Index rows = 3 + static_cast<Index>(rng.below(4));
    const Index cols = 3 + static_cast<Index>(rng.below(4));
    TensorF input = random_tensor({batch, in_ch, rows, cols}, rng);
    TensorF kernel = random_tensor({out_ch, in_ch, ksize, ksize}, rng);
    TensorF bias = random_tensor({out_ch}, rng);
    Conv2dRecord<float> record;
    const TensorF out = conv2d_forward(input, kernel, bias, padding, &record);
    const TensorF weights = random_tensor(out.shape(), rng);
    const auto grads = conv2d_backward(record, kernel, weights);

    auto input_d = input.cast<double>();
    auto kernel_d = kernel.cast<double>();
    auto bias_d = bias.cast<double>();
    auto loss = [&] { return weighted_sum(conv2d_forward(input_d, kernel_d, bias_d, padding), weights); };
    compare("conv2d", "input", seed, grads.input, numeric_gradient(input_d, options_.step, loss));
    compare("conv2d", "kernel", seed, grads.kernel, numeric_gradient(kernel_d, options_.step, loss));
    compare("conv2d", "bias", seed, grads.bias, numeric_gradient(bias_d, options_.step, loss));
  }

  void relu_op(std::uint64_t seed) {
    Rng rng(seed);
    TensorF x = away_from_zero({2, 2, 3, 3}, rng, 1e-2);
    const TensorF weights = random_tensor(x.shape(), rng);
    const TensorF analytic = relu_backward(x, weights);
    auto x_d = x.cast<double>();
    auto loss = [&] { return weighted_sum(relu(x_d), weights); };
    compare("relu", "input", seed, analytic, numeric_gradient(x_d, options_.step, loss));
  }

  void batchnorm(std::uint64_t seed) {
    Rng rng(seed);
    const Index channels = 1 + static_cast<Index>(rng.below(3));
    TensorF x = random_tensor({2, channels, 3, 3}, rng);
    TensorF scale = random_tensor({channels}, rng);
    TensorF shift = random_tensor({channels}, rng);
    BatchNormStats<float> stats(channels);
    BatchNormRecord<float> record;
    const TensorF out = batchnorm_forward(x, scale, shift, stats, Mode::Train, &record);
    const TensorF weights = random_tensor(out.shape(), rng);
    const auto grads = batchnorm_backward(record, scale, weights);

    auto x_d = x.cast<double>();
    auto scale_d = scale.cast<double>();
    auto shift_d = shift.cast<double>();
    auto loss = [&] {
      BatchNormStats<double> scratch(channels);
      return weighted_sum(batchnorm_forward(x_d, scale_d, shift_d, scratch, Mode::Train), weights);
    };
    compare("batchnorm", "input", seed, grads.input, numeric_gradient(x_d, options_.step, loss));
    compare("batchnorm", "scale", seed, grads.scale, numeric_gradient(scale_d, options_.step, loss));
    compare("batchnorm", "shift", seed, grads.shift, numeric_gradient(shift_d, options_.step, loss));
  }

  void cluster(std::uint64_t seed) {
    Rng rng(seed);
    const Index clusters = 2 + static_cast<Index>(rng.below(3));
    // Keep every pixel's top-two margin wide so the argmax label is stable.
    TensorF y({2, clusters, 2, 3});
    for (;;) {
      y = random_tensor(y.shape(), rng);
      bool stable = true;
      for (Index n = 0; n < y.dim(0) && stable; ++n) {
        for (Index p = 0; p < y.plane() && stable; ++p) {
          std::vector<float> column;
          for (Index k = 0; k < clusters; ++k) column.push_back(y.sample(n)(k, p));
          std::sort(column.rbegin(), column.rend());
          stable = column[0] - column[1] > 0.05f;
        }
      }
      if (stable) break;
    }
    const auto result = deep_cluster_loss(y);
    auto y_d = y.cast<double>();
    auto loss = [&] { return deep_cluster_loss(y_d).value; };
    compare("deep_cluster_loss", "y", seed, result.grad_a, numeric_gradient(y_d, options_.step, loss));
  }

  void pairwise(std::uint64_t seed) {
    Rng rng(seed);
    TensorF y1 = random_tensor({2, 3, 2, 2}, rng);
    TensorF y2(y1.shape());
    // Channel differences kept away from the |.| kink.
    const TensorF diff = away_from_zero(y1.shape(), rng, 2e-2);
    y2.array() = y1.array() + 0.3f * diff.array();

    auto y1_d = y1.cast<double>();
    auto y2_d = y2.cast<double>();

    const auto temporal = temporal_consistency_loss(y1, y2);
    auto t_loss = [&] { return temporal_consistency_loss(y1_d, y2_d).value; };
    compare("temporal_consistency_loss", "y1", seed, temporal.grad_a, numeric_gradient(y1_d, options_.step, t_loss));
    compare("temporal_consistency_loss", "y2", seed, temporal.grad_b, numeric_gradient(y2_d, options_.step, t_loss));

    const auto contrastive = contrastive_loss(y1, y2);
    auto c_loss = [&] { return contrastive_loss(y1_d, y2_d).value; };
    compare("contrastive_loss", "y1", seed, contrastive.grad_a, numeric_gradient(y1_d, options_.step, c_loss));
    compare("contrastive_loss", "y2", seed, contrastive.grad_b, numeric_gradient(y2_d, options_.step, c_loss));
  }

 private:
  const GradcheckOptions& options_;
  GradcheckReport& report_;
};

}  // namespace

bool GradcheckReport::passed() const {
  if (cases.empty()) return false;
  for (const auto& c : cases) {
    if (!c.passed) return false;
  }
  return true;
}

std::string GradcheckReport::summary() const {
  std::map<std::string, std::pair<double, int>> worst;
  for (const auto& c : cases) {
    auto& entry = worst[c.op + "/" + c.wrt];
    entry.first = std::max(entry.first, c.rel_error);
    entry.second += c.passed ? 0 : 1;
  }
  std::ostringstream os;
  for (const auto& [name, entry] : worst) {
    os << name << ": worst relative error " << entry.first;
    if (entry.second > 0) os << " (" << entry.second << " failing)";
    os << '\n';
  }
  return os.str();
}

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  GradcheckReport report;
  Suite suite(options, report);
  for (int draw = 0; draw < options.draws; ++draw) {
    const std::uint64_t seed = options.seed * 1000003ULL + static_cast<std::uint64_t>(draw);
    suite.conv(seed);
    suite.relu_op(seed);
    suite.batchnorm(seed);
    suite.cluster(seed);
    suite.pairwise(seed);
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace mscd
