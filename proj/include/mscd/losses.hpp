#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

#include "mscd/rng.hpp"
#include "mscd/tensor.hpp"

namespace mscd {

enum class LossTag {
  Joint,        // (L1 + L2) / 2, first phase
  Cluster1,     // L1: clustering of the optical branch
  Cluster2,     // L2: clustering of the SAR branch
  Temporal,     // L12: paired absolute error
  Contrastive,  // L'12: exp(-AE) on shuffled pairs
  Aggregate,    // L1 + L12 + L'12
  Cluster12Mean // (L1 + L2) / 2 used in place of L1 during the second phase
};

std::string_view tag_name(LossTag tag);

/// Per-pixel cluster labels, batch x rows x cols, row-major.
struct PseudoLabelMap {
  Index batch = 0, rows = 0, cols = 0;
  std::vector<std::int32_t> labels;
};

/// Scalar loss plus its gradient with respect to each input tensor.
template <typename Scalar>
struct LossResult {
  double value = 0.0;
  Tensor<Scalar> grad_a;
  Tensor<Scalar> grad_b;  // empty for single-input losses
};

namespace detail {

template <typename Scalar>
void require_pair(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* what) {
  require_rank4(a, what);
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": shapes " + to_string(a.shape()) + " and " + to_string(b.shape()) +
                     " differ");
  }
}

}  // namespace detail

/// Argmax over channels per pixel; the lowest channel wins ties.
template <typename Scalar>
PseudoLabelMap pseudo_labels(const Tensor<Scalar>& y) {
  require_rank4(y, "cluster scores");
  PseudoLabelMap map{y.dim(0), y.dim(2), y.dim(3), {}};
  const Index plane = y.plane();
  map.labels.resize(static_cast<std::size_t>(y.dim(0) * plane));
  for (Index n = 0; n < y.dim(0); ++n) {
    const auto s = y.sample(n);
    for (Index p = 0; p < plane; ++p) {
      Index best = 0;
      for (Index k = 1; k < s.rows(); ++k) {
        if (s(k, p) > s(best, p)) best = k;
      }
      map.labels[static_cast<std::size_t>(n * plane + p)] = static_cast<std::int32_t>(best);
    }
  }
  return map;
}

/// Mean softmax cross-entropy between each pixel's K scores and its own
/// argmax label. Labels are constants: the gradient flows into y only.
template <typename Scalar>
LossResult<Scalar> deep_cluster_loss(const Tensor<Scalar>& y, PseudoLabelMap* labels_out = nullptr) {
  require_rank4(y, "cluster scores");
  const Index clusters = y.dim(1);
  if (clusters < 2) throw Error("deep clustering needs at least 2 channels");
  auto labels = pseudo_labels(y);
  const Index plane = y.plane();
  const double count = static_cast<double>(y.dim(0) * plane);

  LossResult<Scalar> result;
  result.grad_a = Tensor<Scalar>(y.shape());
  double total = 0.0;
  std::vector<double> prob(static_cast<std::size_t>(clusters));
  for (Index n = 0; n < y.dim(0); ++n) {
    const auto s = y.sample(n);
    auto g = result.grad_a.sample(n);
    for (Index p = 0; p < plane; ++p) {
      const auto label = labels.labels[static_cast<std::size_t>(n * plane + p)];
      const double top = static_cast<double>(s(label, p));
      double norm = 0.0;
      for (Index k = 0; k < clusters; ++k) {
        prob[static_cast<std::size_t>(k)] = std::exp(static_cast<double>(s(k, p)) - top);
        norm += prob[static_cast<std::size_t>(k)];
      }
      total += std::log(norm);  // -log softmax at the argmax
      for (Index k = 0; k < clusters; ++k) {
        const double pk = prob[static_cast<std::size_t>(k)] / norm;
        g(k, p) = static_cast<Scalar>((pk - (k == label ? 1.0 : 0.0)) / count);
      }
    }
  }
  result.value = total / count;
  if (labels_out != nullptr) *labels_out = std::move(labels);
  return result;
}

/// Mean over pixels of the channel-summed absolute difference. The
/// subgradient of |d| at d == 0 is 0.
template <typename Scalar>
LossResult<Scalar> temporal_consistency_loss(const Tensor<Scalar>& y1, const Tensor<Scalar>& y2) {
  detail::require_pair(y1, y2, "temporal consistency loss");
  const double count = static_cast<double>(y1.dim(0) * y1.plane());
  LossResult<Scalar> result{0.0, Tensor<Scalar>(y1.shape()), Tensor<Scalar>(y1.shape())};
  double total = 0.0;
  const auto scale = static_cast<Scalar>(1.0 / count);
  for (Index i = 0; i < y1.size(); ++i) {
    const Scalar d = y1[i] - y2[i];
    total += std::abs(static_cast<double>(d));
    const Scalar sign = d > 0 ? Scalar(1) : (d < 0 ? Scalar(-1) : Scalar(0));
    result.grad_a[i] = sign * scale;
    result.grad_b[i] = -sign * scale;
  }
  result.value = total / count;
  return result;
}

/// Mean over pixels of exp(-||y1 - y2'||_1), where y2' comes from shuffled
/// patches. Lies in (0, 1]; identical features give 1.
template <typename Scalar>
LossResult<Scalar> contrastive_loss(const Tensor<Scalar>& y1, const Tensor<Scalar>& y2_shuffled) {
  detail::require_pair(y1, y2_shuffled, "contrastive loss");
  const Index plane = y1.plane();
  const double count = static_cast<double>(y1.dim(0) * plane);
  LossResult<Scalar> result{0.0, Tensor<Scalar>(y1.shape()), Tensor<Scalar>(y1.shape())};
  double total = 0.0;
  for (Index n = 0; n < y1.dim(0); ++n) {
    const auto a = y1.sample(n);
    const auto b = y2_shuffled.sample(n);
    auto ga = result.grad_a.sample(n);
    auto gb = result.grad_b.sample(n);
    for (Index p = 0; p < plane; ++p) {
      double distance = 0.0;
      for (Index k = 0; k < a.rows(); ++k) distance += std::abs(static_cast<double>(a(k, p) - b(k, p)));
      const double e = std::exp(-distance);
      total += e;
      const double coeff = -e / count;
      for (Index k = 0; k < a.rows(); ++k) {
        const Scalar d = a(k, p) - b(k, p);
        const double sign = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
        ga(k, p) = static_cast<Scalar>(coeff * sign);
        gb(k, p) = static_cast<Scalar>(-coeff * sign);
      }
    }
  }
  result.value = total / count;
  return result;
}

/// Uniform random permutation of batch positions (fixed points allowed).
std::vector<std::size_t> shuffle_batch(std::size_t batch, Rng& rng);

/// Number of pixels assigned to each cluster.
std::vector<std::int64_t> cluster_usage(const PseudoLabelMap& labels, Index clusters);

}  // namespace mscd
