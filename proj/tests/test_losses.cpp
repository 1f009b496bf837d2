#include <doctest.h>

#include <cmath>
#include <map>

#include "mscd/losses.hpp"
#include "mscd/rng.hpp"
#include "oracles.hpp"

using namespace mscd;

namespace {

TensorF pixel(std::vector<float> k) {
  const auto n = static_cast<Index>(k.size());
  return TensorF({1, n, 1, 1}, std::move(k));
}

}  // namespace

TEST_CASE("deep clustering: closed-form single pixels") {
  PseudoLabelMap labels;
  const auto r = deep_cluster_loss(pixel({2, 0, 0, 0}), &labels);
  CHECK(labels.labels == std::vector<std::int32_t>{0});
  const double e2 = std::exp(2.0);
  CHECK(r.value == doctest::Approx(-std::log(e2 / (e2 + 3.0))));
  CHECK(r.value == doctest::Approx(0.3408).epsilon(1e-3));

  const auto flat = deep_cluster_loss(pixel({0, 0, 0, 0}), &labels);
  CHECK(labels.labels[0] == 0);
  CHECK(flat.value == doctest::Approx(std::log(4.0)));

  CHECK(pseudo_labels(pixel({0, 3, 3, 1})).labels[0] == 1);
  CHECK_THROWS_AS(deep_cluster_loss(pixel({1})), Error);
}

TEST_CASE("deep clustering: gradient is softmax minus one-hot over the pixel count") {
  const auto y = oracle::random_tensor({2, 3, 2, 2}, 4);
  const auto r = deep_cluster_loss(y);
  const auto labels = pseudo_labels(y);
  for (Index n = 0; n < 2; ++n)
    for (Index p = 0; p < 4; ++p) {
      double norm = 0.0;
      for (Index k = 0; k < 3; ++k) norm += std::exp(static_cast<double>(y.sample(n)(k, p)));
      for (Index k = 0; k < 3; ++k) {
        const double soft = std::exp(static_cast<double>(y.sample(n)(k, p))) / norm;
        const double onehot = labels.labels[static_cast<std::size_t>(n * 4 + p)] == k ? 1.0 : 0.0;
        CHECK(r.grad_a.sample(n)(k, p) == doctest::Approx((soft - onehot) / 8.0));
      }
    }
  CHECK(r.grad_b.empty());
}

TEST_CASE("deep clustering: one small step on a free pixel lowers the loss") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto y = oracle::random_tensor({1, 4, 1, 1}, seed);
    const auto r = deep_cluster_loss(y);
    for (Index i = 0; i < y.size(); ++i) y[i] -= 0.01f * r.grad_a[i];
    CHECK(deep_cluster_loss(y).value < r.value);
    CHECK(r.value >= 0.0);
  }
}

TEST_CASE("temporal loss: definition, identity and symmetry") {
  const auto d = temporal_consistency_loss(pixel({1, -1, 0.5f, 0}), pixel({0, 0, 0, 0}));
  CHECK(d.value == doctest::Approx(2.5));
  CHECK(d.grad_a[0] == 1.0f);
  CHECK(d.grad_a[1] == -1.0f);
  CHECK(d.grad_a[3] == 0.0f);  // subgradient at a tie
  CHECK(d.grad_b[0] == -1.0f);

  const auto a = oracle::random_tensor({3, 4, 5, 5}, 1);
  const auto b = oracle::random_tensor({3, 4, 5, 5}, 2);
  CHECK(temporal_consistency_loss(a, a).value == 0.0);
  CHECK(temporal_consistency_loss(a, b).value == temporal_consistency_loss(b, a).value);
  CHECK(temporal_consistency_loss(a, b).value > 0.0);
  CHECK_THROWS_AS(temporal_consistency_loss(a, oracle::random_tensor({3, 4, 5, 4}, 2)), ShapeError);
}

TEST_CASE("contrastive loss: bounds and closed forms") {
  const auto a = oracle::random_tensor({2, 4, 3, 3}, 5);
  CHECK(contrastive_loss(a, a).value == 1.0);
  const auto half = contrastive_loss(pixel({static_cast<float>(std::log(2.0)), 0, 0, 0}), pixel({0, 0, 0, 0}));
  CHECK(half.value == doctest::Approx(0.5));
  CHECK(half.grad_a[0] == doctest::Approx(-0.5));
  CHECK(half.grad_b[0] == doctest::Approx(0.5));
  const auto b = oracle::random_tensor({2, 4, 3, 3}, 6);
  const double v = contrastive_loss(a, b).value;
  CHECK(v > 0.0);
  CHECK(v <= 1.0);
}

TEST_CASE("contrastive loss: spreading the difference never raises it") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto a = oracle::random_tensor({2, 4, 3, 3}, 10 + seed);
    const auto b = oracle::random_tensor({2, 4, 3, 3}, 50 + seed);
    double prev = contrastive_loss(a, b).value;
    for (float s : {1.5f, 2.0f, 4.0f}) {
      TensorF scaled = b;
      for (Index i = 0; i < b.size(); ++i) scaled[i] = a[i] - s * (a[i] - b[i]);
      const double now = contrastive_loss(a, scaled).value;
      CHECK(now < prev);
      prev = now;
    }
  }
}

TEST_CASE("shuffle_batch: identity at B=1, reproducible, uniform at B=5") {
  Rng rng(1);
  CHECK(shuffle_batch(1, rng) == std::vector<std::size_t>{0});
  CHECK_THROWS(shuffle_batch(0, rng));
  Rng a(8), b(8);
  CHECK(shuffle_batch(9, a) == shuffle_batch(9, b));

  constexpr int kDraws = 10000;
  std::map<std::vector<std::size_t>, int> counts;
  Rng r(2024);
  for (int i = 0; i < kDraws; ++i) ++counts[shuffle_batch(5, r)];
  CHECK(counts.size() == 120);
  const double p = 1.0 / 120.0;
  const double expected = kDraws * p;
  const double sigma = std::sqrt(kDraws * p * (1.0 - p));
  for (const auto& [perm, n] : counts) CHECK(std::abs(n - expected) < 5.0 * sigma);
}

TEST_CASE("cluster_usage counts labels") {
  PseudoLabelMap m{1, 1, 5, {0, 2, 2, 3, 2}};
  CHECK(cluster_usage(m, 4) == std::vector<std::int64_t>{1, 0, 3, 1});
  CHECK(tag_name(LossTag::Contrastive) == "L12c");
}
