#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "mscd/synth.hpp"

using namespace mscd;

TEST_CASE("synth: change fraction lands in the tolerance band") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SynthSpec spec;
    spec.seed = seed;
    const auto scene = generate_scene(spec);
    double changed = 0.0;
    for (float v : scene.reference.data()) changed += v;
    const double share = changed / 65536.0;
    CHECK(share >= 0.04);
    CHECK(share <= 0.06);
    CHECK(scene.optical.bands() == 3);
    CHECK(scene.sar.bands() == 1);
  }
}

TEST_CASE("synth: reference marks exactly the class changes") {
  SynthSpec spec;
  spec.rows = 64;
  spec.cols = 80;
  spec.seed = 9;
  spec.change_fraction = 0.1;
  const auto s = generate_scene(spec);
  for (std::size_t i = 0; i < s.pre_class.size(); ++i) {
    CHECK((s.reference.data()[i] == 1.0f) == (s.pre_class[i] != s.post_class[i]));
  }
}

TEST_CASE("synth: same seed, same scene") {
  SynthSpec spec;
  spec.rows = spec.cols = 64;
  spec.seed = 3;
  const auto a = generate_scene(spec);
  const auto b = generate_scene(spec);
  CHECK(a.optical == b.optical);
  CHECK(a.sar == b.sar);
  CHECK(a.reference == b.reference);
  spec.seed = 4;
  CHECK_FALSE(generate_scene(spec).sar == a.sar);
}

TEST_CASE("synth: speckle has unit mean and variance 1/looks") {
  SynthSpec spec;
  spec.seed = 12;
  spec.speckle_looks = 4;
  const auto s = generate_scene(spec);
  std::vector<double> sum(4, 0.0), sq(4, 0.0), n(4, 0.0);
  for (std::size_t i = 0; i < s.post_class.size(); ++i) {
    const int k = s.post_class[i];
    const double ratio = s.sar.data()[i] / s.sar_means[static_cast<std::size_t>(k)];
    sum[k] += ratio;
    sq[k] += ratio * ratio;
    n[k] += 1.0;
  }
  for (int k = 0; k < 4; ++k) {
    REQUIRE(n[k] > 2000);
    const double mean = sum[k] / n[k];
    const double var = sq[k] / n[k] - mean * mean;
    CHECK(std::abs(mean - 1.0) < 0.02);
    CHECK(std::abs(var - 0.25) < 0.025);
  }
}

TEST_CASE("synth: optical and SAR class signatures are distinct and unrelated") {
  int same_order = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SynthSpec spec;
    spec.rows = spec.cols = 64;
    spec.seed = seed;
    const auto s = generate_scene(spec);
    std::vector<int> by_optical(4), by_sar(4);
    for (int k = 0; k < 4; ++k) by_optical[k] = by_sar[k] = k;
    auto brightness = [&](int k) {
      const auto& m = s.optical_means[static_cast<std::size_t>(k)];
      return m[0] + m[1] + m[2];
    };
    for (int a = 0; a < 4; ++a)
      for (int b = a + 1; b < 4; ++b) {
        CHECK(s.sar_means[a] != s.sar_means[b]);
        CHECK(s.optical_means[a] != s.optical_means[b]);
      }
    std::sort(by_optical.begin(), by_optical.end(), [&](int a, int b) { return brightness(a) < brightness(b); });
    std::sort(by_sar.begin(), by_sar.end(), [&](int a, int b) { return s.sar_means[a] < s.sar_means[b]; });
    same_order += by_optical == by_sar;
  }
  // Independent draws give the same ranking with probability 1/24.
  CHECK(same_order < 6);
}

TEST_CASE("synth: invalid specs are rejected") {
  SynthSpec spec;
  spec.change_fraction = 0.0;
  CHECK_THROWS_AS(generate_scene(spec), Error);
  spec.change_fraction = 0.5;
  CHECK_THROWS_AS(generate_scene(spec), Error);
  spec = SynthSpec{};
  spec.speckle_looks = 0;
  CHECK_THROWS_AS(generate_scene(spec), Error);
}
