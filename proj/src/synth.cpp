#include "mscd/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "mscd/rng.hpp"

namespace mscd {

namespace {

constexpr int kMaxRestarts = 200;

std::vector<std::array<float, 3>> draw_optical_means(int classes, Rng& rng) {
  // Rejection keeps class colors apart; the separation relaxes if it cannot be met.
  double separation = 0.35;
  for (;;) {
    for (int attempt = 0; attempt < 500; ++attempt) {
      std::vector<std::array<float, 3>> means;
      bool ok = true;
      for (int k = 0; k < classes && ok; ++k) {
        std::array<float, 3> m{};
        for (auto& v : m) v = static_cast<float>(rng.uniform(0.05, 0.95));
        for (const auto& other : means) {
          double d = 0.0;
          for (int b = 0; b < 3; ++b) d += (m[b] - other[b]) * (m[b] - other[b]);
          if (std::sqrt(d) < separation) ok = false;
        }
        means.push_back(m);
      }
      if (ok) return means;
    }
    separation *= 0.8;
  }
}

std::vector<float> draw_sar_means(int classes, Rng& rng) {
  // Log-uniform backscatter in [0.05, 1], classes at least a factor apart.
  double separation = std::log(1.6);
  for (;;) {
    for (int attempt = 0; attempt < 500; ++attempt) {
      std::vector<float> means;
      bool ok = true;
      for (int k = 0; k < classes && ok; ++k) {
        const double m = std::exp(rng.uniform(std::log(0.05), 0.0));
        for (float other : means) {
          if (std::abs(std::log(m / other)) < separation) ok = false;
        }
        means.push_back(static_cast<float>(m));
      }
      if (ok) return means;
    }
    separation *= 0.8;
  }
}

std::vector<int> voronoi_landcover(const SynthSpec& spec, Rng& rng) {
  const int sites = spec.n_sites > 0
                        ? spec.n_sites
                        : std::max<int>(2 * spec.n_classes, static_cast<int>(spec.rows * spec.cols / 1024));
  std::vector<std::array<double, 2>> position(static_cast<std::size_t>(sites));
  std::vector<int> site_class(static_cast<std::size_t>(sites));
  for (int s = 0; s < sites; ++s) {
    position[static_cast<std::size_t>(s)] = {rng.uniform(0.0, static_cast<double>(spec.rows)),
                                             rng.uniform(0.0, static_cast<double>(spec.cols))};
    // The first n_classes sites cover every class once.
    site_class[static_cast<std::size_t>(s)] =
        s < spec.n_classes ? s : static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.n_classes)));
  }
  std::vector<int> landcover(static_cast<std::size_t>(spec.rows * spec.cols));
  for (Raster::Index r = 0; r < spec.rows; ++r) {
    for (Raster::Index c = 0; c < spec.cols; ++c) {
      double best = std::numeric_limits<double>::infinity();
      int owner = 0;
      for (int s = 0; s < sites; ++s) {
        const double dr = position[static_cast<std::size_t>(s)][0] - (static_cast<double>(r) + 0.5);
        const double dc = position[static_cast<std::size_t>(s)][1] - (static_cast<double>(c) + 0.5);
        const double d = dr * dr + dc * dc;
        if (d < best) {
          best = d;
          owner = s;
        }
      }
      landcover[static_cast<std::size_t>(r * spec.cols + c)] = site_class[static_cast<std::size_t>(owner)];
    }
  }
  return landcover;
}

/// Paints change shapes onto a copy of `pre` until the changed share is
/// within the tolerance band around the target.
std::vector<int> plant_changes(const SynthSpec& spec, const std::vector<int>& pre, Rng& rng) {
  const double total = static_cast<double>(pre.size());
  const double target = spec.change_fraction * total;
  const double lower = 0.9 * target;
  const double upper = 1.2 * target;
  const double short_side = static_cast<double>(std::min(spec.rows, spec.cols));
  const double min_side = std::max(3.0, short_side / 32.0);
  const double max_side = std::max(min_side + 1.0, short_side / 8.0);

  for (int restart = 0; restart < kMaxRestarts; ++restart) {
    std::vector<int> post = pre;
    double changed = 0.0;
    for (int attempt = 0; attempt < 10000 && changed < lower; ++attempt) {
      const auto h = static_cast<Raster::Index>(rng.uniform(min_side, max_side));
      const auto w = static_cast<Raster::Index>(rng.uniform(min_side, max_side));
      const auto r0 = static_cast<Raster::Index>(rng.below(static_cast<std::uint64_t>(std::max<Raster::Index>(1, spec.rows - h + 1))));
      const auto c0 = static_cast<Raster::Index>(rng.below(static_cast<std::uint64_t>(std::max<Raster::Index>(1, spec.cols - w + 1))));
      const int new_class = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.n_classes)));
      const bool ellipse = rng.uniform() < 0.5;

      std::vector<int> trial = post;
      double trial_changed = changed;
      for (auto r = r0; r < std::min(spec.rows, r0 + h); ++r) {
        for (auto c = c0; c < std::min(spec.cols, c0 + w); ++c) {
          if (ellipse) {
            const double u = (static_cast<double>(r - r0) + 0.5) / static_cast<double>(h) - 0.5;
            const double v = (static_cast<double>(c - c0) + 0.5) / static_cast<double>(w) - 0.5;
            if (u * u + v * v > 0.25) continue;
          }
          const auto i = static_cast<std::size_t>(r * spec.cols + c);
          const bool was_changed = trial[i] != pre[i];
          trial[i] = new_class;
          const bool is_changed = trial[i] != pre[i];
          trial_changed += static_cast<double>(is_changed) - static_cast<double>(was_changed);
        }
      }
      if (trial_changed > upper) continue;
      post = std::move(trial);
      changed = trial_changed;
    }
    if (changed >= lower && changed <= upper) return post;
  }
  throw Error("synth: could not reach the requested change fraction");
}

}  // namespace

void SynthSpec::validate() const {
  if (rows < 8 || cols < 8) throw Error("synth: scene must be at least 8x8");
  if (n_classes < 2) throw Error("synth: need at least 2 classes");
  if (!(change_fraction > 0.0 && change_fraction < 0.5)) throw Error("synth: change_fraction must lie in (0, 0.5)");
  if (speckle_looks < 1) throw Error("synth: speckle_looks must be >= 1");
  if (n_sites < 0) throw Error("synth: n_sites must be >= 0");
  if (!(optical_noise >= 0.0)) throw Error("synth: optical_noise must be >= 0");
}

std::string SynthSpec::to_text() const {
  std::ostringstream os;
  os << "rows = " << rows << '\n'
     << "cols = " << cols << '\n'
     << "n_classes = " << n_classes << '\n'
     << "change_fraction = " << change_fraction << '\n'
     << "speckle_looks = " << speckle_looks << '\n'
     << "seed = " << seed << '\n'
     << "n_sites = " << n_sites << '\n'
     << "optical_noise = " << optical_noise << '\n';
  return os.str();
}

SynthScene generate_scene(const SynthSpec& spec) {
  spec.validate();
  Rng layout_rng = Rng::derive(spec.seed, 100);
  Rng render_rng = Rng::derive(spec.seed, 101);

  SynthScene scene;
  scene.optical_means = draw_optical_means(spec.n_classes, layout_rng);
  scene.sar_means = draw_sar_means(spec.n_classes, layout_rng);
  scene.pre_class = voronoi_landcover(spec, layout_rng);
  scene.post_class = plant_changes(spec, scene.pre_class, layout_rng);

  scene.optical = Raster(spec.rows, spec.cols, 3);
  scene.sar = Raster(spec.rows, spec.cols, 1);
  scene.reference = Raster(spec.rows, spec.cols, 1);
  const double looks = static_cast<double>(spec.speckle_looks);
  for (Raster::Index r = 0; r < spec.rows; ++r) {
    for (Raster::Index c = 0; c < spec.cols; ++c) {
      const auto i = static_cast<std::size_t>(r * spec.cols + c);
      const auto& color = scene.optical_means[static_cast<std::size_t>(scene.pre_class[i])];
      for (int b = 0; b < 3; ++b) {
        scene.optical.at(r, c, b) = static_cast<float>(color[static_cast<std::size_t>(b)] +
                                                       render_rng.normal(0.0, spec.optical_noise));
      }
      const double speckle = render_rng.gamma(looks) / looks;
      scene.sar.at(r, c) = static_cast<float>(scene.sar_means[static_cast<std::size_t>(scene.post_class[i])] * speckle);
      scene.reference.at(r, c) = scene.pre_class[i] != scene.post_class[i] ? 1.0f : 0.0f;
    }
  }
  return scene;
}

}  // namespace mscd
