#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mscd/detector.hpp"

namespace mscd {

/// Parameters of a synthetic optical/SAR scene pair.
struct SynthSpec {
  Raster::Index rows = 256;
  Raster::Index cols = 256;
  int n_classes = 4;             // landcover classes
  double change_fraction = 0.05; // target share of changed pixels, in (0, 0.5)
  int speckle_looks = 4;         // gamma shape of the multiplicative SAR speckle
  std::uint64_t seed = 0;
  int n_sites = 0;               // Voronoi sites; 0 picks one per 32x32 area (at least 2 per class)
  double optical_noise = 0.05;   // std of additive Gaussian noise on optical bands

  void validate() const;
  /// `key = value` echo of every field.
  std::string to_text() const;
};

struct SynthScene {
  Raster optical;      // 3 bands, rendered from the pre-change landcover
  Raster sar;          // 1 band intensity, rendered from the post-change landcover
  ChangeMap reference; // 1 where the landcover class changed
  std::vector<int> pre_class;   // row-major per pixel
  std::vector<int> post_class;
  std::vector<std::array<float, 3>> optical_means;  // per class
  std::vector<float> sar_means;                     // per class backscatter
};

/// Voronoi landcover, class-specific optical colors with Gaussian noise, and
/// class-specific SAR backscatter under unit-mean gamma speckle. Changes are
/// rectangles and ellipses whose class is replaced before the SAR image is
/// rendered; the changed share is kept within 20% of the target.
SynthScene generate_scene(const SynthSpec& spec);

}  // namespace mscd
