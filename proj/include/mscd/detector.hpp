#pragma once

#include "mscd/network.hpp"
#include "mscd/raster.hpp"

namespace mscd {

/// Single-band raster of non-negative per-pixel difference magnitudes.
using MagnitudeImage = Raster;
/// Single-band raster with 1 = changed, 0 = unchanged.
using ChangeMap = Raster;

/// Raster (bands as channels) to a 1 x bands x rows x cols tensor.
TensorF raster_to_tensor(const Raster& raster);

/// Per-pixel l2 norm over channels of (a - b) for batch-1 tensors.
MagnitudeImage difference_magnitude(const TensorF& a, const TensorF& b);

/// G = || h(f_opt(X1)) - h(f_sar(Z2)) ||_2 per pixel, over the whole scene
/// with eval-mode batch norm.
MagnitudeImage feature_magnitude(SiameseCDModel& model, const Raster& x1, const Raster& z2);

struct OtsuResult {
  float threshold = 0.0f;
  int edge = 0;  // threshold = min + edge * (max - min) / bins, 1 <= edge < bins
};

/// Histogram of `bins` equal bins over [min, max]; picks the interior bin edge
/// maximizing the between-class variance (class means from the samples
/// themselves). Ties go to the lowest edge. Throws on a constant image.
OtsuResult otsu(const MagnitudeImage& g, int bins = 256);
inline float otsu_threshold(const MagnitudeImage& g, int bins = 256) { return otsu(g, bins).threshold; }

/// Iterates t <- (mean{g <= t} + mean{g > t}) / 2 from the global mean until
/// |dt| < tol or max_iterations. Throws on a constant image.
float isodata_threshold(const MagnitudeImage& g, double tol = 1e-6, int max_iterations = 100);

/// 1 where g > t, else 0.
ChangeMap apply_threshold(const MagnitudeImage& g, float t);

}  // namespace mscd
