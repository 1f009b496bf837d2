#pragma once

#include "mscd/detector.hpp"

namespace mscd {

/// Change vector analysis: per-pixel l2 norm over bands of (X1 - Z2).
MagnitudeImage cva(const Raster& x1, const Raster& z2);

/// Robust CVA. For each pixel p, d1 = min over q in the window around p of
/// ||X1[p] - Z2[q]||, d2 = min over q of ||X1[q] - Z2[p]||; output max(d1, d2).
/// Windows are clipped at the image border. `window` must be odd.
MagnitudeImage rcva(const Raster& x1, const Raster& z2, int window = 3);

}  // namespace mscd
