#include "mscd/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mscd {

namespace {

void require_pair(const Raster& x1, const Raster& z2, const char* what) {
  if (!x1.same_dims(z2) || x1.bands() != z2.bands()) {
    throw ShapeError(std::string(what) + ": images must have equal size and band count");
  }
}

float pixel_distance(const Raster& a, Raster::Index ra, Raster::Index ca, const Raster& b, Raster::Index rb,
                     Raster::Index cb) {
  float sum = 0.0f;
  for (Raster::Index k = 0; k < a.bands(); ++k) {
    const float d = a.at(ra, ca, k) - b.at(rb, cb, k);
    sum += d * d;
  }
  return std::sqrt(sum);
}

}  // namespace

MagnitudeImage cva(const Raster& x1, const Raster& z2) {
  require_pair(x1, z2, "cva");
  MagnitudeImage g(x1.rows(), x1.cols(), 1);
  for (Raster::Index r = 0; r < x1.rows(); ++r) {
    for (Raster::Index c = 0; c < x1.cols(); ++c) g.at(r, c) = pixel_distance(x1, r, c, z2, r, c);
  }
  return g;
}

MagnitudeImage rcva(const Raster& x1, const Raster& z2, int window) {
  require_pair(x1, z2, "rcva");
  if (window < 1 || window % 2 == 0) throw Error("rcva window must be a positive odd integer");
  const Raster::Index half = window / 2;
  MagnitudeImage g(x1.rows(), x1.cols(), 1);
  for (Raster::Index r = 0; r < x1.rows(); ++r) {
    const auto r0 = std::max<Raster::Index>(0, r - half);
    const auto r1 = std::min(x1.rows() - 1, r + half);
    for (Raster::Index c = 0; c < x1.cols(); ++c) {
      const auto c0 = std::max<Raster::Index>(0, c - half);
      const auto c1 = std::min(x1.cols() - 1, c + half);
      float forward = std::numeric_limits<float>::infinity();
      float backward = std::numeric_limits<float>::infinity();
      for (auto qr = r0; qr <= r1; ++qr) {
        for (auto qc = c0; qc <= c1; ++qc) {
          forward = std::min(forward, pixel_distance(x1, r, c, z2, qr, qc));
          backward = std::min(backward, pixel_distance(x1, qr, qc, z2, r, c));
        }
      }
      g.at(r, c) = std::max(forward, backward);
    }
  }
  return g;
}

}  // namespace mscd
