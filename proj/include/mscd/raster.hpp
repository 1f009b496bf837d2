#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

namespace mscd {

/// Multi-band float image. Samples are stored band-sequential: band varies
/// slowest, then row, then column (index = (band * rows + row) * cols + col).
class Raster {
 public:
  using Index = std::ptrdiff_t;
  using BandMap = Eigen::Map<Eigen::ArrayXf>;
  using ConstBandMap = Eigen::Map<const Eigen::ArrayXf>;

  Raster() = default;
  /// Zero-filled raster. Throws on non-positive dimensions.
  Raster(Index rows, Index cols, Index bands);
  /// Throws on a size mismatch or any non-finite sample.
  Raster(Index rows, Index cols, Index bands, const std::vector<float>& data);

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  Index bands() const { return bands_; }
  Index pixels() const { return rows_ * cols_; }
  bool empty() const { return data_.empty(); }

  float& at(Index row, Index col, Index band = 0) {
    return data_[static_cast<std::size_t>((band * rows_ + row) * cols_ + col)];
  }
  float at(Index row, Index col, Index band = 0) const {
    return data_[static_cast<std::size_t>((band * rows_ + row) * cols_ + col)];
  }

  BandMap band(Index b) { return BandMap(data_.data() + b * pixels(), pixels()); }
  ConstBandMap band(Index b) const { return ConstBandMap(data_.data() + b * pixels(), pixels()); }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  bool same_dims(const Raster& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  Index rows_ = 0;
  Index cols_ = 0;
  Index bands_ = 0;
  std::vector<float, Eigen::aligned_allocator<float>> data_;  // fixed alignment, see AlignedVector
};

struct BandStats {
  float mean = 0.0f;
  float stddev = 0.0f;
};

/// One (mean, population std) pair per band.
using SceneStats = std::vector<BandStats>;

/// Reads .rf32, .pgm or .ppm (chosen by extension). Netpbm samples are
/// scaled from [0, maxval] to [0, 1].
Raster load_raster(const std::filesystem::path& path);

/// Writes .rf32 (bit-exact), or .pgm/.ppm (binary P5/P6, maxval 255, values
/// clamped to [0, 1] and scaled by 255).
void save_raster(const Raster& raster, const std::filesystem::path& path);

/// 1-band raster to 3 identical bands.
Raster replicate_band(const Raster& raster);

/// Per-band zero mean, unit population std. Constant bands become zero.
std::pair<Raster, SceneStats> standardize(const Raster& raster);

SceneStats band_stats(const Raster& raster);

/// 10 * log10(x + eps) elementwise. Negative inputs are rejected.
Raster to_decibels(const Raster& raster, float eps = 1e-6f);

/// Co-registered pair ready for the network: both 3-band and standardized.
struct PreparedPair {
  Raster optical;
  Raster sar;
  SceneStats optical_stats;
  SceneStats sar_stats;
};

/// Single-band inputs are replicated to 3 bands; the SAR image is optionally
/// converted to decibels first. Each image is standardized on its own.
PreparedPair prepare_pair(const Raster& optical, const Raster& sar, bool sar_decibels = false);

}  // namespace mscd
