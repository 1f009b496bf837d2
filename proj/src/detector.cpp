#include "mscd/detector.hpp"

#include <algorithm>
#include <cmath>

namespace mscd {

namespace {

void require_single_band(const Raster& g, const char* what) {
  if (g.empty() || g.bands() != 1) throw ShapeError(std::string(what) + " needs a single-band raster");
}

std::pair<float, float> value_range(const Raster& g, const char* what) {
  const auto data = g.data();
  const auto [lo, hi] = std::minmax_element(data.begin(), data.end());
  if (*lo == *hi) throw Error(std::string(what) + ": constant image has no threshold");
  return {*lo, *hi};
}

}  // namespace

TensorF raster_to_tensor(const Raster& raster) {
  const auto data = raster.data();
  return TensorF({1, raster.bands(), raster.rows(), raster.cols()}, std::vector<float>(data.begin(), data.end()));
}

MagnitudeImage difference_magnitude(const TensorF& a, const TensorF& b) {
  require_rank4(a, "feature map");
  if (!a.same_shape(b) || a.dim(0) != 1) throw ShapeError("difference_magnitude needs equal batch-1 tensors");
  Raster g(a.dim(2), a.dim(3), 1);
  const auto diff = (a.sample(0) - b.sample(0)).eval();
  g.band(0) = diff.colwise().norm().transpose().array();
  return g;
}

MagnitudeImage feature_magnitude(SiameseCDModel& model, const Raster& x1, const Raster& z2) {
  if (!x1.same_dims(z2)) throw ShapeError("feature_magnitude: images differ in size");
  const TensorF y1 = model.forward_opt(raster_to_tensor(x1), Mode::Eval);
  const TensorF y2 = model.forward_sar(raster_to_tensor(z2), Mode::Eval);
  return difference_magnitude(y1, y2);
}

OtsuResult otsu(const MagnitudeImage& g, int bins) {
  require_single_band(g, "otsu");
  if (bins < 2) throw Error("otsu needs at least 2 bins");
  const auto [lo, hi] = value_range(g, "otsu");
  const double width = (static_cast<double>(hi) - lo) / bins;

  std::vector<double> count(static_cast<std::size_t>(bins), 0.0);
  std::vector<double> sum(static_cast<std::size_t>(bins), 0.0);
  for (float v : g.data()) {
    const auto bin = std::min<long>(bins - 1, static_cast<long>((v - static_cast<double>(lo)) / width));
    count[static_cast<std::size_t>(bin)] += 1.0;
    sum[static_cast<std::size_t>(bin)] += v;
  }
  const double total_count = static_cast<double>(g.pixels());
  double total_sum = 0.0;
  for (double s : sum) total_sum += s;

  OtsuResult best{};
  double best_score = -1.0;
  double below_count = 0.0;
  double below_sum = 0.0;
  for (int edge = 1; edge < bins; ++edge) {
    below_count += count[static_cast<std::size_t>(edge - 1)];
    below_sum += sum[static_cast<std::size_t>(edge - 1)];
    const double above_count = total_count - below_count;
    if (below_count == 0.0 || above_count == 0.0) continue;
    const double gap = below_sum / below_count - (total_sum - below_sum) / above_count;
    const double score = below_count * above_count * gap * gap;
    if (score > best_score) {
      best_score = score;
      best.edge = edge;
    }
  }
  best.threshold = static_cast<float>(lo + best.edge * width);
  return best;
}

float isodata_threshold(const MagnitudeImage& g, double tol, int max_iterations) {
  require_single_band(g, "isodata");
  value_range(g, "isodata");
  double t = 0.0;
  for (float v : g.data()) t += v;
  t /= static_cast<double>(g.pixels());
  for (int it = 0; it < max_iterations; ++it) {
    double below = 0.0, above = 0.0;
    double n_below = 0.0, n_above = 0.0;
    for (float v : g.data()) {
      if (v <= t) {
        below += v;
        n_below += 1.0;
      } else {
        above += v;
        n_above += 1.0;
      }
    }
    if (n_below == 0.0 || n_above == 0.0) break;
    const double next = 0.5 * (below / n_below + above / n_above);
    const double delta = std::abs(next - t);
    t = next;
    if (delta < tol) break;
  }
  return static_cast<float>(t);
}

ChangeMap apply_threshold(const MagnitudeImage& g, float t) {
  require_single_band(g, "apply_threshold");
  ChangeMap map(g.rows(), g.cols(), 1);
  map.band(0) = (g.band(0) > t).cast<float>();
  return map;
}

}  // namespace mscd
