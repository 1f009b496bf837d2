#include "mscd/eval.hpp"

#include <cstdio>

namespace mscd {

namespace {

void require_binary_pair(const ChangeMap& pred, const ChangeMap& ref) {
  if (pred.bands() != 1 || ref.bands() != 1) throw ShapeError("change maps must be single-band");
  if (!pred.same_dims(ref)) throw ShapeError("change maps differ in size");
  for (const auto* map : {&pred, &ref}) {
    for (float v : map->data()) {
      if (v != 0.0f && v != 1.0f) throw Error("change map is not binary");
    }
  }
}

std::string percent(const std::optional<double>& v) {
  if (!v) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", *v);
  return buf;
}

}  // namespace

EvalReport evaluate(const ChangeMap& pred, const ChangeMap& ref) {
  require_binary_pair(pred, ref);
  EvalReport report;
  const auto p = pred.data();
  const auto r = ref.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool predicted = p[i] == 1.0f;
    const bool actual = r[i] == 1.0f;
    if (predicted && actual) ++report.tp;
    else if (!predicted && !actual) ++report.tn;
    else if (predicted) ++report.fp;
    else ++report.fn;
  }
  if (report.tp + report.fn > 0) {
    report.sensitivity = 100.0 * static_cast<double>(report.tp) / static_cast<double>(report.tp + report.fn);
  }
  if (report.tn + report.fp > 0) {
    report.specificity = 100.0 * static_cast<double>(report.tn) / static_cast<double>(report.tn + report.fp);
  }
  return report;
}

std::string format_metrics_row(const EvalReport& report, const std::string& method) {
  std::string row = method.empty() ? "" : method + ",";
  return row + percent(report.sensitivity) + "," + percent(report.specificity);
}

Raster fcc_map(const ChangeMap& pred, const ChangeMap& ref) {
  require_binary_pair(pred, ref);
  Raster out(pred.rows(), pred.cols(), 3);
  for (Raster::Index r = 0; r < pred.rows(); ++r) {
    for (Raster::Index c = 0; c < pred.cols(); ++c) {
      const bool predicted = pred.at(r, c) == 1.0f;
      const bool actual = ref.at(r, c) == 1.0f;
      float rgb[3];
      if (predicted && actual) {
        rgb[0] = 0.0f, rgb[1] = 0.0f, rgb[2] = 0.0f;
      } else if (predicted) {
        rgb[0] = 0.0f, rgb[1] = 1.0f, rgb[2] = 0.0f;
      } else if (actual) {
        rgb[0] = 1.0f, rgb[1] = 0.75f, rgb[2] = 0.8f;
      } else {
        rgb[0] = 1.0f, rgb[1] = 1.0f, rgb[2] = 1.0f;
      }
      for (int b = 0; b < 3; ++b) out.at(r, c, b) = rgb[b];
    }
  }
  return out;
}

}  // namespace mscd
