#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "mscd/detector.hpp"

namespace mscd {

/// Confusion counts of a predicted change map against a reference map.
/// Percentages are absent when their denominator is zero.
struct EvalReport {
  std::int64_t tp = 0, tn = 0, fp = 0, fn = 0;
  std::optional<double> sensitivity;  // 100 * TP / (TP + FN)
  std::optional<double> specificity;  // 100 * TN / (TN + FP)

  std::int64_t total() const { return tp + tn + fp + fn; }
};

/// Both maps must be single-band, equal-sized and strictly binary.
EvalReport evaluate(const ChangeMap& pred, const ChangeMap& ref);

/// "sensitivity,specificity" with two decimals ("NA" when undefined),
/// prefixed by "method," when a method name is given.
std::string format_metrics_row(const EvalReport& report, const std::string& method = "");

/// False-color comparison: TP black, FP green, FN pink (1, 0.75, 0.8), TN white.
Raster fcc_map(const ChangeMap& pred, const ChangeMap& ref);

}  // namespace mscd
