#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mscd {

struct GradcheckOptions {
  std::uint64_t seed = 7;
  int draws = 20;            // random draws per operator
  double step = 1e-3;        // central-difference step
  double tolerance = 1e-3;   // on the relative error below
};

/// One analytic-vs-numeric comparison. rel_error is
/// ||analytic - numeric||_2 / max(||analytic||_2, ||numeric||_2).
struct GradcheckCase {
  std::string op;
  std::string wrt;
  std::uint64_t seed = 0;
  double rel_error = 0.0;
  bool passed = false;
};

struct GradcheckReport {
  std::vector<GradcheckCase> cases;
  double seconds = 0.0;

  bool passed() const;
  /// Worst relative error per operator, as "op: value" lines.
  std::string summary() const;
};

/// Checks the float32 backward passes of conv2d, relu, batchnorm (train mode)
/// and the three training losses against central finite differences taken
/// through the double instantiation of the same forward code. Inputs are kept
/// away from non-differentiable points.
GradcheckReport run_gradcheck(const GradcheckOptions& options = {});

}  // namespace mscd
