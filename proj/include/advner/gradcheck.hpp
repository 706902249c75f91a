#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace advner::ad {

// A parameter vector the checker may perturb in place.
struct CheckedParam {
  std::string name;
  std::vector<float>* data = nullptr;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  int64_t worst_coord = -1;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  int64_t coords_checked = 0;
};

// Objective under test. Must evaluate from the *current* contents of the
// registered parameter vectors. When grads is non-null, fills one gradient
// vector per parameter (same order and lengths as the registration); the
// value must be returned as a double so the central difference is not limited
// by a final float32 rounding.
using CheckedFn = std::function<double(std::vector<std::vector<float>>* grads)>;

struct GradCheckOptions {
  double h = 1e-3;                    // central-difference step
  int64_t max_coords_per_param = 16;  // 0 = all coordinates
  uint64_t seed = 0x5eed;             // coordinate sampling
  // float32 forward noise makes the relative-error metric meaningless where
  // the gradient is near zero, so sampling draws from coordinates with
  // |analytic| >= max(grad_floor, rel_floor * max|analytic|). Each parameter
  // still contributes its largest-|analytic| coordinate, which keeps a broken
  // (e.g. all-zero) backward detectable; that coordinate is only scored when
  // max(|analytic|, |numeric|) clears signal_floor.
  double grad_floor = 1e-3;
  double rel_floor = 0.05;
  double signal_floor = 2e-3;
};

// Max over sampled coordinates of |analytic - central_difference| /
// (|analytic| + |numeric| + 1e-8). Throws NumericError if the objective is
// non-finite, ConfigError if h <= 0.
GradCheckReport finite_diff_check(const CheckedFn& f, std::vector<CheckedParam> params,
                                  const GradCheckOptions& opts = {});

}  // namespace advner::ad
