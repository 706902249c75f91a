#include "advner/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "advner/errors.hpp"
#include "advner/rng.hpp"

namespace advner::ad {

GradCheckReport finite_diff_check(const CheckedFn& f, std::vector<CheckedParam> params,
                                  const GradCheckOptions& opts) {
  if (opts.h <= 0.0) {
    throw ConfigError("finite_diff_check: h must be > 0, got " + std::to_string(opts.h));
  }
  std::vector<std::vector<float>> analytic;
  const double base = f(&analytic);
  if (!std::isfinite(base)) {
    throw NumericError("finite_diff_check: objective is non-finite at the base point");
  }
  if (analytic.size() != params.size()) {
    throw ContractError("finite_diff_check: objective filled " +
                        std::to_string(analytic.size()) + " gradients for " +
                        std::to_string(params.size()) + " parameters");
  }

  GradCheckReport report;
  SplitMix64 rng(opts.seed);
  for (size_t pi = 0; pi < params.size(); ++pi) {
    std::vector<float>& w = *params[pi].data;
    const std::vector<float>& g = analytic[pi];
    if (g.size() != w.size()) {
      throw ContractError("finite_diff_check: gradient length mismatch for parameter '" +
                          params[pi].name + "'");
    }
    const int64_t n = static_cast<int64_t>(w.size());
    if (n == 0) continue;

    // Candidate coordinates: above the noise floor, plus the single largest
    // so every tensor is represented.
    int64_t largest = 0;
    double gmax = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      const double ai = std::abs(static_cast<double>(g[static_cast<size_t>(i)]));
      if (ai > gmax) {
        gmax = ai;
        largest = i;
      }
    }
    const double floor = std::max(opts.grad_floor, opts.rel_floor * gmax);
    std::vector<int64_t> eligible;
    eligible.reserve(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
      if (std::abs(static_cast<double>(g[static_cast<size_t>(i)])) >= floor)
        eligible.push_back(i);
    }
    std::vector<int64_t> coords;
    const int64_t want = opts.max_coords_per_param > 0
                             ? std::min<int64_t>(opts.max_coords_per_param, n)
                             : n;
    if (static_cast<int64_t>(eligible.size()) <= want) {
      coords = eligible;
    } else {
      // deterministic partial Fisher-Yates draw
      for (int64_t t = 0; t < want; ++t) {
        const uint64_t j = t + rng.below(static_cast<uint64_t>(eligible.size() - t));
        std::swap(eligible[static_cast<size_t>(t)], eligible[static_cast<size_t>(j)]);
        coords.push_back(eligible[static_cast<size_t>(t)]);
      }
    }
    if (std::find(coords.begin(), coords.end(), largest) == coords.end())
      coords.push_back(largest);

    for (int64_t i : coords) {
      const float saved = w[static_cast<size_t>(i)];
      const float plus = static_cast<float>(saved + opts.h);
      const float minus = static_cast<float>(saved - opts.h);
      w[static_cast<size_t>(i)] = plus;
      const double up = f(nullptr);
      w[static_cast<size_t>(i)] = minus;
      const double down = f(nullptr);
      w[static_cast<size_t>(i)] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericError("finite_diff_check: objective non-finite while perturbing '" +
                           params[pi].name + "'");
      }
      // divide by the step actually applied; float(w +- h) rounds
      const double eff_step = static_cast<double>(plus) - static_cast<double>(minus);
      const double numeric = (up - down) / eff_step;
      const double a = static_cast<double>(g[static_cast<size_t>(i)]);
      if (std::max(std::abs(a), std::abs(numeric)) < opts.signal_floor) continue;
      const double rel =
          std::abs(a - numeric) / (std::abs(a) + std::abs(numeric) + 1e-8);
      ++report.coords_checked;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = params[pi].name;
        report.worst_coord = i;
        report.analytic_at_worst = a;
        report.numeric_at_worst = numeric;
      }
    }
  }
  return report;
}

}  // namespace advner::ad
