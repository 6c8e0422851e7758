// Copyright 2026 The knobtune Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================

#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "knobtune/history.hpp"

namespace knobtune {

namespace detail {
inline bool at_least_as_good(double a, double b, Direction d) {
  return d == Direction::kMaximize ? a >= b : a <= b;
}

inline void check_comparable(const History& baseline, const History& treatment) {
  if (baseline.observations.empty() || treatment.observations.empty())
    throw std::invalid_argument("histories must be non-empty");
  if (baseline.config.direction != treatment.config.direction)
    throw std::invalid_argument("histories optimize in different directions");
}
}  // namespace detail

/// Earliest 1-based iteration whose best-so-far reaches `target`.
inline std::optional<std::size_t> first_reaching(const History& h, double target) {
  for (std::size_t i = 0; i < h.observations.size(); ++i)
    if (detail::at_least_as_good(h.natural_best(i), target, h.config.direction)) return i + 1;
  return std::nullopt;
}

struct TimeToOptimal {
  std::size_t baseline_iteration = 0;        ///< where the baseline first hit its final best
  std::optional<std::size_t> iteration;      ///< where the treatment matched it
  std::optional<double> speedup;             ///< baseline_iteration / iteration

  bool reached() const { return iteration.has_value(); }
};

inline TimeToOptimal time_to_optimal(const History& baseline, const History& treatment) {
  detail::check_comparable(baseline, treatment);
  TimeToOptimal out;
  const double target = baseline.final_best();
  out.baseline_iteration = *first_reaching(baseline, target);
  out.iteration = first_reaching(treatment, target);
  if (out.iteration)
    out.speedup = static_cast<double>(out.baseline_iteration) / static_cast<double>(*out.iteration);
  return out;
}

/// Percent gain of the treatment's final best over the baseline's. For
/// minimization this is the relative reduction.
inline double final_improvement(double best_baseline, double best_treatment, Direction direction) {
  if (best_baseline == 0.0) throw std::domain_error("baseline best is zero; improvement undefined");
  const double diff = direction == Direction::kMaximize ? best_treatment - best_baseline
                                                        : best_baseline - best_treatment;
  return 100.0 * diff / best_baseline;
}

inline double final_improvement(const History& baseline, const History& treatment) {
  detail::check_comparable(baseline, treatment);
  return final_improvement(baseline.final_best(), treatment.final_best(), baseline.config.direction);
}

/// Linear-interpolation percentile, q in [0, 100].
inline double percentile(std::vector<double> xs, double q) {
  if (xs.empty()) throw std::invalid_argument("percentile of an empty sample");
  std::sort(xs.begin(), xs.end());
  const double pos = q / 100.0 * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, xs.size() - 1);
  return xs[lo] + (pos - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

inline double mean(const std::vector<double>& xs) {
  if (xs.empty()) throw std::invalid_argument("mean of an empty sample");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

inline double median(const std::vector<double>& xs) { return percentile(xs, 50.0); }

/// iteration,best_value rows for one session, best in the objective's units.
inline void write_convergence_csv(std::ostream& out, const History& h) {
  out << "iteration,best_value\n";
  for (std::size_t i = 0; i < h.observations.size(); ++i) {
    out << h.observations[i].iter << ',';
    const auto old = out.precision(17);
    out << h.natural_best(i) << '\n';
    out.precision(old);
  }
}

}  // namespace knobtune
