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

// Low-dimensional point -> concrete knob assignment.
//
//   point --project--> [-1,1]^D --clip (rembo)--> normalize to [0,1]
//         --special-value bias (hybrid knobs)--> scale to physical value
//
// Bucketization restricts the optimizer-facing coordinates to a K-point grid;
// it never touches the high-dimensional side.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "knobtune/config_space.hpp"
#include "knobtune/projection.hpp"

namespace knobtune {

inline constexpr double kDefaultBias = 0.2;
inline constexpr std::size_t kDefaultBuckets = 10000;

/// K uniformly spaced values spanning [lo, hi], both endpoints included.
class Grid {
 public:
  Grid(double lo, double hi, std::size_t count) : lo_(lo), hi_(hi), count_(count) {
    if (count < 2) throw std::invalid_argument("bucket count K must be >= 2");
    if (!(lo < hi)) throw std::invalid_argument("grid needs lo < hi");
  }

  double lo() const { return lo_; }
  double hi() const { return hi_; }
  std::size_t count() const { return count_; }
  double step() const { return (hi_ - lo_) / static_cast<double>(count_ - 1); }

  double value(std::size_t index) const {
    if (index + 1 >= count_) return hi_;
    return lo_ + (hi_ - lo_) * static_cast<double>(index) /
                     static_cast<double>(count_ - 1);
  }

  /// Nearest grid index; exact midpoints go to the upper neighbour.
  std::size_t index_of(double x) const {
    const double t = (x - lo_) / (hi_ - lo_) * static_cast<double>(count_ - 1);
    const double r = std::floor(t + 0.5);
    if (!(r > 0.0)) return 0;
    return std::min(static_cast<std::size_t>(r), count_ - 1);
  }

  double snap(double x) const { return value(index_of(x)); }

  bool contains(double x) const { return value(index_of(x)) == x; }

  std::vector<double> values() const {
    std::vector<double> out(count_);
    for (std::size_t i = 0; i < count_; ++i) out[i] = value(i);
    return out;
  }

 private:
  double lo_;
  double hi_;
  std::size_t count_;
};

/// Grid over the symmetric box [-bound, bound] shared by every coordinate.
inline Grid bucketize_grid(double bound, std::size_t buckets) {
  return Grid(-bound, bound, buckets);
}

/// Min-max map [-1, 1] -> [0, 1].
inline double normalize_unit(double x) {
  if (!(x >= -1.0 && x <= 1.0))
    throw std::invalid_argument("normalize_unit: " + std::to_string(x) +
                                " outside [-1, 1]");
  return (x + 1.0) / 2.0;
}

/// Outcome of special-value biasing for one knob.
struct BiasResult {
  std::optional<std::size_t> special;  ///< index into special_values
  double unit = 0.0;                   ///< rescaled regular value when !special
};

/**
 * Special value k owns [k*p, (k+1)*p). The remainder [S*p, 1] is stretched
 * back onto [0, 1]. Knobs without special values pass through unchanged.
 */
inline BiasResult apply_bias(double u, const KnobSpec& knob, double p) {
  const std::size_t s = knob.special_values.size();
  if (s == 0 || p <= 0.0) return {std::nullopt, u};
  const double mass = static_cast<double>(s) * p;
  if (!(mass < 1.0))
    throw std::invalid_argument("knob '" + knob.name +
                                "': special value mass must stay below 1");
  for (std::size_t k = 0; k < s; ++k) {
    if (u < static_cast<double>(k + 1) * p) return {k, 0.0};
  }
  return {std::nullopt, std::clamp((u - mass) / (1.0 - mass), 0.0, 1.0)};
}

/**
 * Scale u in [0, 1] onto a knob's domain. Integers round half-up; categorical
 * knobs split [0, 1] into equal bins with u = 1 in the last bin.
 */
inline KnobValue unit_to_value(
    double u, const KnobSpec& knob,
    std::optional<std::pair<double, double>> range_override = std::nullopt) {
  if (!(u >= 0.0 && u <= 1.0))
    throw std::invalid_argument("unit_to_value: " + std::to_string(u) +
                                " outside [0, 1]");
  if (knob.kind == KnobKind::kCategorical) {
    const std::size_t c = knob.choices.size();
    const auto bin = std::min(static_cast<std::size_t>(std::floor(u * static_cast<double>(c))), c - 1);
    return knob.choices[bin];
  }
  const auto [lo, hi] = range_override.value_or(std::pair{knob.min, knob.max});
  const double scaled = lo + u * (hi - lo);
  if (knob.kind == KnobKind::kInteger)
    return static_cast<std::int64_t>(std::clamp(std::floor(scaled + 0.5), lo, hi));
  return std::clamp(scaled, lo, hi);
}

struct AssignedKnob {
  std::string name;
  KnobValue value;
  std::optional<std::size_t> special;  ///< set when value is a special value

  bool operator==(const AssignedKnob&) const = default;
};

/// Concrete configuration in knob declaration order.
class KnobAssignment {
 public:
  KnobAssignment() = default;
  explicit KnobAssignment(std::vector<AssignedKnob> knobs) : knobs_(std::move(knobs)) {}

  std::size_t size() const { return knobs_.size(); }
  const AssignedKnob& operator[](std::size_t i) const { return knobs_[i]; }
  auto begin() const { return knobs_.begin(); }
  auto end() const { return knobs_.end(); }

  const KnobValue& value(const std::string& name) const {
    for (const auto& k : knobs_)
      if (k.name == name) return k.value;
    throw std::out_of_range("no knob named '" + name + "' in assignment");
  }

  std::size_t special_count() const {
    return static_cast<std::size_t>(std::count_if(
        knobs_.begin(), knobs_.end(), [](const AssignedKnob& k) { return k.special.has_value(); }));
  }

  bool operator==(const KnobAssignment&) const = default;

 private:
  std::vector<AssignedKnob> knobs_;
};

inline double as_double(const KnobValue& v) {
  if (const auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
  if (const auto* d = std::get_if<double>(&v)) return *d;
  throw std::invalid_argument("categorical value has no numeric form");
}

/// Index of `value` in the knob's special list, if it is one.
inline std::optional<std::size_t> special_index(const KnobSpec& knob,
                                                const KnobValue& value) {
  if (knob.special_values.empty()) return std::nullopt;
  const double v = as_double(value);
  for (std::size_t k = 0; k < knob.special_values.size(); ++k)
    if (knob.special_values[k] == v) return k;
  return std::nullopt;
}

inline KnobValue special_value(const KnobSpec& knob, std::size_t k) {
  const double s = knob.special_values.at(k);
  if (knob.kind == KnobKind::kInteger) return static_cast<std::int64_t>(s);
  return s;
}

/// True iff `value` has the right type and lies in the knob's domain.
inline bool in_domain(const KnobSpec& knob, const KnobValue& value) {
  switch (knob.kind) {
    case KnobKind::kCategorical: {
      const auto* s = std::get_if<std::string>(&value);
      return s != nullptr &&
             std::find(knob.choices.begin(), knob.choices.end(), *s) != knob.choices.end();
    }
    case KnobKind::kInteger: {
      const auto* i = std::get_if<std::int64_t>(&value);
      return i != nullptr && static_cast<double>(*i) >= knob.min &&
             static_cast<double>(*i) <= knob.max;
    }
    case KnobKind::kReal: {
      const auto* d = std::get_if<double>(&value);
      return d != nullptr && *d >= knob.min && *d <= knob.max;
    }
  }
  return false;
}

inline KnobAssignment default_assignment(const ConfigSpace& space) {
  std::vector<AssignedKnob> out;
  out.reserve(space.size());
  for (const auto& knob : space) {
    std::optional<std::size_t> special;
    if (is_numeric(knob)) special = special_index(knob, knob.default_value);
    out.push_back({knob.name, knob.default_value, special});
  }
  return KnobAssignment(std::move(out));
}

/// Flat {name: value} object plus a "_special" list of knobs holding a special
/// value.
inline nlohmann::ordered_json assignment_to_json(const KnobAssignment& a) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  auto specials = nlohmann::ordered_json::array();
  for (const auto& k : a) {
    j[k.name] = value_to_json(k.value);
    if (k.special) specials.push_back(k.name);
  }
  j["_special"] = std::move(specials);
  return j;
}

struct PipelineConfig {
  double bias = kDefaultBias;
  std::optional<std::size_t> buckets = kDefaultBuckets;
};

/// assemble_config output, with the high-dimensional point kept for logging.
struct AssembledPoint {
  std::vector<double> projected;  ///< post-clip point in [-1, 1]^D
  KnobAssignment assignment;
};

/**
 * Bound (space, projection, config) triple. Construction validates the
 * combination; assemble() is pure and safe to call concurrently.
 */
class ValuePipeline {
 public:
  ValuePipeline(ConfigSpace space, ProjectionMatrix projection, PipelineConfig config)
      : space_(std::move(space)), projection_(std::move(projection)), config_(config) {
    if (projection_.high_dim() != space_.size())
      throw std::invalid_argument("projection high dimension " +
                                  std::to_string(projection_.high_dim()) +
                                  " does not match " + std::to_string(space_.size()) +
                                  " knobs");
    if (!(config_.bias >= 0.0 && config_.bias < 1.0))
      throw std::invalid_argument("bias must lie in [0, 1)");
    for (const auto& knob : space_) {
      if (static_cast<double>(knob.special_values.size()) * config_.bias >= 1.0)
        throw ValidationError(knob.name, "special value count times bias must be < 1");
    }
    if (config_.buckets) grid_.emplace(bucketize_grid(projection_.low_bound(), *config_.buckets));
  }

  const ConfigSpace& space() const { return space_; }
  const ProjectionMatrix& projection() const { return projection_; }
  const PipelineConfig& config() const { return config_; }
  const std::optional<Grid>& grid() const { return grid_; }
  std::size_t low_dim() const { return projection_.low_dim(); }
  double low_bound() const { return projection_.low_bound(); }

  bool on_grid(std::span<const double> p) const {
    if (!grid_) return true;
    return std::all_of(p.begin(), p.end(), [&](double x) { return grid_->contains(x); });
  }

  AssembledPoint assemble(std::span<const double> p, ClipStats* clip = nullptr) const {
    const double bound = low_bound();
    for (double x : p) {
      if (!(x >= -bound && x <= bound))
        throw std::invalid_argument("point coordinate " + std::to_string(x) +
                                    " outside the low-dimensional box");
    }
    if (!on_grid(p)) throw std::invalid_argument("point is not on the bucket grid");

    auto x = project(projection_, p);
    if (projection_.kind() == ProjectionKind::kRembo) x = clip_to_unit(std::move(x), clip);

    std::vector<AssignedKnob> knobs;
    knobs.reserve(space_.size());
    for (std::size_t i = 0; i < space_.size(); ++i) {
      const auto& knob = space_[i];
      const double u = normalize_unit(x[i]);
      if (!is_hybrid(knob) || config_.bias <= 0.0) {
        auto v = unit_to_value(u, knob);
        auto special = is_numeric(knob) ? special_index(knob, v) : std::nullopt;
        knobs.push_back({knob.name, std::move(v), special});
        continue;
      }
      const auto biased = apply_bias(u, knob, config_.bias);
      if (biased.special) {
        knobs.push_back({knob.name, special_value(knob, *biased.special), biased.special});
      } else {
        knobs.push_back({knob.name,
                         unit_to_value(biased.unit, knob, effective_numeric_range(knob)),
                         std::nullopt});
      }
    }
    return {std::move(x), KnobAssignment(std::move(knobs))};
  }

 private:
  ConfigSpace space_;
  ProjectionMatrix projection_;
  PipelineConfig config_;
  std::optional<Grid> grid_;
};

inline KnobAssignment assemble_config(const ValuePipeline& pipeline,
                                      std::span<const double> p) {
  return pipeline.assemble(p).assignment;
}

}  // namespace knobtune
