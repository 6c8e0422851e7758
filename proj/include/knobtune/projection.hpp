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
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "knobtune/rng.hpp"

namespace knobtune {

enum class ProjectionKind { kHesbo, kRembo, kIdentity };

inline const char* projection_name(ProjectionKind kind) {
  switch (kind) {
    case ProjectionKind::kHesbo: return "hesbo";
    case ProjectionKind::kRembo: return "rembo";
    case ProjectionKind::kIdentity: return "none";
  }
  return "?";
}

inline ProjectionKind parse_projection_kind(const std::string& name) {
  if (name == "hesbo") return ProjectionKind::kHesbo;
  if (name == "rembo") return ProjectionKind::kRembo;
  if (name == "none" || name == "identity") return ProjectionKind::kIdentity;
  throw std::invalid_argument("unknown projection '" + name + "'");
}

/// A point in the optimizer-facing low-dimensional space.
using LowDimPoint = std::vector<double>;

/// Counts coordinates clamped by clip_to_unit. Diagnostics only.
struct ClipStats {
  std::uint64_t coordinates = 0;
  std::uint64_t clipped = 0;

  double fraction() const {
    return coordinates == 0 ? 0.0
                            : static_cast<double>(clipped) /
                                  static_cast<double>(coordinates);
  }
};

/**
 * Random linear map A from the low-dimensional box to [-1, 1]^D.
 *
 * hesbo:    count-sketch matrix; row i has a single entry sigma[i] in column
 *           hash[i]. Low-dimensional box is [-1, 1]^d.
 * rembo:    dense i.i.d. N(0, 1) entries, row-major. Box is [-sqrt(d), sqrt(d)]^d.
 * identity: D == d, A = I. Box is [-1, 1]^d.
 *
 * Built once per session and never mutated.
 */
class ProjectionMatrix {
 public:
  ProjectionMatrix() = default;

  ProjectionKind kind() const { return kind_; }
  std::size_t high_dim() const { return high_dim_; }
  std::size_t low_dim() const { return low_dim_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<std::size_t>& hash() const { return hash_; }
  const std::vector<int>& sign() const { return sign_; }
  const std::vector<double>& entries() const { return entries_; }

  double rembo_entry(std::size_t row, std::size_t col) const {
    return entries_[row * low_dim_ + col];
  }

  /// Half-width of the low-dimensional box along every coordinate.
  double low_bound() const {
    return kind_ == ProjectionKind::kRembo
               ? std::sqrt(static_cast<double>(low_dim_))
               : 1.0;
  }

  friend ProjectionMatrix make_hesbo(std::size_t, std::size_t, std::uint64_t);
  friend ProjectionMatrix make_rembo(std::size_t, std::size_t, std::uint64_t);
  friend ProjectionMatrix make_identity(std::size_t);
  friend ProjectionMatrix hesbo_from_tables(std::vector<std::size_t>,
                                            std::vector<int>, std::size_t,
                                            std::uint64_t);
  template <typename Json>
  friend ProjectionMatrix projection_from_json(const Json&);

  bool operator==(const ProjectionMatrix&) const = default;

 private:
  ProjectionKind kind_ = ProjectionKind::kIdentity;
  std::size_t high_dim_ = 0;
  std::size_t low_dim_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<std::size_t> hash_;
  std::vector<int> sign_;
  std::vector<double> entries_;
};

namespace detail {
inline void check_dims(std::size_t high_dim, std::size_t low_dim) {
  if (low_dim == 0) throw std::invalid_argument("low dimension must be >= 1");
  if (low_dim > high_dim)
    throw std::invalid_argument("low dimension " + std::to_string(low_dim) +
                                " exceeds high dimension " +
                                std::to_string(high_dim));
}
}  // namespace detail

/// Rows are drawn in order 0..D-1; each row draws its column, then its sign.
/// The seed is scrambled first: the low bits of mt19937_64's first output are
/// visibly correlated across consecutive seeds, which skews row 0's column.
inline ProjectionMatrix make_hesbo(std::size_t high_dim, std::size_t low_dim,
                                   std::uint64_t seed) {
  detail::check_dims(high_dim, low_dim);
  ProjectionMatrix m;
  m.kind_ = ProjectionKind::kHesbo;
  m.high_dim_ = high_dim;
  m.low_dim_ = low_dim;
  m.seed_ = seed;
  Rng rng(mix64(seed));
  m.hash_.resize(high_dim);
  m.sign_.resize(high_dim);
  for (std::size_t i = 0; i < high_dim; ++i) {
    m.hash_[i] = static_cast<std::size_t>(rng.uniform_index(low_dim));
    m.sign_[i] = rng.sign();
  }
  return m;
}

/// Explicit count-sketch tables, e.g. to pin a documented mapping in fixtures.
inline ProjectionMatrix hesbo_from_tables(std::vector<std::size_t> hash,
                                          std::vector<int> sign,
                                          std::size_t low_dim,
                                          std::uint64_t seed = 0) {
  detail::check_dims(hash.size(), low_dim);
  if (sign.size() != hash.size())
    throw std::invalid_argument("hash and sign tables differ in length");
  for (std::size_t i = 0; i < hash.size(); ++i) {
    if (hash[i] >= low_dim) throw std::invalid_argument("hash entry out of range");
    if (sign[i] != 1 && sign[i] != -1)
      throw std::invalid_argument("sign entries must be +1 or -1");
  }
  ProjectionMatrix m;
  m.kind_ = ProjectionKind::kHesbo;
  m.high_dim_ = hash.size();
  m.low_dim_ = low_dim;
  m.seed_ = seed;
  m.hash_ = std::move(hash);
  m.sign_ = std::move(sign);
  return m;
}

/// Entries drawn row-major from the portable normal generator.
inline ProjectionMatrix make_rembo(std::size_t high_dim, std::size_t low_dim,
                                   std::uint64_t seed) {
  detail::check_dims(high_dim, low_dim);
  ProjectionMatrix m;
  m.kind_ = ProjectionKind::kRembo;
  m.high_dim_ = high_dim;
  m.low_dim_ = low_dim;
  m.seed_ = seed;
  Rng rng(mix64(seed));
  m.entries_.resize(high_dim * low_dim);
  for (double& e : m.entries_) e = rng.normal();
  return m;
}

inline ProjectionMatrix make_identity(std::size_t dim) {
  detail::check_dims(dim, dim);
  ProjectionMatrix m;
  m.kind_ = ProjectionKind::kIdentity;
  m.high_dim_ = dim;
  m.low_dim_ = dim;
  return m;
}

inline ProjectionMatrix make_projection(ProjectionKind kind,
                                        std::size_t high_dim,
                                        std::size_t low_dim,
                                        std::uint64_t seed) {
  switch (kind) {
    case ProjectionKind::kHesbo: return make_hesbo(high_dim, low_dim, seed);
    case ProjectionKind::kRembo: return make_rembo(high_dim, low_dim, seed);
    case ProjectionKind::kIdentity: return make_identity(high_dim);
  }
  throw std::invalid_argument("unknown projection kind");
}

/// Returns A p. No clipping; see clip_to_unit.
inline std::vector<double> project(const ProjectionMatrix& a,
                                   std::span<const double> p) {
  if (p.size() != a.low_dim())
    throw std::invalid_argument("point has " + std::to_string(p.size()) +
                                " coordinates, projection expects " +
                                std::to_string(a.low_dim()));
  std::vector<double> out(a.high_dim(), 0.0);
  switch (a.kind()) {
    case ProjectionKind::kHesbo:
      for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = a.sign()[i] * p[a.hash()[i]];
      break;
    case ProjectionKind::kRembo:
      for (std::size_t i = 0; i < out.size(); ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < p.size(); ++j) acc += a.rembo_entry(i, j) * p[j];
        out[i] = acc;
      }
      break;
    case ProjectionKind::kIdentity:
      std::copy(p.begin(), p.end(), out.begin());
      break;
  }
  return out;
}

inline std::vector<double> clip_to_unit(std::vector<double> x,
                                        ClipStats* stats = nullptr) {
  for (double& v : x) {
    const double c = std::clamp(v, -1.0, 1.0);
    if (stats != nullptr) {
      ++stats->coordinates;
      if (c != v) ++stats->clipped;
    }
    v = c;
  }
  return x;
}

// --- serialization ------------------------------------------------------------

/// hesbo embeds the full hash/sign tables and rembo the dense entries, so the
/// matrix can be rebuilt without re-running the generator.
inline nlohmann::ordered_json projection_to_json(const ProjectionMatrix& a) {
  nlohmann::ordered_json j;
  j["kind"] = projection_name(a.kind());
  j["D"] = a.high_dim();
  j["d"] = a.low_dim();
  j["seed"] = a.seed();
  if (a.kind() == ProjectionKind::kHesbo) {
    j["h"] = a.hash();
    j["sigma"] = a.sign();
  } else if (a.kind() == ProjectionKind::kRembo) {
    j["entries"] = a.entries();
  }
  return j;
}

template <typename Json>
ProjectionMatrix projection_from_json(const Json& j) {
  const auto kind = parse_projection_kind(j.at("kind").template get<std::string>());
  const auto high = j.at("D").template get<std::size_t>();
  const auto low = j.at("d").template get<std::size_t>();
  const auto seed = j.at("seed").template get<std::uint64_t>();
  switch (kind) {
    case ProjectionKind::kHesbo:
      return hesbo_from_tables(j.at("h").template get<std::vector<std::size_t>>(),
                               j.at("sigma").template get<std::vector<int>>(), low,
                               seed);
    case ProjectionKind::kRembo: {
      detail::check_dims(high, low);
      ProjectionMatrix m;
      m.kind_ = kind;
      m.high_dim_ = high;
      m.low_dim_ = low;
      m.seed_ = seed;
      m.entries_ = j.at("entries").template get<std::vector<double>>();
      if (m.entries_.size() != high * low)
        throw std::invalid_argument("rembo entry count does not match D*d");
      return m;
    }
    case ProjectionKind::kIdentity:
      return make_identity(high);
  }
  throw std::invalid_argument("unknown projection kind");
}

}  // namespace knobtune
