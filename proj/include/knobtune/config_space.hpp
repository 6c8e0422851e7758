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
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "knobtune/errors.hpp"

namespace knobtune {

enum class KnobKind { kReal, kInteger, kCategorical };

/// Concrete value of one knob: integer, real or categorical label.
using KnobValue = std::variant<std::int64_t, double, std::string>;

struct KnobSpec {
  std::string name;
  KnobKind kind = KnobKind::kReal;
  double min = 0.0;
  double max = 0.0;
  std::vector<std::string> choices;
  std::vector<double> special_values;
  KnobValue default_value;

  bool operator==(const KnobSpec&) const = default;
};

inline bool is_hybrid(const KnobSpec& knob) {
  return !knob.special_values.empty();
}

inline bool is_numeric(const KnobSpec& knob) {
  return knob.kind != KnobKind::kCategorical;
}

namespace detail {

inline bool is_integral(double v) {
  return std::isfinite(v) && std::floor(v) == v;
}

// Number of special values forming a consecutive run starting at the low
// (resp. high) end of an integer range.
inline std::pair<std::size_t, std::size_t> integer_special_runs(
    const KnobSpec& knob) {
  std::set<double> specials(knob.special_values.begin(),
                            knob.special_values.end());
  std::size_t low = 0;
  while (specials.count(knob.min + static_cast<double>(low))) ++low;
  std::size_t high = 0;
  while (high < specials.size() - std::min(low, specials.size()) &&
         specials.count(knob.max - static_cast<double>(high)))
    ++high;
  return {low, high};
}

}  // namespace detail

/// Range left after removing all special values. The special values sit at
/// the extremes of [min, max], so the remainder is one contiguous interval.
inline std::pair<double, double> effective_numeric_range(const KnobSpec& knob) {
  if (knob.kind == KnobKind::kCategorical)
    throw std::invalid_argument("knob '" + knob.name +
                                "' is categorical and has no numeric range");
  if (knob.special_values.empty()) return {knob.min, knob.max};
  if (knob.kind == KnobKind::kInteger) {
    auto [low, high] = detail::integer_special_runs(knob);
    return {knob.min + static_cast<double>(low),
            knob.max - static_cast<double>(high)};
  }
  double lo = knob.min;
  double hi = knob.max;
  for (double s : knob.special_values) {
    if (s == knob.min) lo = std::nextafter(knob.min, knob.max);
    if (s == knob.max) hi = std::nextafter(knob.max, knob.min);
  }
  return {lo, hi};
}

/// Throws ValidationError naming the knob and the broken rule.
inline void validate_knob(const KnobSpec& knob) {
  auto fail = [&](const std::string& rule) {
    throw ValidationError(knob.name, rule);
  };
  if (knob.name.empty()) fail("name must be non-empty");
  for (char c : knob.name) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' ||
          c == '.' || c == '-'))
      fail("name must be an identifier");
  }

  if (knob.kind == KnobKind::kCategorical) {
    if (knob.choices.size() < 2) fail("categorical knob needs >= 2 choices");
    std::set<std::string> seen(knob.choices.begin(), knob.choices.end());
    if (seen.size() != knob.choices.size()) fail("choices must be distinct");
    if (!knob.special_values.empty())
      fail("categorical knob cannot have special values");
    const auto* def = std::get_if<std::string>(&knob.default_value);
    if (def == nullptr || !seen.count(*def))
      fail("default must be one of the choices");
    return;
  }

  if (!knob.choices.empty()) fail("numeric knob cannot have choices");
  if (!std::isfinite(knob.min) || !std::isfinite(knob.max))
    fail("min and max must be finite");
  if (!(knob.min < knob.max)) fail("min must be strictly less than max");

  const bool integer = knob.kind == KnobKind::kInteger;
  if (integer && !(detail::is_integral(knob.min) && detail::is_integral(knob.max)))
    fail("integer knob bounds must be integral");

  double def = 0.0;
  if (const auto* i = std::get_if<std::int64_t>(&knob.default_value)) {
    def = static_cast<double>(*i);
  } else if (const auto* d = std::get_if<double>(&knob.default_value)) {
    if (integer) fail("integer knob default must be integral");
    def = *d;
  } else {
    fail("numeric knob default must be a number");
  }
  if (def < knob.min || def > knob.max) fail("default must lie in [min, max]");

  if (knob.special_values.empty()) return;
  std::set<double> specials(knob.special_values.begin(),
                            knob.special_values.end());
  if (specials.size() != knob.special_values.size())
    fail("special values must be distinct");
  for (double s : knob.special_values) {
    if (s < knob.min || s > knob.max)
      fail("special value " + std::to_string(s) + " outside [min, max]");
    if (integer && !detail::is_integral(s))
      fail("integer knob special values must be integral");
  }

  if (integer) {
    auto [low, high] = detail::integer_special_runs(knob);
    if (low + high != specials.size())
      fail("special values must sit at the extremes of the range");
    const double lo = knob.min + static_cast<double>(low);
    const double hi = knob.max - static_cast<double>(high);
    if (hi - lo < 1.0)
      fail("removing special values must leave at least 2 regular values");
  } else {
    for (double s : knob.special_values) {
      if (s != knob.min && s != knob.max)
        fail("special values must sit at the extremes of the range");
    }
    auto [lo, hi] = effective_numeric_range(knob);
    if (!(lo < hi))
      fail("removing special values must leave a non-empty range");
  }
}

/// Ordered, immutable collection of knobs. Dimension index i is the i-th knob
/// in declaration order.
class ConfigSpace {
 public:
  ConfigSpace() = default;

  explicit ConfigSpace(std::vector<KnobSpec> knobs) : knobs_(std::move(knobs)) {
    if (knobs_.empty()) throw ValidationError("<space>", "space has no knobs");
    for (std::size_t i = 0; i < knobs_.size(); ++i) {
      validate_knob(knobs_[i]);
      if (!index_.emplace(knobs_[i].name, i).second)
        throw ValidationError(knobs_[i].name, "duplicate knob name");
    }
  }

  std::size_t size() const { return knobs_.size(); }
  const KnobSpec& operator[](std::size_t i) const { return knobs_[i]; }
  const KnobSpec& at(std::size_t i) const { return knobs_.at(i); }
  const std::vector<KnobSpec>& knobs() const { return knobs_; }
  auto begin() const { return knobs_.begin(); }
  auto end() const { return knobs_.end(); }

  std::size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end())
      throw std::out_of_range("no knob named '" + name + "'");
    return it->second;
  }

  std::size_t hybrid_count() const {
    return static_cast<std::size_t>(
        std::count_if(knobs_.begin(), knobs_.end(),
                      [](const KnobSpec& k) { return is_hybrid(k); }));
  }

  /// Largest number of special values carried by a single knob.
  std::size_t max_special_count() const {
    std::size_t m = 0;
    for (const auto& k : knobs_) m = std::max(m, k.special_values.size());
    return m;
  }

  bool operator==(const ConfigSpace& other) const {
    return knobs_ == other.knobs_;
  }

 private:
  std::vector<KnobSpec> knobs_;
  std::unordered_map<std::string, std::size_t> index_;
};

// --- JSON schema ------------------------------------------------------------

inline const char* kind_name(KnobKind kind) {
  switch (kind) {
    case KnobKind::kReal: return "real";
    case KnobKind::kInteger: return "integer";
    case KnobKind::kCategorical: return "enum";
  }
  return "?";
}

inline nlohmann::ordered_json value_to_json(const KnobValue& v) {
  return std::visit([](const auto& x) { return nlohmann::ordered_json(x); }, v);
}

inline nlohmann::ordered_json knob_to_json(const KnobSpec& k) {
  nlohmann::ordered_json j;
  j["name"] = k.name;
  j["type"] = kind_name(k.kind);
  if (k.kind == KnobKind::kCategorical) {
    j["choices"] = k.choices;
  } else if (k.kind == KnobKind::kInteger) {
    j["min"] = static_cast<std::int64_t>(k.min);
    j["max"] = static_cast<std::int64_t>(k.max);
    if (!k.special_values.empty()) {
      auto& arr = j["special_values"] = nlohmann::ordered_json::array();
      for (double s : k.special_values) arr.push_back(static_cast<std::int64_t>(s));
    }
  } else {
    j["min"] = k.min;
    j["max"] = k.max;
    if (!k.special_values.empty()) j["special_values"] = k.special_values;
  }
  j["default"] = value_to_json(k.default_value);
  return j;
}

inline nlohmann::ordered_json space_to_json(const ConfigSpace& space) {
  nlohmann::ordered_json j;
  auto& arr = j["knobs"] = nlohmann::ordered_json::array();
  for (const auto& k : space) arr.push_back(knob_to_json(k));
  return j;
}

namespace detail {

template <typename Json>
double number_field(const Json& obj, const char* key, const std::string& locus) {
  const auto& v = obj.at(key);
  if (!v.is_number()) throw ParseError(locus + "." + key, "expected a number");
  return v.template get<double>();
}

template <typename Json>
KnobSpec knob_from_json(const Json& j, const std::string& locus) {
  if (!j.is_object()) throw ParseError(locus, "expected an object");
  for (const char* required : {"name", "type", "default"}) {
    if (!j.contains(required))
      throw ParseError(locus + "." + required, "missing field");
  }
  KnobSpec k;
  if (!j["name"].is_string()) throw ParseError(locus + ".name", "expected a string");
  k.name = j["name"].template get<std::string>();
  const std::string loc = locus + "(" + k.name + ")";

  if (!j["type"].is_string()) throw ParseError(loc + ".type", "expected a string");
  const auto type = j["type"].template get<std::string>();
  if (type == "real") {
    k.kind = KnobKind::kReal;
  } else if (type == "integer") {
    k.kind = KnobKind::kInteger;
  } else if (type == "enum") {
    k.kind = KnobKind::kCategorical;
  } else {
    throw ParseError(loc + ".type", "unknown knob type '" + type + "'");
  }

  const auto& def = j["default"];
  if (k.kind == KnobKind::kCategorical) {
    if (!j.contains("choices") || !j["choices"].is_array())
      throw ParseError(loc + ".choices", "enum knob needs a choices array");
    for (const auto& c : j["choices"]) {
      if (!c.is_string()) throw ParseError(loc + ".choices", "expected strings");
      k.choices.push_back(c.template get<std::string>());
    }
    if (j.contains("special_values") && !j["special_values"].empty())
      throw ValidationError(k.name, "categorical knob cannot have special values");
    if (!def.is_string()) throw ParseError(loc + ".default", "expected a string");
    k.default_value = def.template get<std::string>();
    return k;
  }

  for (const char* required : {"min", "max"}) {
    if (!j.contains(required))
      throw ParseError(loc + "." + required, "missing field");
  }
  k.min = number_field(j, "min", loc);
  k.max = number_field(j, "max", loc);
  if (j.contains("choices"))
    throw ValidationError(k.name, "numeric knob cannot have choices");
  if (j.contains("special_values")) {
    if (!j["special_values"].is_array())
      throw ParseError(loc + ".special_values", "expected an array");
    for (const auto& s : j["special_values"]) {
      if (!s.is_number())
        throw ParseError(loc + ".special_values", "expected numbers");
      k.special_values.push_back(s.template get<double>());
    }
  }
  if (!def.is_number()) throw ParseError(loc + ".default", "expected a number");
  if (k.kind == KnobKind::kInteger) {
    const double d = def.template get<double>();
    if (!is_integral(d))
      throw ValidationError(k.name, "integer knob default must be integral");
    k.default_value = static_cast<std::int64_t>(d);
  } else {
    k.default_value = def.template get<double>();
  }
  return k;
}

inline std::string line_of_offset(const std::string& text, std::size_t offset) {
  offset = std::min(offset, text.size());
  const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n');
  return "line " + std::to_string(line);
}

}  // namespace detail

template <typename Json>
ConfigSpace space_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("knobs"))
    throw ParseError("knobs", "top-level object must have a 'knobs' array");
  const auto& arr = j["knobs"];
  if (!arr.is_array()) throw ParseError("knobs", "expected an array");
  std::vector<KnobSpec> knobs;
  knobs.reserve(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i)
    knobs.push_back(detail::knob_from_json(arr[i], "knobs[" + std::to_string(i) + "]"));
  return ConfigSpace(std::move(knobs));
}

inline ConfigSpace parse_space_text(const std::string& text) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(detail::line_of_offset(text, e.byte > 0 ? e.byte - 1 : 0),
                     e.what());
  }
  return space_from_json(j);
}

inline ConfigSpace parse_space(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, "cannot open space file");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_space_text(buf.str());
}

}  // namespace knobtune
