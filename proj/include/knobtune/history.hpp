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

// Session configuration, observation records and the NDJSON history format.
//
// Line 1:  {"config": ..., "space": ..., "projection": ..., "default": ...}
// Line 2+: one observation per line, iterations contiguous from 1.

#pragma once

#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "knobtune/config_space.hpp"
#include "knobtune/errors.hpp"
#include "knobtune/evaluator.hpp"
#include "knobtune/pipeline.hpp"
#include "knobtune/projection.hpp"

namespace knobtune {

enum class Direction { kMaximize, kMinimize };

/// +1 when maximizing, -1 when minimizing. effective = sign * natural.
inline double orientation(Direction d) { return d == Direction::kMaximize ? 1.0 : -1.0; }

struct EarlyStopPolicy {
  double min_improvement_percent = 1.0;
  std::size_t patience = 10;

  bool operator==(const EarlyStopPolicy&) const = default;
};

struct SessionConfig {
  std::string space_path;
  ProjectionKind projection = ProjectionKind::kHesbo;
  std::size_t dims = 16;
  double bias = kDefaultBias;
  std::optional<std::size_t> buckets = kDefaultBuckets;
  std::size_t n_init = 10;
  std::size_t iters = 100;
  std::uint64_t seed = 0;
  Direction direction = Direction::kMaximize;
  std::string optimizer = "gp";
  std::optional<EarlyStopPolicy> early_stop;
  std::string evaluator;
  double timeout_seconds = 600.0;

  bool operator==(const SessionConfig&) const = default;
};

inline void validate_config(const SessionConfig& cfg) {
  if (cfg.n_init == 0) throw SessionError("n_init must be >= 1");
  if (cfg.n_init > cfg.iters) throw SessionError("n_init must not exceed the iteration budget");
  if (!(cfg.bias >= 0.0 && cfg.bias < 1.0)) throw SessionError("bias must lie in [0, 1)");
  if (cfg.buckets && *cfg.buckets < 2) throw SessionError("bucket count must be >= 2");
  if (cfg.projection != ProjectionKind::kIdentity && cfg.dims == 0)
    throw SessionError("projection dimension must be >= 1");
  if (cfg.early_stop) {
    if (!(cfg.early_stop->min_improvement_percent > 0.0))
      throw SessionError("early-stop improvement must be > 0");
    if (cfg.early_stop->patience == 0) throw SessionError("early-stop patience must be >= 1");
  }
  if (!(cfg.timeout_seconds > 0.0)) throw SessionError("timeout must be positive");
}

inline nlohmann::ordered_json config_to_json(const SessionConfig& c) {
  nlohmann::ordered_json j;
  j["space"] = c.space_path;
  j["projection"] = projection_name(c.projection);
  j["dims"] = c.dims;
  j["bias"] = c.bias;
  j["buckets"] = c.buckets ? nlohmann::ordered_json(*c.buckets) : nlohmann::ordered_json(nullptr);
  j["n_init"] = c.n_init;
  j["iters"] = c.iters;
  j["seed"] = c.seed;
  j["direction"] = c.direction == Direction::kMaximize ? "maximize" : "minimize";
  j["optimizer"] = c.optimizer;
  if (c.early_stop) {
    j["early_stop"] = {{"min_improvement_percent", c.early_stop->min_improvement_percent},
                       {"patience", c.early_stop->patience}};
  } else {
    j["early_stop"] = nullptr;
  }
  j["evaluator"] = c.evaluator;
  j["timeout"] = c.timeout_seconds;
  return j;
}

template <typename Json>
SessionConfig config_from_json(const Json& j) {
  SessionConfig c;
  c.space_path = j.at("space").template get<std::string>();
  c.projection = parse_projection_kind(j.at("projection").template get<std::string>());
  c.dims = j.at("dims").template get<std::size_t>();
  c.bias = j.at("bias").template get<double>();
  if (!j.at("buckets").is_null()) c.buckets = j.at("buckets").template get<std::size_t>();
  else c.buckets.reset();
  c.n_init = j.at("n_init").template get<std::size_t>();
  c.iters = j.at("iters").template get<std::size_t>();
  c.seed = j.at("seed").template get<std::uint64_t>();
  c.direction = j.at("direction").template get<std::string>() == "minimize" ? Direction::kMinimize
                                                                           : Direction::kMaximize;
  c.optimizer = j.at("optimizer").template get<std::string>();
  if (!j.at("early_stop").is_null()) {
    c.early_stop = EarlyStopPolicy{j.at("early_stop").at("min_improvement_percent").template get<double>(),
                                   j.at("early_stop").at("patience").template get<std::size_t>()};
  }
  c.evaluator = j.at("evaluator").template get<std::string>();
  c.timeout_seconds = j.at("timeout").template get<double>();
  return c;
}

/// Inverse of assignment_to_json for a known space.
template <typename Json>
KnobAssignment assignment_from_json(const ConfigSpace& space, const Json& j) {
  std::vector<std::string> specials;
  if (j.contains("_special")) specials = j.at("_special").template get<std::vector<std::string>>();
  std::vector<AssignedKnob> out;
  out.reserve(space.size());
  for (const auto& knob : space) {
    const auto& v = j.at(knob.name);
    KnobValue value;
    switch (knob.kind) {
      case KnobKind::kInteger: value = v.template get<std::int64_t>(); break;
      case KnobKind::kReal: value = v.template get<double>(); break;
      case KnobKind::kCategorical: value = v.template get<std::string>(); break;
    }
    std::optional<std::size_t> special;
    if (std::find(specials.begin(), specials.end(), knob.name) != specials.end())
      special = special_index(knob, value);
    out.push_back({knob.name, std::move(value), special});
  }
  return KnobAssignment(std::move(out));
}

struct Observation {
  std::size_t iter = 0;
  LowDimPoint point;
  std::vector<double> projected;  ///< post-clip high-dimensional point
  KnobAssignment assignment;
  EvalStatus status = EvalStatus::kOk;
  std::optional<double> raw_value;
  double effective_value = 0.0;   ///< maximize-oriented, after crash penalty
  double best = 0.0;              ///< see running_best()
  bool init = false;
  bool penalized = false;
  std::size_t specials = 0;
  double wall_ms = 0.0;
  std::string cause;
};

/// Baseline evaluation of the space's default configuration (iteration 0).
struct DefaultRecord {
  KnobAssignment assignment;
  EvalStatus status = EvalStatus::kOk;
  std::optional<double> raw_value;
};

struct History {
  SessionConfig config;
  ConfigSpace space;
  ProjectionMatrix projection;
  DefaultRecord default_config;
  std::vector<Observation> observations;

  double sign() const { return orientation(config.direction); }

  /// Best-so-far after observation i (0-based), in the objective's units.
  double natural_best(std::size_t i) const { return sign() * observations.at(i).best; }

  double final_best() const { return natural_best(observations.size() - 1); }
};

inline nlohmann::ordered_json header_to_json(const History& h) {
  nlohmann::ordered_json j;
  j["config"] = config_to_json(h.config);
  j["space"] = space_to_json(h.space);
  j["projection"] = projection_to_json(h.projection);
  nlohmann::ordered_json def;
  def["config"] = assignment_to_json(h.default_config.assignment);
  def["status"] = h.default_config.status == EvalStatus::kOk ? "ok" : "crash";
  def["raw_value"] = h.default_config.raw_value ? nlohmann::ordered_json(*h.default_config.raw_value)
                                                : nlohmann::ordered_json(nullptr);
  j["default"] = std::move(def);
  return j;
}

inline nlohmann::ordered_json observation_to_json(const Observation& o) {
  nlohmann::ordered_json j;
  j["iter"] = o.iter;
  j["point"] = o.point;
  j["projected"] = o.projected;
  j["config"] = assignment_to_json(o.assignment);
  j["status"] = o.status == EvalStatus::kOk ? "ok" : "crash";
  j["raw_value"] = o.raw_value ? nlohmann::ordered_json(*o.raw_value) : nlohmann::ordered_json(nullptr);
  j["effective_value"] = o.effective_value;
  j["best"] = o.best;
  j["flags"] = {{"init", o.init}, {"penalized", o.penalized}, {"specials", o.specials}};
  if (!o.cause.empty()) j["cause"] = o.cause;
  j["wall_ms"] = o.wall_ms;
  return j;
}

template <typename Json>
Observation observation_from_json(const ConfigSpace& space, const Json& j) {
  Observation o;
  o.iter = j.at("iter").template get<std::size_t>();
  o.point = j.at("point").template get<LowDimPoint>();
  if (j.contains("projected")) o.projected = j.at("projected").template get<std::vector<double>>();
  o.assignment = assignment_from_json(space, j.at("config"));
  o.status = j.at("status").template get<std::string>() == "ok" ? EvalStatus::kOk : EvalStatus::kCrash;
  if (!j.at("raw_value").is_null()) o.raw_value = j.at("raw_value").template get<double>();
  o.effective_value = j.at("effective_value").template get<double>();
  o.best = j.at("best").template get<double>();
  const auto& f = j.at("flags");
  o.init = f.at("init").template get<bool>();
  o.penalized = f.at("penalized").template get<bool>();
  o.specials = f.at("specials").template get<std::size_t>();
  if (j.contains("cause")) o.cause = j.at("cause").template get<std::string>();
  o.wall_ms = j.at("wall_ms").template get<double>();
  return o;
}

/// Appends history lines to a stream, flushing after each one.
class HistoryWriter {
 public:
  explicit HistoryWriter(std::ostream& out) : out_(&out) {}

  void header(const History& h) { line(header_to_json(h)); }
  void observation(const Observation& o) { line(observation_to_json(o)); }

 private:
  void line(const nlohmann::ordered_json& j) {
    *out_ << j.dump() << '\n';
    out_->flush();
  }
  std::ostream* out_;
};

inline History read_history(std::istream& in) {
  History h;
  std::string text;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, text)) {
    ++lineno;
    if (text.empty()) continue;
    const std::string locus = "line " + std::to_string(lineno);
    nlohmann::ordered_json j;
    try {
      j = nlohmann::ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(locus, e.what());
    }
    try {
      if (!have_header) {
        h.config = config_from_json(j.at("config"));
        h.space = space_from_json(j.at("space"));
        h.projection = projection_from_json(j.at("projection"));
        const auto& def = j.at("default");
        h.default_config.assignment = assignment_from_json(h.space, def.at("config"));
        h.default_config.status = def.at("status").get<std::string>() == "ok" ? EvalStatus::kOk : EvalStatus::kCrash;
        if (!def.at("raw_value").is_null()) h.default_config.raw_value = def.at("raw_value").get<double>();
        have_header = true;
        continue;
      }
      auto o = observation_from_json(h.space, j);
      if (o.iter != h.observations.size() + 1)
        throw ParseError(locus, "iterations must be contiguous from 1");
      h.observations.push_back(std::move(o));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(locus, e.what());
    }
  }
  if (!have_header) throw ParseError("line 1", "empty history");
  return h;
}

inline History read_history(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, "cannot open history file");
  try {
    return read_history(in);
  } catch (const ParseError& e) {
    throw ParseError(path + ":" + e.locus(), e.what());
  }
}

inline void write_history(std::ostream& out, const History& h) {
  HistoryWriter w(out);
  w.header(h);
  for (const auto& o : h.observations) w.observation(o);
}

}  // namespace knobtune
