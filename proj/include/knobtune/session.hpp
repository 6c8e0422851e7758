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
#include <chrono>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "knobtune/config_space.hpp"
#include "knobtune/errors.hpp"
#include "knobtune/evaluator.hpp"
#include "knobtune/history.hpp"
#include "knobtune/optimizer.hpp"
#include "knobtune/pipeline.hpp"
#include "knobtune/projection.hpp"
#include "knobtune/rng.hpp"

namespace knobtune {

/**
 * Penalty for a crashed evaluation, in the objective's units: a quarter of
 * the worst value seen so far when maximizing, four times it when minimizing.
 * "Worst so far" starts at the default configuration's value and includes
 * earlier penalties.
 */
inline double crash_penalty(double default_value, const std::vector<Observation>& so_far,
                            Direction direction) {
  const double sign = orientation(direction);
  double worst = default_value;
  for (const auto& o : so_far) {
    const double natural = sign * o.effective_value;
    worst = direction == Direction::kMaximize ? std::min(worst, natural) : std::max(worst, natural);
  }
  return direction == Direction::kMaximize ? worst / 4.0 : worst * 4.0;
}

inline double crash_penalty(const History& h) {
  return crash_penalty(*h.default_config.raw_value, h.observations, h.config.direction);
}

/**
 * True when the best value has improved by less than x percent over the last
 * k iterations. The window never reaches back into the initial design, so
 * the earliest possible stop is iteration n_init + k.
 */
inline bool should_stop(const std::vector<double>& natural_best, std::size_t n_init,
                        const EarlyStopPolicy& policy, Direction direction) {
  const std::size_t now = natural_best.size();
  if (now < n_init + policy.patience) return false;
  const double current = natural_best[now - 1];
  const double then = natural_best[now - 1 - policy.patience];
  const double factor = policy.min_improvement_percent / 100.0;
  if (direction == Direction::kMaximize) return current < then * (1.0 + factor);
  return current > then * (1.0 - factor);
}

inline bool should_stop(const History& h, const EarlyStopPolicy& policy) {
  std::vector<double> best;
  best.reserve(h.observations.size());
  for (std::size_t i = 0; i < h.observations.size(); ++i) best.push_back(h.natural_best(i));
  return should_stop(best, h.config.n_init, policy, h.config.direction);
}

/// Earliest iteration (1-based) at which `policy` stops a best-so-far trace.
inline std::optional<std::size_t> stop_iteration(const std::vector<double>& natural_best,
                                                 std::size_t n_init, const EarlyStopPolicy& policy,
                                                 Direction direction) {
  std::vector<double> prefix;
  for (double b : natural_best) {
    prefix.push_back(b);
    if (should_stop(prefix, n_init, policy, direction)) return prefix.size();
  }
  return std::nullopt;
}

/**
 * Best-so-far after appending `next`: the running max over non-penalized
 * effective values. Penalized values count only while every observation so
 * far is penalized, so the trace can step down once, at the first real value.
 */
inline double running_best(const std::vector<Observation>& so_far, const Observation& next) {
  std::optional<double> real, penalized;
  auto take = [&](const Observation& o) {
    auto& slot = o.penalized ? penalized : real;
    slot = slot ? std::max(*slot, o.effective_value) : o.effective_value;
  };
  for (const auto& o : so_far) take(o);
  take(next);
  return real ? *real : *penalized;
}

inline ProjectionMatrix build_projection(const SessionConfig& cfg, std::size_t knobs) {
  const auto seed = derive_seed(cfg.seed, Stream::kProjection);
  if (cfg.projection == ProjectionKind::kIdentity) return make_identity(knobs);
  return make_projection(cfg.projection, knobs, cfg.dims, seed);
}

inline ValuePipeline build_pipeline(const SessionConfig& cfg, const ConfigSpace& space,
                                    const ProjectionMatrix& projection) {
  return ValuePipeline(space, projection, PipelineConfig{cfg.bias, cfg.buckets});
}

struct SessionResult {
  History history;
  std::string stop_reason;  ///< "budget" or "early-stop"
};

/// Observer hook invoked after each observation (progress logging).
using ProgressFn = std::function<void(const Observation&)>;

/**
 * Runs one tuning session:
 *   0. evaluate the default configuration (penalty baseline, not shown to the
 *      optimizer);
 *   1. build the projection once;
 *   2. suggest -> assemble -> evaluate -> penalize -> observe, the first
 *      n_init suggestions coming from the optimizer's LHS design;
 *   3. stop at the budget or when the early-stop policy fires.
 * Each observation is written to `sink` as soon as it exists. Evaluator spawn
 * failures propagate after the partial history has been written.
 */
inline SessionResult run_session(const SessionConfig& cfg, const ConfigSpace& space,
                                 Evaluator& evaluator, HistoryWriter* sink = nullptr,
                                 ProgressFn progress = {}) {
  validate_config(cfg);
  SessionResult result;
  History& h = result.history;
  h.config = cfg;
  h.space = space;
  h.projection = build_projection(cfg, space.size());
  const ValuePipeline pipeline = build_pipeline(cfg, space, h.projection);
  const double sign = orientation(cfg.direction);

  h.default_config.assignment = default_assignment(space);
  const auto def = evaluator.evaluate(h.default_config.assignment);
  h.default_config.status = def.status;
  h.default_config.raw_value = def.value;
  if (sink) sink->header(h);
  if (!def.is_ok())
    throw SessionError("default configuration crashed (" + def.cause +
                       "); no baseline for the crash penalty");

  auto optimizer = make_optimizer(cfg.optimizer);
  optimizer->init(domain_of(pipeline), cfg.n_init, derive_seed(cfg.seed, Stream::kOptimizer));

  result.stop_reason = "budget";
  for (std::size_t j = 1; j <= cfg.iters; ++j) {
    Observation o;
    o.iter = j;
    o.init = j <= cfg.n_init;
    o.point = optimizer->suggest();
    auto assembled = pipeline.assemble(o.point);
    o.projected = std::move(assembled.projected);
    o.assignment = std::move(assembled.assignment);
    o.specials = o.assignment.special_count();

    const auto outcome = evaluator.evaluate(o.assignment);
    o.status = outcome.status;
    o.raw_value = outcome.value;
    o.wall_ms = outcome.wall_time.count();
    o.cause = outcome.cause;
    if (outcome.is_ok()) {
      o.effective_value = sign * *outcome.value;
    } else {
      o.penalized = true;
      o.effective_value = sign * crash_penalty(*h.default_config.raw_value, h.observations, cfg.direction);
    }
    o.best = running_best(h.observations, o);

    optimizer->observe(o.point, o.effective_value);
    h.observations.push_back(std::move(o));
    if (sink) sink->observation(h.observations.back());
    if (progress) progress(h.observations.back());

    if (cfg.early_stop && should_stop(h, *cfg.early_stop)) {
      result.stop_reason = "early-stop";
      break;
    }
  }
  return result;
}

/// Builds the space and evaluator named in the config, then runs.
inline SessionResult run_session(const SessionConfig& cfg, HistoryWriter* sink = nullptr,
                                 ProgressFn progress = {}) {
  const auto space = parse_space(cfg.space_path);
  auto evaluator = make_evaluator(cfg.evaluator, space, derive_seed(cfg.seed, Stream::kNoise),
                                  cfg.timeout_seconds);
  return run_session(cfg, space, *evaluator, sink, std::move(progress));
}

/// Iterations whose logged assignment differs from a fresh re-assembly of the
/// logged point. Empty means the history replays exactly.
inline std::vector<std::size_t> replay_mismatches(const History& h) {
  const ValuePipeline pipeline = build_pipeline(h.config, h.space, h.projection);
  std::vector<std::size_t> bad;
  for (const auto& o : h.observations) {
    const auto again = pipeline.assemble(o.point);
    if (!(again.assignment == o.assignment) ||
        assignment_to_json(again.assignment) != assignment_to_json(o.assignment))
      bad.push_back(o.iter);
  }
  return bad;
}

}  // namespace knobtune
