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

#include <gtest/gtest.h>

#include "test_support.hpp"

namespace knobtune {
namespace {

using testing::int_knob;
using testing::real_knob;

SyntheticSpec quadratic_spec(const ConfigSpace& space) {
  SyntheticSpec s;
  s.kind = SyntheticKind::kEmbeddedQuadratic;
  for (std::size_t i = 0; i < space.size(); ++i)
    if (is_numeric(space[i]) && s.effective_dims.size() < 8) s.effective_dims.push_back(i);
  for (std::size_t e = 0; e < s.effective_dims.size(); ++e) {
    s.targets.push_back(0.1 + 0.1 * static_cast<double>(e));
    s.weights.push_back(10.0);
  }
  return s;
}

/// Assignment whose effective knobs sit at (or next to) the targets.
KnobAssignment at_targets(const ConfigSpace& space, const SyntheticSpec& s, double shift = 0.0) {
  std::vector<AssignedKnob> out;
  for (const auto& a : default_assignment(space)) out.push_back(a);
  for (std::size_t e = 0; e < s.effective_dims.size(); ++e) {
    const auto& k = space[s.effective_dims[e]];
    const double t = std::clamp(s.targets[e] + shift, 0.0, 1.0);
    out[s.effective_dims[e]].value = k.min + t * (k.max - k.min);
    out[s.effective_dims[e]].special.reset();
  }
  return KnobAssignment(out);
}

ConfigSpace real_space(std::size_t n) {
  std::vector<KnobSpec> knobs;
  for (std::size_t i = 0; i < n; ++i) knobs.push_back(real_knob("r" + std::to_string(i), 0, 1, 0.5));
  return ConfigSpace(knobs);
}

TEST(EmbeddedQuadratic, PeakAtPlantedOptimum) {
  const auto space = real_space(90);
  const auto spec = quadratic_spec(space);
  SyntheticEvaluator ev(space, spec, 0);
  const auto at = ev.evaluate(at_targets(space, spec));
  ASSERT_TRUE(at.is_ok());
  EXPECT_DOUBLE_EQ(*at.value, 100.0);
  EXPECT_LT(*ev.evaluate(at_targets(space, spec, 0.05)).value, 100.0);
}

TEST(EmbeddedQuadratic, WorstCornerFormula) {
  auto space = real_space(90);
  SyntheticSpec spec;
  for (std::size_t e = 0; e < 8; ++e) {
    spec.effective_dims.push_back(e);
    spec.targets.push_back(0.0);
    spec.weights.push_back(10.0);
  }
  std::vector<AssignedKnob> knobs;
  for (const auto& k : space) knobs.push_back({k.name, 1.0, std::nullopt});
  EXPECT_DOUBLE_EQ(embedded_quadratic_value(space, KnobAssignment(knobs), spec), 20.0);
}

TEST(EmbeddedQuadratic, NonEffectiveKnobsIgnored) {
  const auto space = real_space(20);
  SyntheticSpec spec;
  spec.effective_dims = {0, 5};
  spec.targets = {0.3, 0.6};
  spec.weights = {10.0, 10.0};
  SyntheticEvaluator ev(space, spec, 0);
  Rng rng(1);
  const auto base = default_assignment(space);
  const double v0 = *ev.evaluate(base).value;
  for (int t = 0; t < 100; ++t) {
    std::vector<AssignedKnob> knobs(base.begin(), base.end());
    const auto i = 1 + rng.uniform_index(19);
    if (i == 5) continue;
    knobs[i].value = rng.uniform01();
    EXPECT_EQ(*ev.evaluate(KnobAssignment(knobs)).value, v0);
  }
}

TEST(EmbeddedQuadratic, NoiseIsSeededAndNoiseFreeIsPure) {
  const auto space = real_space(10);
  auto spec = quadratic_spec(space);
  SyntheticEvaluator pure(space, spec, 1);
  const auto a = default_assignment(space);
  EXPECT_EQ(*pure.evaluate(a).value, *pure.evaluate(a).value);
  spec.noise_sd = 1.0;
  SyntheticEvaluator n1(space, spec, 5), n2(space, spec, 5);
  const double x = *n1.evaluate(a).value;
  EXPECT_EQ(x, *n2.evaluate(a).value);
  EXPECT_NE(x, *n1.evaluate(a).value);
}

TEST(SpecialValueCliff, ShapeExamples) {
  const auto space = parse_space(testing::space_path("cliff.json"));
  const auto spec = plant_synthetic(SyntheticKind::kSpecialValueCliff, space, {});
  SyntheticEvaluator ev(space, spec, 0);
  auto with = [&](std::int64_t v) {
    std::vector<AssignedKnob> knobs;
    for (const auto& a : default_assignment(space)) knobs.push_back(a);
    knobs[0].value = v;
    return *ev.evaluate(KnobAssignment(knobs)).value;
  };
  EXPECT_DOUBLE_EQ(with(0), 80.0);
  EXPECT_DOUBLE_EQ(with(1), 50.0);
  EXPECT_DOUBLE_EQ(with(256), 70.0);
  double prev = 0.0;
  for (std::int64_t v = 1; v <= 256; ++v) {
    const double x = with(v);
    EXPECT_GE(x, prev);
    EXPECT_GE(with(0) - x, spec.bonus - spec.regular_gain - 1e-12);
    prev = x;
  }
}

TEST(SpecialValueCliff, Validation) {
  const auto space = parse_space(testing::space_path("cliff.json"));
  EXPECT_THROW(plant_synthetic(SyntheticKind::kSpecialValueCliff, space, {{"knob", "commit_delay"}}),
               std::invalid_argument);
  EXPECT_THROW(plant_synthetic(SyntheticKind::kSpecialValueCliff, space, {{"bonus", "10"}}),
               std::invalid_argument);
  EXPECT_THROW(plant_synthetic(SyntheticKind::kSpecialValueCliff, real_space(3), {}), std::invalid_argument);
}

TEST(CrashyQuadratic, CrashRegion) {
  const auto space = real_space(4);
  auto spec = quadratic_spec(space);
  spec.kind = SyntheticKind::kCrashyQuadratic;
  spec.crash_knob = 2;
  SyntheticEvaluator ev(space, spec, 0);
  const auto base = default_assignment(space);
  std::vector<AssignedKnob> knobs(base.begin(), base.end());
  knobs[2].value = 0.95;
  const auto out = ev.evaluate(KnobAssignment(knobs));
  EXPECT_FALSE(out.is_ok());
  EXPECT_FALSE(out.value);
  EXPECT_NE(out.cause.find("r2"), std::string::npos);
  knobs[2].value = 0.5;
  EXPECT_TRUE(ev.evaluate(KnobAssignment(knobs)).is_ok());
}

TEST(PlantSynthetic, DefaultsAndParams) {
  const auto space = parse_space(testing::space_path("postgres96.json"));
  const auto spec = plant_synthetic(SyntheticKind::kEmbeddedQuadratic, space, parse_params("noise=0.01"));
  EXPECT_EQ(spec.effective_dims.size(), 8u);
  EXPECT_DOUBLE_EQ(spec.noise_sd, 0.8);
  for (double t : spec.targets) EXPECT_TRUE(t >= 0.1 && t <= 0.9);
  for (auto i : spec.effective_dims) EXPECT_TRUE(is_numeric(space[i]));
  EXPECT_EQ(spec.effective_dims, plant_synthetic(SyntheticKind::kEmbeddedQuadratic, space, {}).effective_dims);
  EXPECT_NE(spec.effective_dims,
            plant_synthetic(SyntheticKind::kEmbeddedQuadratic, space, parse_params("plant_seed=3")).effective_dims);
  EXPECT_THROW(plant_synthetic(SyntheticKind::kEmbeddedQuadratic, space, parse_params("bogus=1")),
               std::invalid_argument);
  EXPECT_THROW(plant_synthetic(SyntheticKind::kEmbeddedQuadratic, space, parse_params("effective=91")),
               std::invalid_argument);
  EXPECT_THROW(parse_params("a"), std::invalid_argument);
  EXPECT_THROW(parse_synthetic_kind("rosenbrock"), std::invalid_argument);
}

TEST(MakeEvaluator, SpecStrings) {
  const auto space = parse_space(testing::space_path("cliff.json"));
  EXPECT_EQ(make_evaluator("synthetic:special_value_cliff", space, 0, 1.0)->describe(), "synthetic");
  EXPECT_EQ(make_evaluator("exec:/bin/true", space, 0, 1.0)->describe(), "exec");
  EXPECT_THROW(make_evaluator("python:foo", space, 0, 1.0), std::invalid_argument);
  EXPECT_EQ(split_command("  a  b\tc "), (std::vector<std::string>{"a", "b", "c"}));
}

class ExternalTest : public ::testing::Test {
 protected:
  ConfigSpace space_ = parse_space(testing::space_path("cliff.json"));
  KnobAssignment config_ = default_assignment(space_);
  EvalOutcome run(const std::string& script, double timeout = 5.0) {
    ExternalEvaluator ev({testing::fixture_path(script)}, timeout);
    return ev.evaluate(config_);
  }
};

TEST_F(ExternalTest, OkRoundTrip) {
  const auto out = run("stub_ok.sh");
  ASSERT_TRUE(out.is_ok()) << out.cause;
  EXPECT_EQ(*out.value, 123.0);
  EXPECT_GT(out.wall_time.count(), 0.0);
}

TEST_F(ExternalTest, NonzeroExitIsCrash) {
  const auto out = run("stub_exit1.sh");
  EXPECT_FALSE(out.is_ok());
  EXPECT_EQ(out.cause, "exit code 1");
}

TEST_F(ExternalTest, TimeoutIsCrash) {
  const auto out = run("stub_sleep.sh", 0.3);
  EXPECT_FALSE(out.is_ok());
  EXPECT_EQ(out.cause, "timeout");
  EXPECT_GE(out.wall_time.count(), 300.0);
  EXPECT_LT(out.wall_time.count(), 2000.0);
}

TEST_F(ExternalTest, GarbledAndReportedCrash) {
  EXPECT_EQ(run("stub_garbled.sh").cause, "garbled output");
  EXPECT_EQ(run("stub_reports_crash.sh").cause, "reported crash");
  // Exits 0 but writes nothing.
  ExternalEvaluator ev({"/bin/true"}, 5.0);
  EXPECT_EQ(ev.evaluate(config_).cause, "missing output file");
}

TEST_F(ExternalTest, ReadsAssignment) {
  std::vector<AssignedKnob> knobs(config_.begin(), config_.end());
  knobs[space_.index_of("commit_delay")].value = std::int64_t{2500};
  knobs[space_.index_of("enable_seqscan")].value = std::string("on");
  ExternalEvaluator ev({testing::fixture_path("stub_commit_delay.sh")}, 5.0);
  const auto out = ev.evaluate(KnobAssignment(knobs));
  ASSERT_TRUE(out.is_ok()) << out.cause;
  EXPECT_DOUBLE_EQ(*out.value, 2.5);
}

TEST_F(ExternalTest, SpawnFailureIsError) {
  ExternalEvaluator ev({"/nonexistent/evaluator"}, 5.0);
  EXPECT_THROW(ev.evaluate(config_), SpawnError);
}

}  // namespace
}  // namespace knobtune
