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

#include <cmath>
#include <set>

#include "test_support.hpp"

namespace knobtune {
namespace {

using testing::enum_knob;
using testing::int_knob;
using testing::real_knob;

// Fixture mapping for the five-knob walkthrough: the first low-dimensional
// coordinate drives both hybrid knobs with opposite signs.
ProjectionMatrix five_knob_projection() {
  return hesbo_from_tables({0, 0, 1, 1, 1}, {1, -1, 1, 1, -1}, 2);
}

TEST(Grid, FivePoints) {
  const auto g = bucketize_grid(1.0, 5);
  EXPECT_EQ(g.values(), (std::vector<double>{-1.0, -0.5, 0.0, 0.5, 1.0}));
  EXPECT_EQ(g.snap(0.30001), 0.5);
  EXPECT_EQ(g.snap(0.25), 0.5);  // tie goes up
  EXPECT_EQ(g.snap(-0.25), 0.0);
  EXPECT_EQ(g.snap(-7.0), -1.0);
  EXPECT_EQ(g.snap(7.0), 1.0);
  EXPECT_THROW(bucketize_grid(1.0, 1), std::invalid_argument);
}

TEST(Grid, TenThousandPoints) {
  const auto g = bucketize_grid(1.0, 10000);
  EXPECT_DOUBLE_EQ(g.step(), 2.0 / 9999.0);
  EXPECT_EQ(g.value(0), -1.0);
  EXPECT_EQ(g.value(9999), 1.0);
  const auto values = g.values();
  EXPECT_EQ(std::set<double>(values.begin(), values.end()).size(), 10000u);
  for (double v : values) EXPECT_TRUE(g.contains(v));
  EXPECT_FALSE(g.contains(0.5 * (values[10] + values[11])));
}

TEST(NormalizeUnit, Examples) {
  EXPECT_EQ(normalize_unit(-1.0), 0.0);
  EXPECT_EQ(normalize_unit(0.0), 0.5);
  EXPECT_EQ(normalize_unit(1.0), 1.0);
  EXPECT_THROW(normalize_unit(1.0001), std::invalid_argument);
  EXPECT_THROW(normalize_unit(std::nan("")), std::invalid_argument);
}

TEST(ApplyBias, Examples) {
  const auto k = int_knob("backend_flush_after", 0, 256, 0, {0});
  EXPECT_EQ(apply_bias(0.1, k, 0.2).special, std::optional<std::size_t>(0));
  const auto at_edge = apply_bias(0.2, k, 0.2);
  EXPECT_FALSE(at_edge.special);
  EXPECT_DOUBLE_EQ(at_edge.unit, 0.0);
  const auto mid = apply_bias(0.6, k, 0.2);
  EXPECT_FALSE(mid.special);
  EXPECT_DOUBLE_EQ(mid.unit, 0.5);
}

TEST(ApplyBias, MultipleSpecialsTakeConsecutiveSegments) {
  const auto k = int_knob("k", 0, 100, 0, {0, 100});
  EXPECT_EQ(apply_bias(0.05, k, 0.1).special, std::optional<std::size_t>(0));
  EXPECT_EQ(apply_bias(0.15, k, 0.1).special, std::optional<std::size_t>(1));
  EXPECT_DOUBLE_EQ(apply_bias(0.6, k, 0.1).unit, 0.5);
  EXPECT_THROW(apply_bias(0.5, k, 0.5), std::invalid_argument);
}

TEST(ApplyBias, NonHybridPassesThrough) {
  const auto k = real_knob("r", 0, 1, 0);
  const auto r = apply_bias(0.1234, k, 0.2);
  EXPECT_FALSE(r.special);
  EXPECT_EQ(r.unit, 0.1234);
}

TEST(ApplyBias, RegularBranchStrictlyIncreasing) {
  const auto k = int_knob("k", 0, 100, 0, {0, 100});
  double prev = -1.0;
  for (int i = 0; i <= 1000; ++i) {
    const double u = 0.2 + 0.8 * i / 1000.0;
    const auto r = apply_bias(u, k, 0.1);
    ASSERT_FALSE(r.special);
    EXPECT_GT(r.unit, prev);
    prev = r.unit;
  }
}

TEST(ApplyBias, SpecialFractionMatchesMass) {
  Rng rng(5);
  const auto one = int_knob("a", 0, 10, 0, {0});
  const auto two = int_knob("b", 0, 10, 0, {0, 10});
  const int n = 1000000;
  int s1 = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform01();
    s1 += apply_bias(u, one, 0.2).special ? 1 : 0;
    s2 += apply_bias(u, two, 0.2).special ? 1 : 0;
  }
  EXPECT_NEAR(static_cast<double>(s1) / n, 0.2, 0.005);
  EXPECT_NEAR(static_cast<double>(s2) / n, 0.4, 0.005);
}

TEST(UnitToValue, Examples) {
  EXPECT_DOUBLE_EQ(std::get<double>(unit_to_value(0.5, real_knob("geqo_selection_bias", 1.5, 2.0, 2.0))), 1.75);
  EXPECT_EQ(std::get<std::int64_t>(unit_to_value(0.25, int_knob("commit_delay", 0, 100000, 0))), 25000);
  const auto e = enum_knob("enable_seqscan", {"off", "on"}, "on");
  EXPECT_EQ(std::get<std::string>(unit_to_value(1.0, e)), "on");
  EXPECT_EQ(std::get<std::string>(unit_to_value(0.4999, e)), "off");
  EXPECT_EQ(std::get<std::string>(unit_to_value(0.5, e)), "on");
  EXPECT_THROW(unit_to_value(1.5, e), std::invalid_argument);
}

TEST(UnitToValue, IntegerRoundsHalfUp) {
  const auto k = int_knob("k", 0, 4, 0);
  EXPECT_EQ(std::get<std::int64_t>(unit_to_value(0.125, k)), 1);  // 0.5 -> 1
  EXPECT_EQ(std::get<std::int64_t>(unit_to_value(0.375, k)), 2);  // 1.5 -> 2
  EXPECT_EQ(std::get<std::int64_t>(unit_to_value(0.1249, k)), 0);
}

TEST(UnitToValue, RangeOverride) {
  const auto k = int_knob("backend_flush_after", 0, 256, 0, {0});
  EXPECT_EQ(std::get<std::int64_t>(unit_to_value(0.0, k, effective_numeric_range(k))), 1);
  EXPECT_EQ(std::get<std::int64_t>(unit_to_value(1.0, k, effective_numeric_range(k))), 256);
}

TEST(Assemble, FiveKnobWalkthroughExact) {
  const auto space = parse_space(testing::space_path("five_knobs.json"));
  const ValuePipeline pl(space, five_knob_projection(), {0.2, std::nullopt});
  const std::vector<double> p{-0.8, 0.4};
  const auto out = pl.assemble(p);
  const std::vector<double> projected{-0.8, 0.8, 0.4, 0.4, -0.4};
  for (std::size_t i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(out.projected[i], projected[i]);
  const auto& a = out.assignment;
  EXPECT_EQ(std::get<std::int64_t>(a.value("backend_flush_after")), 0);
  EXPECT_EQ(a[0].special, std::optional<std::size_t>(0));
  EXPECT_EQ(std::get<std::int64_t>(a.value("wal_buffers")), 229375);
  EXPECT_FALSE(a[1].special);
  EXPECT_EQ(std::get<std::int64_t>(a.value("commit_delay")), 70000);
  EXPECT_NEAR(std::get<double>(a.value("geqo_selection_bias")), 1.85, 1e-12);
  EXPECT_EQ(std::get<std::string>(a.value("enable_seqscan")), "off");
  EXPECT_EQ(a.special_count(), 1u);
}

// Same walkthrough with the point snapped onto the K=10000 grid first.
// Expected values come from exact rational arithmetic.
TEST(Assemble, FiveKnobWalkthroughBucketized) {
  const auto space = parse_space(testing::space_path("five_knobs.json"));
  const ValuePipeline pl(space, five_knob_projection(), {0.2, 10000});
  const auto& g = *pl.grid();
  const std::vector<double> p{g.snap(-0.8), g.snap(0.4)};
  EXPECT_NEAR(p[0], -7999.0 / 9999.0, 1e-15);
  EXPECT_NEAR(p[1], 1333.0 / 3333.0, 1e-15);
  const auto a = assemble_config(pl, p);
  EXPECT_EQ(std::get<std::int64_t>(a.value("backend_flush_after")), 0);
  EXPECT_EQ(std::get<std::int64_t>(a.value("wal_buffers")), 229372);
  EXPECT_EQ(std::get<std::int64_t>(a.value("commit_delay")), 69997);
  EXPECT_NEAR(std::get<double>(a.value("geqo_selection_bias")), 1.84998499849985, 1e-12);
  EXPECT_EQ(std::get<std::string>(a.value("enable_seqscan")), "off");
  EXPECT_THROW(assemble_config(pl, std::vector<double>{-0.8, 0.4}), std::invalid_argument);
}

TEST(Assemble, IdentityEndpoint) {
  const ConfigSpace space({real_knob("x", 0, 10, 5)});
  const ValuePipeline pl(space, make_identity(1), {0.2, std::nullopt});
  EXPECT_EQ(std::get<double>(assemble_config(pl, std::vector<double>{1.0}).value("x")), 10.0);
}

TEST(Assemble, RejectsOutOfBoxAndBadConfig) {
  const auto space = parse_space(testing::space_path("five_knobs.json"));
  const ValuePipeline pl(space, five_knob_projection(), {0.2, std::nullopt});
  EXPECT_THROW(pl.assemble(std::vector<double>{1.5, 0.0}), std::invalid_argument);
  EXPECT_THROW(ValuePipeline(space, make_hesbo(4, 2, 0), {0.2, std::nullopt}), std::invalid_argument);
  EXPECT_THROW(ValuePipeline(space, five_knob_projection(), {1.0, std::nullopt}), std::invalid_argument);
  const ConfigSpace many({int_knob("k", 0, 100, 0, {0, 1, 2, 100})});
  EXPECT_THROW(ValuePipeline(many, make_identity(1), {0.25, std::nullopt}), ValidationError);
  EXPECT_NO_THROW(ValuePipeline(many, make_identity(1), {0.24, std::nullopt}));
}

TEST(Assemble, RemboClipsAndCounts) {
  const auto space = parse_space(testing::space_path("wide_range_knobs.json"));
  const ValuePipeline pl(space, make_rembo(4, 2, 1), {0.2, std::nullopt});
  ClipStats stats;
  const double b = pl.low_bound();
  const auto out = pl.assemble(std::vector<double>{b, -b}, &stats);
  EXPECT_EQ(stats.coordinates, 4u);
  for (double x : out.projected) EXPECT_TRUE(x >= -1.0 && x <= 1.0);
}

TEST(Assemble, Deterministic) {
  const auto space = parse_space(testing::space_path("postgres96.json"));
  const ValuePipeline pl(space, make_hesbo(space.size(), 16, 3), {});
  Rng rng(8);
  const auto domain = domain_of(pl);
  for (int t = 0; t < 50; ++t) {
    const auto p = domain.uniform(rng);
    EXPECT_EQ(assemble_config(pl, p), assemble_config(pl, p));
  }
}

// Every grid point yields in-domain values; special flags name real specials.
TEST(Assemble, TotalityFuzz) {
  const auto space = parse_space(testing::space_path("postgres96.json"));
  for (auto kind : {ProjectionKind::kHesbo, ProjectionKind::kRembo}) {
    const ValuePipeline pl(space, make_projection(kind, space.size(), 16, 4), {});
    const auto domain = domain_of(pl);
    Rng rng(9);
    for (int t = 0; t < 5000; ++t) {
      const auto a = assemble_config(pl, domain.uniform(rng));
      ASSERT_EQ(a.size(), space.size());
      for (std::size_t i = 0; i < space.size(); ++i) {
        ASSERT_TRUE(in_domain(space[i], a[i].value)) << space[i].name;
        if (a[i].special) {
          ASSERT_EQ(special_index(space[i], a[i].value), a[i].special);
        }
      }
    }
  }
}

TEST(Assemble, NonHybridKnobsIgnoreBias) {
  const auto space = parse_space(testing::space_path("postgres96.json"));
  const auto proj = make_hesbo(space.size(), 16, 12);
  const ValuePipeline with(space, proj, {0.2, 10000});
  const ValuePipeline without(space, proj, {0.0, 10000});
  Rng rng(10);
  const auto domain = domain_of(with);
  for (int t = 0; t < 500; ++t) {
    const auto p = domain.uniform(rng);
    const auto a = assemble_config(with, p);
    const auto b = assemble_config(without, p);
    for (std::size_t i = 0; i < space.size(); ++i)
      if (!is_hybrid(space[i])) {
        ASSERT_EQ(a[i], b[i]) << space[i].name;
      }
  }
}

// With bias 0 a hybrid knob spans its full range; the special value is only
// flagged when it is hit by plain rounding.
TEST(Assemble, ZeroBiasUsesFullRange) {
  const ConfigSpace space({int_knob("backend_flush_after", 0, 256, 0, {0})});
  const ValuePipeline pl(space, make_identity(1), {0.0, std::nullopt});
  const auto lo = assemble_config(pl, std::vector<double>{-1.0});
  EXPECT_EQ(std::get<std::int64_t>(lo[0].value), 0);
  EXPECT_EQ(lo[0].special, std::optional<std::size_t>(0));
  const auto mid = assemble_config(pl, std::vector<double>{0.0});
  EXPECT_EQ(std::get<std::int64_t>(mid[0].value), 128);
  EXPECT_FALSE(mid[0].special);
}

TEST(Assignment, JsonShape) {
  const auto space = parse_space(testing::space_path("five_knobs.json"));
  const auto a = default_assignment(space);
  const auto j = assignment_to_json(a);
  EXPECT_EQ(j["commit_delay"], 0);
  EXPECT_EQ(j["enable_seqscan"], "on");
  EXPECT_EQ(j["_special"], (nlohmann::ordered_json{"backend_flush_after", "wal_buffers"}));
}

TEST(BinomialBootstrap, ClosedFormAndMonteCarlo) {
  const double closed = 1.0 - std::pow(0.8, 10);
  EXPECT_NEAR(closed, 0.8926, 5e-5);
  Rng rng(77);
  const auto k = int_knob("k", 0, 256, 0, {0});
  const int trials = 100000;
  int hit = 0;
  for (int t = 0; t < trials; ++t) {
    bool any = false;
    for (int i = 0; i < 10; ++i) any |= apply_bias(rng.uniform01(), k, 0.2).special.has_value();
    hit += any ? 1 : 0;
  }
  EXPECT_NEAR(static_cast<double>(hit) / trials, closed, 0.01);
}

}  // namespace
}  // namespace knobtune
