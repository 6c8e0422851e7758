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

#include <sstream>

#include "test_support.hpp"

namespace knobtune {
namespace {

using testing::history_from_values;

/// Best-so-far first reaches `peak` at iteration `at` and stays there.
std::vector<double> reaching(double start, double peak, std::size_t at, std::size_t n) {
  std::vector<double> v(n, start);
  for (std::size_t i = 0; i < n; ++i) v[i] = i + 1 < at ? start + 0.001 * static_cast<double>(i) : start;
  v[at - 1] = peak;
  return v;
}

TEST(TimeToOptimal, TableRowEleven) {
  const auto base = history_from_values(reaching(100.0, 200.0, 99, 100));
  const auto treat = history_from_values(reaching(100.0, 200.0, 9, 100));
  const auto r = time_to_optimal(base, treat);
  EXPECT_EQ(r.baseline_iteration, 99u);
  ASSERT_TRUE(r.reached());
  EXPECT_EQ(*r.iteration, 9u);
  EXPECT_DOUBLE_EQ(*r.speedup, 11.0);
}

TEST(TimeToOptimal, SelfComparisonIsOne) {
  const auto h = history_from_values(reaching(1.0, 5.0, 37, 100));
  const auto r = time_to_optimal(h, h);
  EXPECT_EQ(*r.iteration, 37u);
  EXPECT_DOUBLE_EQ(*r.speedup, 1.0);
}

TEST(TimeToOptimal, NotReached) {
  const auto base = history_from_values({1.0, 3.0, 5.0});
  const auto treat = history_from_values({1.0, 2.0, 4.9});
  const auto r = time_to_optimal(base, treat);
  EXPECT_FALSE(r.reached());
  EXPECT_FALSE(r.speedup);
}

TEST(TimeToOptimal, MinimizeUsesLowerIsBetter) {
  const auto base = history_from_values({100, 90, 80, 80}, Direction::kMinimize);
  const auto treat = history_from_values({85, 79, 79, 79}, Direction::kMinimize);
  const auto r = time_to_optimal(base, treat);
  EXPECT_EQ(r.baseline_iteration, 3u);
  EXPECT_EQ(*r.iteration, 2u);
  EXPECT_DOUBLE_EQ(*r.speedup, 1.5);
}

TEST(TimeToOptimal, DirectionMismatch) {
  const auto a = history_from_values({1.0}, Direction::kMaximize);
  const auto b = history_from_values({1.0}, Direction::kMinimize);
  EXPECT_THROW(time_to_optimal(a, b), std::invalid_argument);
  EXPECT_THROW(final_improvement(a, b), std::invalid_argument);
  EXPECT_THROW(time_to_optimal(a, History{}), std::invalid_argument);
}

TEST(FinalImprovement, TableValues) {
  EXPECT_NEAR(final_improvement(1000.0, 1208.5, Direction::kMaximize), 20.85, 1e-9);
  EXPECT_DOUBLE_EQ(final_improvement(1000.0, 1000.0, Direction::kMaximize), 0.0);
  EXPECT_NEAR(final_improvement(100.0, 85.44, Direction::kMinimize), 14.56, 1e-9);
  EXPECT_THROW(final_improvement(0.0, 1.0, Direction::kMaximize), std::domain_error);
}

TEST(FinalImprovement, FromHistories) {
  const auto base = history_from_values({900, 1000});
  const auto treat = history_from_values({1100, 1208.5, 1000});
  EXPECT_NEAR(final_improvement(base, treat), 20.85, 1e-9);
  const auto lb = history_from_values({120, 100}, Direction::kMinimize);
  const auto lt = history_from_values({85.44, 90}, Direction::kMinimize);
  EXPECT_NEAR(final_improvement(lb, lt), 14.56, 1e-9);
}

TEST(Summary, PercentileMeanMedian) {
  const std::vector<double> xs{5, 1, 4, 2, 3};
  EXPECT_DOUBLE_EQ(mean(xs), 3.0);
  EXPECT_DOUBLE_EQ(median(xs), 3.0);
  EXPECT_DOUBLE_EQ(percentile(xs, 0), 1.0);
  EXPECT_DOUBLE_EQ(percentile(xs, 100), 5.0);
  EXPECT_DOUBLE_EQ(percentile(xs, 5), 1.2);
  EXPECT_DOUBLE_EQ(percentile(xs, 95), 4.8);
  EXPECT_DOUBLE_EQ(median({1, 2, 3, 4}), 2.5);
  EXPECT_THROW(mean({}), std::invalid_argument);
}

TEST(Csv, OneRowPerIteration) {
  const auto h = history_from_values({3, 1, 4, 1, 5});
  std::ostringstream out;
  write_convergence_csv(out, h);
  EXPECT_EQ(out.str(), "iteration,best_value\n1,3\n2,3\n3,4\n4,4\n5,5\n");
  const auto m = history_from_values({3, 1, 4}, Direction::kMinimize);
  std::ostringstream mo;
  write_convergence_csv(mo, m);
  EXPECT_EQ(mo.str(), "iteration,best_value\n1,3\n2,1\n3,1\n");
}

TEST(BestSoFar, MonotoneInEffectiveOrientation) {
  Rng rng(3);
  std::vector<double> v(200);
  for (double& x : v) x = rng.normal();
  for (auto dir : {Direction::kMaximize, Direction::kMinimize}) {
    const auto h = history_from_values(v, dir);
    for (std::size_t i = 1; i < h.observations.size(); ++i)
      EXPECT_GE(h.observations[i].best, h.observations[i - 1].best);
  }
}

}  // namespace
}  // namespace knobtune
