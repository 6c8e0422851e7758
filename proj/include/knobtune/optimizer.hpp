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
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "knobtune/pipeline.hpp"
#include "knobtune/rng.hpp"

namespace knobtune {

/// Optimizer-facing search box [-bound, bound]^dim, optionally bucketized.
struct SearchDomain {
  std::size_t dim = 1;
  double bound = 1.0;
  std::optional<Grid> grid;

  double span() const { return 2.0 * bound; }

  double snap(double x) const {
    x = std::clamp(x, -bound, bound);
    return grid ? grid->snap(x) : x;
  }

  bool contains(const LowDimPoint& p) const {
    if (p.size() != dim) return false;
    return std::all_of(p.begin(), p.end(), [&](double x) {
      return x >= -bound && x <= bound && (!grid || grid->contains(x));
    });
  }

  /// Uniform over the box, or over the grid values when bucketized.
  LowDimPoint uniform(Rng& rng) const {
    LowDimPoint p(dim);
    for (double& x : p) {
      x = grid ? grid->value(static_cast<std::size_t>(rng.uniform_index(grid->count())))
               : rng.uniform(-bound, bound);
    }
    return p;
  }
};

inline SearchDomain domain_of(const ValuePipeline& pipeline) {
  return SearchDomain{pipeline.low_dim(), pipeline.low_bound(), pipeline.grid()};
}

/**
 * Latin hypercube design of n points. Per coordinate: one random permutation
 * assigns samples to the n equal-width strata, then one uniform draw places
 * each sample inside its stratum. Points are snapped to the grid if any.
 */
inline std::vector<LowDimPoint> lhs_sample(std::size_t n, const SearchDomain& domain,
                                           Rng& rng) {
  if (n == 0) throw std::invalid_argument("lhs_sample needs n >= 1");
  std::vector<LowDimPoint> out(n, LowDimPoint(domain.dim));
  std::vector<std::size_t> strata(n);
  const double width = domain.span() / static_cast<double>(n);
  for (std::size_t j = 0; j < domain.dim; ++j) {
    for (std::size_t i = 0; i < n; ++i) strata[i] = i;
    rng.shuffle(strata);
    for (std::size_t i = 0; i < n; ++i) {
      const double x = -domain.bound + (static_cast<double>(strata[i]) + rng.uniform01()) * width;
      out[i][j] = domain.snap(x);
    }
  }
  return out;
}

// --- Gaussian process -------------------------------------------------------

inline constexpr double kBaseJitter = 1e-6;
inline constexpr double kMaxJitter = 1e-2;

class GpFitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Matern 5/2 correlation at distance r for length-scale l (unit variance).
inline double matern52(double r, double length_scale) {
  const double s = std::sqrt(5.0) * r / length_scale;
  return (1.0 + s + s * s / 3.0) * std::exp(-s);
}

/// Log-spaced hyperparameter grids searched by gp_fit.
inline std::vector<double> length_scale_grid() {
  std::vector<double> g(13);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = std::pow(10.0, -2.0 + 0.25 * static_cast<double>(i));
  return g;
}

inline std::vector<double> signal_variance_grid() {
  std::vector<double> g(9);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = std::pow(10.0, -1.0 + 0.25 * static_cast<double>(i));
  return g;
}

struct GpHyper {
  double length_scale = 1.0;
  double signal_variance = 1.0;
  double jitter = kBaseJitter;
  double log_marginal_likelihood = 0.0;
};

/// Zero mean, unit variance. A constant sample is only centred.
inline std::vector<double> standardize(const std::vector<double>& y) {
  if (y.empty()) return {};
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  double var = 0.0;
  for (double v : y) var += (v - mean) * (v - mean);
  double sd = std::sqrt(var / static_cast<double>(y.size()));
  if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) sd = 1.0;
  std::vector<double> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = (y[i] - mean) / sd;
  return out;
}

/// Lowest index whose score is within a relative 1e-9 of the maximum. Keeps
/// argmax decisions stable under last-bit rounding differences.
inline std::size_t stable_argmax(const std::vector<double>& scores) {
  double best = -std::numeric_limits<double>::infinity();
  for (double s : scores) best = std::max(best, s);
  const double tol = 1e-9 * std::max(1.0, std::abs(best));
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (scores[i] >= best - tol) return i;
  return 0;
}

/**
 * Zero-mean GP with a Matern 5/2 kernel and a single shared length-scale.
 * Hyperparameters maximize the log marginal likelihood over a fixed
 * 13 x 9 grid; no gradients.
 */
class GaussianProcess {
 public:
  void fit(const std::vector<LowDimPoint>& points, const std::vector<double>& y) {
    if (points.size() < 2) throw GpFitError("GP fit needs at least 2 observations");
    load(points, y);
    const auto n = x_.rows();

    Eigen::MatrixXd dist(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      dist(i, i) = 0.0;
      for (Eigen::Index j = 0; j < i; ++j) dist(i, j) = dist(j, i) = (x_.row(i) - x_.row(j)).norm();
    }

    const auto ls = length_scale_grid();
    const auto sv = signal_variance_grid();
    std::vector<GpHyper> candidates;
    std::vector<double> scores;
    Eigen::MatrixXd corr(n, n);
    for (double l : ls) {
      corr = dist.unaryExpr([l](double r) { return matern52(r, l); });
      for (double s2 : sv) {
        auto fitted = try_factor(corr * s2, l, s2);
        if (!fitted) continue;
        candidates.push_back(*fitted);
        scores.push_back(fitted->log_marginal_likelihood);
      }
    }
    if (candidates.empty())
      throw GpFitError("covariance is singular even with jitter " + std::to_string(kMaxJitter));
    set_hyper(candidates[stable_argmax(scores)]);
  }

  /// Refit with fixed hyperparameters (jitter still escalates if needed).
  void fit_fixed(const std::vector<LowDimPoint>& points, const std::vector<double>& y,
                 double length_scale, double signal_variance) {
    load(points, y);
    const auto n = x_.rows();
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        k(i, j) = signal_variance * matern52((x_.row(i) - x_.row(j)).norm(), length_scale);
    auto fitted = try_factor(k, length_scale, signal_variance);
    if (!fitted) throw GpFitError("covariance is singular even with jitter " + std::to_string(kMaxJitter));
    set_hyper(*fitted);
  }

  const GpHyper& hyper() const { return hyper_; }

  struct Prediction {
    Eigen::VectorXd mean;
    Eigen::VectorXd variance;
  };

  Prediction predict(const std::vector<LowDimPoint>& queries) const {
    const auto n = x_.rows();
    const auto m = static_cast<Eigen::Index>(queries.size());
    Eigen::MatrixXd kstar(n, m);
    Eigen::VectorXd q(x_.cols());
    for (Eigen::Index c = 0; c < m; ++c) {
      for (Eigen::Index j = 0; j < q.size(); ++j) q(j) = queries[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)];
      for (Eigen::Index i = 0; i < n; ++i)
        kstar(i, c) = hyper_.signal_variance * matern52((x_.row(i).transpose() - q).norm(), hyper_.length_scale);
    }
    Prediction out;
    out.mean = kstar.transpose() * alpha_;
    const Eigen::MatrixXd v = chol_.matrixL().solve(kstar);
    out.variance = (hyper_.signal_variance - v.colwise().squaredNorm().array()).max(0.0).matrix();
    return out;
  }

 private:
  void load(const std::vector<LowDimPoint>& points, const std::vector<double>& y) {
    if (points.empty() || points.size() != y.size())
      throw std::invalid_argument("points/values size mismatch");
    const auto n = static_cast<Eigen::Index>(points.size());
    const auto d = static_cast<Eigen::Index>(points.front().size());
    x_.resize(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < d; ++j)
        x_(i, j) = points[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    y_ = Eigen::Map<const Eigen::VectorXd>(y.data(), n);
  }

  std::optional<GpHyper> try_factor(const Eigen::MatrixXd& k, double l, double s2) {
    const auto n = k.rows();
    for (double jitter = kBaseJitter; jitter <= kMaxJitter * 1.0000001; jitter *= 10.0) {
      Eigen::LLT<Eigen::MatrixXd> llt(k + jitter * Eigen::MatrixXd::Identity(n, n));
      if (llt.info() != Eigen::Success) continue;
      const Eigen::VectorXd diag = llt.matrixLLT().diagonal();
      if (!(diag.minCoeff() > 0.0) || !diag.allFinite()) continue;
      const Eigen::VectorXd alpha = llt.solve(y_);
      const double lml = -0.5 * y_.dot(alpha) - diag.array().log().sum() -
                         0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
      if (!std::isfinite(lml)) continue;
      return GpHyper{l, s2, jitter, lml};
    }
    return std::nullopt;
  }

  void set_hyper(const GpHyper& h) {
    hyper_ = h;
    const auto n = x_.rows();
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        k(i, j) = h.signal_variance * matern52((x_.row(i) - x_.row(j)).norm(), h.length_scale);
    k += h.jitter * Eigen::MatrixXd::Identity(n, n);
    chol_.compute(k);
    alpha_ = chol_.solve(y_);
  }

  Eigen::MatrixXd x_;
  Eigen::VectorXd y_;
  GpHyper hyper_;
  Eigen::LLT<Eigen::MatrixXd> chol_;
  Eigen::VectorXd alpha_;
};

/// E[max(f - best, 0)] for f ~ N(mean, variance).
inline double expected_improvement(double mean, double variance, double best) {
  const double sd = std::sqrt(std::max(variance, 0.0));
  const double gain = mean - best;
  if (sd < 1e-12) return std::max(gain, 0.0);
  const double z = gain / sd;
  const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  return std::max(gain * cdf + sd * pdf, 0.0);
}

// --- suggest/observe contract ----------------------------------------------

/**
 * Every optimizer maximizes. Until n_init points have been suggested it
 * replays a Latin hypercube design; afterwards next_point() decides.
 */
class Optimizer {
 public:
  virtual ~Optimizer() = default;

  void init(const SearchDomain& domain, std::size_t n_init, std::uint64_t seed) {
    domain_ = domain;
    rng_ = Rng(seed);
    observed_.clear();
    values_.clear();
    suggested_ = 0;
    design_.clear();
    if (n_init > 0) design_ = lhs_sample(n_init, domain_, rng_);
  }

  LowDimPoint suggest() {
    const std::size_t i = suggested_++;
    if (i < design_.size()) return design_[i];
    return next_point();
  }

  void observe(const LowDimPoint& point, double value) {
    if (!std::isfinite(value)) throw std::invalid_argument("observed value must be finite");
    observed_.push_back(point);
    values_.push_back(value);
    if (!incumbent_ || value > values_[*incumbent_]) incumbent_ = values_.size() - 1;
  }

  virtual std::string name() const = 0;

  const SearchDomain& domain() const { return domain_; }
  const std::vector<LowDimPoint>& observed() const { return observed_; }
  const std::vector<double>& values() const { return values_; }
  std::size_t iteration() const { return observed_.size(); }
  std::optional<std::size_t> incumbent() const { return incumbent_; }

 protected:
  virtual LowDimPoint next_point() = 0;

  /// Suggestions made after the initial design, counting from 1.
  std::size_t model_suggestions() const { return suggested_ - design_.size(); }

  Rng& rng() { return rng_; }

 private:
  SearchDomain domain_;
  Rng rng_;
  std::vector<LowDimPoint> design_;
  std::vector<LowDimPoint> observed_;
  std::vector<double> values_;
  std::optional<std::size_t> incumbent_;
  std::size_t suggested_ = 0;
};

class RandomSearch final : public Optimizer {
 public:
  std::string name() const override { return "random"; }

 protected:
  LowDimPoint next_point() override { return domain().uniform(rng()); }
};

/// Every kRandomInterleave-th model suggestion is a plain uniform sample.
inline constexpr std::size_t kRandomInterleave = 10;
inline constexpr std::size_t kUniformCandidates = 2000;
inline constexpr std::size_t kLocalCandidates = 500;
inline constexpr double kLocalScale = 0.1;

/**
 * GP + expected improvement. Candidates are kUniformCandidates uniform
 * samples followed by kLocalCandidates Gaussian perturbations of the
 * incumbent; the argmax is taken with ties broken by candidate index.
 */
class GpOptimizer final : public Optimizer {
 public:
  std::string name() const override { return "gp"; }

  const GaussianProcess& model() const { return gp_; }

  /// Candidates and EI scores of the most recent model-based suggestion.
  const std::vector<LowDimPoint>& last_candidates() const { return candidates_; }
  const std::vector<double>& last_scores() const { return scores_; }

 protected:
  LowDimPoint next_point() override {
    if (observed().size() < 2 || model_suggestions() % kRandomInterleave == 0)
      return domain().uniform(rng());

    const auto y = standardize(values());
    gp_.fit(observed(), y);
    const double best = *std::max_element(y.begin(), y.end());

    candidates_.clear();
    candidates_.reserve(kUniformCandidates + kLocalCandidates);
    for (std::size_t i = 0; i < kUniformCandidates; ++i) candidates_.push_back(domain().uniform(rng()));
    const auto& inc = observed()[*incumbent()];
    const double scale = kLocalScale * domain().span();
    for (std::size_t i = 0; i < kLocalCandidates; ++i) {
      LowDimPoint p(inc.size());
      for (std::size_t j = 0; j < p.size(); ++j) p[j] = domain().snap(inc[j] + rng().normal(0.0, scale));
      candidates_.push_back(std::move(p));
    }

    const auto pred = gp_.predict(candidates_);
    scores_.resize(candidates_.size());
    for (std::size_t i = 0; i < candidates_.size(); ++i)
      scores_[i] = expected_improvement(pred.mean(static_cast<Eigen::Index>(i)),
                                        pred.variance(static_cast<Eigen::Index>(i)), best);
    const double top = *std::max_element(scores_.begin(), scores_.end());
    if (!(top > 0.0)) return candidates_.front();
    return candidates_[stable_argmax(scores_)];
  }

 private:
  GaussianProcess gp_;
  std::vector<LowDimPoint> candidates_;
  std::vector<double> scores_;
};

inline std::unique_ptr<Optimizer> make_optimizer(const std::string& kind) {
  if (kind == "gp") return std::make_unique<GpOptimizer>();
  if (kind == "random") return std::make_unique<RandomSearch>();
  throw std::invalid_argument("unknown optimizer '" + kind + "'");
}

}  // namespace knobtune
