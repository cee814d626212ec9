// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "bgt/errors.hpp"
#include "bgt/gmm.hpp"
#include "bgt/rng.hpp"
#include "bgt/types.hpp"
#include "test_util.hpp"

using bgt_test::TempDir;

namespace {

// Mixture density by direct summation, no log-sum-exp.
double naive_log_likelihood(const bgt::DiagonalGmm& gmm,
                            std::span<const double> y) {
  double total = 0.0;
  for (int k = 0; k < gmm.num_components(); ++k) {
    double density = 1.0;
    for (int d = 0; d < gmm.dims(); ++d) {
      const double diff = y[d] - gmm.mean(k)[d];
      const double var = gmm.var(k)[d];
      density *= std::exp(-0.5 * diff * diff / var) /
                 std::sqrt(2.0 * std::numbers::pi * var);
    }
    total += gmm.weight(k) * density;
  }
  return std::log(total);
}

bgt::DiagonalGmm random_gmm(int components, int dims, std::uint64_t seed) {
  bgt::Rng rng(seed);
  std::vector<double> weights(components);
  double weight_sum = 0.0;
  for (double& w : weights) {
    w = 0.2 + rng.uniform();
    weight_sum += w;
  }
  for (double& w : weights) w /= weight_sum;
  std::vector<double> means(static_cast<std::size_t>(components) * dims);
  std::vector<double> vars(means.size());
  for (double& m : means) m = 2.0 * rng.gaussian();
  for (double& v : vars) v = 0.5 + rng.uniform();
  return bgt::DiagonalGmm(weights, means, vars, dims);
}

}  // namespace

TEST_CASE("standard normal log-density at the mode") {
  bgt::DiagonalGmm gmm({1.0}, {0.0}, {1.0}, 1);
  const std::vector<double> y = {0.0};
  CHECK(std::abs(gmm.log_likelihood(y) -
                 (-0.5 * std::log(2.0 * std::numbers::pi))) <= 1e-12);
}

TEST_CASE("degenerate two-component mixture equals one component") {
  bgt::DiagonalGmm one({1.0}, {0.3, -0.7}, {1.5, 0.9}, 2);
  bgt::DiagonalGmm two({0.5, 0.5}, {0.3, -0.7, 0.3, -0.7},
                       {1.5, 0.9, 1.5, 0.9}, 2);
  const std::vector<double> y = {0.1, 0.2};
  CHECK(two.log_likelihood(y) == doctest::Approx(one.log_likelihood(y))
                                     .epsilon(1e-14));
}

TEST_CASE("log-likelihood matches the direct-summation oracle") {
  const auto gmm = random_gmm(5, 3, 17);
  bgt::Rng rng(18);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> y(3);
    for (double& v : y) v = 3.0 * rng.gaussian();
    const double fast = gmm.log_likelihood(y);
    const double naive = naive_log_likelihood(gmm, y);
    CHECK(std::abs(fast - naive) <= 1e-10 * std::max(1.0, std::abs(naive)));
  }
}

TEST_CASE("log-likelihood is invariant under component permutation") {
  const auto gmm = random_gmm(3, 2, 19);
  const std::vector<int> perm = {2, 0, 1};
  std::vector<double> weights(3), means(6), vars(6);
  for (int k = 0; k < 3; ++k) {
    weights[k] = gmm.weight(perm[k]);
    for (int d = 0; d < 2; ++d) {
      means[2 * k + d] = gmm.mean(perm[k])[d];
      vars[2 * k + d] = gmm.var(perm[k])[d];
    }
  }
  bgt::DiagonalGmm permuted(weights, means, vars, 2);
  const std::vector<double> y = {0.4, -1.1};
  CHECK(std::abs(permuted.log_likelihood(y) - gmm.log_likelihood(y)) <=
        1e-12);
}

TEST_CASE("gmm construction and scoring validate dimensions") {
  CHECK_THROWS_AS(bgt::DiagonalGmm({0.5, 0.6}, {0.0, 0.0}, {1.0, 1.0}, 1),
                  bgt::ValidationError);
  CHECK_THROWS_AS(bgt::DiagonalGmm({1.0}, {0.0}, {0.0}, 1),
                  bgt::ValidationError);
  bgt::DiagonalGmm gmm({1.0}, {0.0, 0.0}, {1.0, 1.0}, 2);
  const std::vector<double> y = {0.0};
  CHECK_THROWS_AS(gmm.log_likelihood(y), bgt::ValidationError);
}

TEST_CASE("posteriors sum to one and reproduce the log-likelihood") {
  const auto gmm = random_gmm(4, 2, 23);
  const std::vector<double> y = {0.5, -0.5};
  std::vector<double> gamma(4);
  const double ll = gmm.posteriors(y, gamma);
  CHECK(std::abs(ll - gmm.log_likelihood(y)) <= 1e-12);
  double total = 0.0;
  for (double g : gamma) {
    CHECK(g >= 0.0);
    total += g;
  }
  CHECK(std::abs(total - 1.0) <= 1e-12);
}

TEST_CASE("score_show sums per-frame log-likelihoods") {
  const auto gmm = random_gmm(3, 2, 29);
  const auto frames = bgt_test::random_frames(300, 2, 30);

  // Single frame: the sum of one term.
  bgt::FrameMatrix single(2, 10.0);
  single.append(frames.frame(0));
  CHECK(bgt::score_show(gmm, single) == gmm.log_likelihood(frames.frame(0)));

  // Sequential accumulation oracle.
  double expect = 0.0;
  for (int n = 0; n < frames.num_frames(); ++n)
    expect += gmm.log_likelihood(frames.frame(n));
  const double got = bgt::score_show(gmm, frames);
  CHECK(std::abs(got - expect) <= 1e-9 * std::max(1.0, std::abs(expect)));

  bgt::FrameMatrix empty(2, 10.0);
  CHECK_THROWS_AS(bgt::score_show(gmm, empty), bgt::ValidationError);
}

TEST_CASE("score_show is additive under duplication") {
  const auto gmm = random_gmm(3, 2, 31);

  // One frame duplicated: doubling is exact in floating point.
  bgt::FrameMatrix one(2, 10.0);
  one.append(std::vector<double>{0.25, -0.75});
  bgt::FrameMatrix two(2, 10.0);
  two.append(one.frame(0));
  two.append(one.frame(0));
  CHECK(bgt::score_show(gmm, two) == 2.0 * bgt::score_show(gmm, one));

  // A whole show duplicated: the deterministic chunked sum regroups, so
  // additivity holds to rounding.
  const auto frames = bgt_test::random_frames(300, 2, 32);
  bgt::FrameMatrix doubled(2, 10.0);
  for (int n = 0; n < frames.num_frames(); ++n) doubled.append(frames.frame(n));
  for (int n = 0; n < frames.num_frames(); ++n) doubled.append(frames.frame(n));
  const double base = bgt::score_show(gmm, frames);
  const double twice = bgt::score_show(gmm, doubled);
  CHECK(std::abs(twice - 2.0 * base) <= 1e-12 * std::abs(base));
}

TEST_CASE("single-component EM reaches the closed form") {
  const auto frames = bgt_test::random_frames(500, 3, 41);
  const auto gmm = bgt::train_gmm_em(frames, 1, 5, 0);

  const int n = frames.num_frames();
  for (int d = 0; d < 3; ++d) {
    double mean = 0.0;
    for (int i = 0; i < n; ++i) mean += frames.frame(i)[d];
    mean /= n;
    double var = 0.0;
    for (int i = 0; i < n; ++i) {
      const double diff = frames.frame(i)[d] - mean;
      var += diff * diff;
    }
    var /= n;
    CHECK(std::abs(gmm.mean(0)[d] - mean) <= 1e-10);
    CHECK(std::abs(gmm.var(0)[d] - var) <= 1e-10);
  }
}

TEST_CASE("EM separates two distant clusters") {
  bgt::Rng rng(43);
  bgt::FrameMatrix frames(1, 10.0);
  for (int i = 0; i < 2000; ++i) {
    const double center = i % 2 == 0 ? -10.0 : 10.0;
    const std::vector<double> row = {center + rng.gaussian()};
    frames.append(row);
  }
  // The symmetric +-0.2 sigma split starts both components straddling the
  // two clusters; escaping that configuration takes a few dozen sweeps.
  const auto gmm = bgt::train_gmm_em(frames, 2, 50, 0);
  REQUIRE(gmm.num_components() == 2);
  std::vector<double> means = {gmm.mean(0)[0], gmm.mean(1)[0]};
  std::sort(means.begin(), means.end());
  CHECK(std::abs(means[0] - (-10.0)) <= 0.1);
  CHECK(std::abs(means[1] - 10.0) <= 0.1);
  CHECK(std::abs(gmm.weight(0) - 0.5) <= 0.05);
  CHECK(std::abs(gmm.weight(1) - 0.5) <= 0.05);
}

TEST_CASE("EM training log-likelihood is non-decreasing") {
  const auto frames = bgt_test::random_frames(5000, 7, 47);
  bgt::EmTrace trace;
  const auto gmm = bgt::train_gmm_em(frames, 4, 8, 0, &trace);
  CHECK(gmm.num_components() == 4);
  REQUIRE(!trace.empty());
  for (const auto& stage : trace) {
    for (std::size_t i = 1; i < stage.sweep_log_likelihoods.size(); ++i) {
      const double prev = stage.sweep_log_likelihoods[i - 1];
      const double cur = stage.sweep_log_likelihoods[i];
      CHECK(cur >= prev - 1e-8 * std::max(1.0, std::abs(prev)));
    }
  }
}

TEST_CASE("train_gmm_em validates its input") {
  const auto frames = bgt_test::random_frames(3, 2, 48);
  CHECK_THROWS_AS(bgt::train_gmm_em(frames, 4, 5, 0), bgt::ValidationError);

  auto poisoned = bgt_test::random_frames(10, 2, 49);
  poisoned.data()[5] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(bgt::train_gmm_em(poisoned, 2, 5, 0), bgt::ValidationError);
}

TEST_CASE("MAP adaptation limits") {
  const auto frames = bgt_test::random_frames(200, 2, 53);
  const auto prior = bgt::train_gmm_em(frames, 1, 5, 0);

  // tau = 0 with one component is the ML mean.
  const auto shifted = bgt_test::random_frames(100, 2, 54);
  const auto ml = bgt::map_adapt_means(prior, shifted, 0.0);
  for (int d = 0; d < 2; ++d) {
    double mean = 0.0;
    for (int n = 0; n < shifted.num_frames(); ++n) mean += shifted.frame(n)[d];
    mean /= shifted.num_frames();
    CHECK(std::abs(ml.mean(0)[d] - mean) <= 1e-10);
  }

  // Huge tau pins the prior.
  const auto pinned = bgt::map_adapt_means(prior, shifted, 1e9);
  for (int d = 0; d < 2; ++d)
    CHECK(std::abs(pinned.mean(0)[d] - prior.mean(0)[d]) <= 1e-6);

  CHECK_THROWS_AS(bgt::map_adapt_means(prior, shifted, -1.0),
                  bgt::ValidationError);
}

TEST_CASE("MAP adaptation matches the update formula") {
  bgt::DiagonalGmm prior({0.5, 0.5}, {0.0, 5.0}, {1.0, 1.0}, 1);
  bgt::FrameMatrix frames(1, 10.0);
  for (double v : {-1.0, 0.5, 4.0, 6.0}) {
    const std::vector<double> row = {v};
    frames.append(row);
  }
  const double tau = 3.0;

  // Direct evaluation with the prior's posteriors.
  double occ[2] = {0.0, 0.0};
  double weighted[2] = {0.0, 0.0};
  std::vector<double> gamma(2);
  for (int n = 0; n < frames.num_frames(); ++n) {
    prior.posteriors(frames.frame(n), gamma);
    for (int k = 0; k < 2; ++k) {
      occ[k] += gamma[k];
      weighted[k] += gamma[k] * frames.frame(n)[0];
    }
  }

  const auto adapted = bgt::map_adapt_means(prior, frames, tau);
  for (int k = 0; k < 2; ++k) {
    const double expect = (tau * prior.mean(k)[0] + weighted[k]) /
                          (tau + occ[k]);
    CHECK(std::abs(adapted.mean(k)[0] - expect) <= 1e-10);
    CHECK(adapted.var(k)[0] == prior.var(k)[0]);
    CHECK(adapted.weight(k) == prior.weight(k));
    // The adapted mean lies between the prior mean and the ML statistic.
    const double ml = weighted[k] / occ[k];
    const double lo = std::min(prior.mean(k)[0], ml);
    const double hi = std::max(prior.mean(k)[0], ml);
    CHECK(adapted.mean(k)[0] >= lo - 1e-12);
    CHECK(adapted.mean(k)[0] <= hi + 1e-12);
  }
}

TEST_CASE("gmm file round-trip") {
  TempDir dir("gmm_io");
  const auto frames = bgt_test::random_frames(400, 3, 59);
  const auto gmm = bgt::train_gmm_em(frames, 4, 5, 0);
  bgt::save_gmm(dir / "model.json", gmm);
  const auto back = bgt::load_gmm(dir / "model.json");
  CHECK(back.num_components() == gmm.num_components());
  CHECK(back.dims() == gmm.dims());
  CHECK(back.weights() == gmm.weights());
  CHECK(back.means() == gmm.means());
  CHECK(back.vars() == gmm.vars());

  CHECK_THROWS_AS(bgt::load_gmm(dir / "missing.json"), bgt::IoError);
}
