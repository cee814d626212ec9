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

// The parallel kernels use a fixed chunked reduction merged in chunk order,
// so their results must match the serial references bit for bit, whatever
// the thread count.

#include <doctest.h>

#include <vector>

#include "bgt/bgtrack.hpp"
#include "bgt/gmm.hpp"
#include "bgt/reference.hpp"
#include "bgt/rng.hpp"
#include "bgt/transforms.hpp"
#include "bgt/types.hpp"
#include "test_util.hpp"

namespace {

bgt::DiagonalGmm fixture_gmm(int components, int dims, std::uint64_t seed) {
  bgt::Rng rng(seed);
  std::vector<double> weights(components);
  double sum = 0.0;
  for (double& w : weights) {
    w = 0.5 + rng.uniform();
    sum += w;
  }
  for (double& w : weights) w /= sum;
  std::vector<double> means(static_cast<std::size_t>(components) * dims);
  std::vector<double> vars(means.size());
  for (double& m : means) m = rng.gaussian();
  for (double& v : vars) v = 0.6 + rng.uniform();
  return bgt::DiagonalGmm(weights, means, vars, dims);
}

}  // namespace

TEST_CASE("score_show matches the serial reference bitwise") {
  const auto gmm = fixture_gmm(8, 5, 201);
  for (int n : {1, 7, 64, 500, 3000}) {
    const auto frames = bgt_test::random_frames(n, 5, 300 + n);
    CHECK(bgt::score_show(gmm, frames) ==
          bgt::serial::score_show(gmm, frames));
  }
}

TEST_CASE("accumulate_em_stats matches the serial reference bitwise") {
  const auto gmm = fixture_gmm(4, 3, 203);
  for (int n : {1, 13, 64, 777}) {
    const auto frames = bgt_test::random_frames(n, 3, 400 + n);
    const auto fast = bgt::accumulate_em_stats(gmm, frames);
    const auto slow = bgt::serial::accumulate_em_stats(gmm, frames);
    CHECK(fast.log_likelihood == slow.log_likelihood);
    CHECK(fast.occupancy == slow.occupancy);
    CHECK(fast.mean_sum == slow.mean_sum);
    CHECK(fast.sq_sum == slow.sq_sum);
  }
}

TEST_CASE("bank_emission_matrix matches the serial reference bitwise") {
  bgt::BackgroundBank bank;
  bank.canonical_gmm = fixture_gmm(4, 2, 205);
  bank.transforms.push_back(bgt::CmllrTransform::identity(2));
  bank.transforms.push_back(
      bgt::CmllrTransform({1.0, 0.1, -0.1, 1.0}, {-2.0, 1.0}));
  bank.transforms.push_back(
      bgt::CmllrTransform({0.8, 0.0, 0.0, 1.2}, {0.5, -0.5}));
  const auto probs = bgt::bank_transition_log_probs(3, 0.98);
  bank.stay_log_prob = probs.first;
  bank.switch_log_prob = probs.second;

  for (int n : {1, 17, 256}) {
    const auto frames = bgt_test::random_frames(n, 2, 500 + n);
    CHECK(bgt::bank_emission_matrix(bank, frames) ==
          bgt::serial::bank_emission_matrix(bank, frames));
  }
}

TEST_CASE("extract_track matches the serial reference bitwise") {
  for (int n : {12, 100, 5000}) {
    const auto labels = bgt_test::random_labels(n, 5, 600 + n);
    const auto fast = bgt::extract_track(labels, 12);
    const auto slow = bgt::serial::extract_track(labels, 12);
    CHECK(fast.rows() == slow.rows());
    CHECK(fast.window() == slow.window());
  }
}
