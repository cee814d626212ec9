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
#include <vector>

#include "bgt/errors.hpp"
#include "bgt/gmm.hpp"
#include "bgt/hmm.hpp"
#include "bgt/rng.hpp"
#include "bgt/types.hpp"
#include "test_util.hpp"

using bgt_test::TempDir;

namespace {

bgt::DiagonalGmm single_gaussian(double mean, double var) {
  return bgt::DiagonalGmm({1.0}, {mean}, {var}, 1);
}

bgt::ErgodicHmm two_state_hmm(double separation) {
  bgt::ErgodicHmm h;
  h.initial = {0.6, 0.4};
  h.trans = {0.7, 0.3, 0.4, 0.6};
  h.emissions = {single_gaussian(0.0, 1.0), single_gaussian(separation, 1.0)};
  return h;
}

// log p(frames) by summing over every state path in log space.
double enumerate_forward(const bgt::ErgodicHmm& h,
                         const bgt::FrameMatrix& frames) {
  const int s_count = h.num_states();
  const int n = frames.num_frames();
  long total = 1;
  for (int i = 0; i < n; ++i) total *= s_count;

  double max_score = -std::numeric_limits<double>::infinity();
  std::vector<double> scores;
  scores.reserve(total);
  std::vector<int> path(n);
  for (long i = 0; i < total; ++i) {
    long rest = i;
    for (int f = 0; f < n; ++f) {
      path[f] = static_cast<int>(rest % s_count);
      rest /= s_count;
    }
    double score = std::log(h.initial[path[0]]) +
                   h.emissions[path[0]].log_likelihood(frames.frame(0));
    for (int f = 1; f < n; ++f) {
      score += std::log(h.trans[path[f - 1] * s_count + path[f]]) +
               h.emissions[path[f]].log_likelihood(frames.frame(f));
    }
    max_score = std::max(max_score, score);
    scores.push_back(score);
  }
  double sum = 0.0;
  for (double s : scores) sum += std::exp(s - max_score);
  return max_score + std::log(sum);
}

std::vector<int> enumerate_viterbi(const bgt::ErgodicHmm& h,
                                   const bgt::FrameMatrix& frames) {
  const int s_count = h.num_states();
  const int n = frames.num_frames();
  long total = 1;
  for (int i = 0; i < n; ++i) total *= s_count;

  std::vector<int> best;
  double best_score = 0.0;
  std::vector<int> path(n);
  for (long i = 0; i < total; ++i) {
    long rest = i;
    for (int f = 0; f < n; ++f) {
      path[f] = static_cast<int>(rest % s_count);
      rest /= s_count;
    }
    double score = std::log(h.initial[path[0]]) +
                   h.emissions[path[0]].log_likelihood(frames.frame(0));
    for (int f = 1; f < n; ++f) {
      score += std::log(h.trans[path[f - 1] * s_count + path[f]]) +
               h.emissions[path[f]].log_likelihood(frames.frame(f));
    }
    if (best.empty() || score > best_score) {
      best = path;
      best_score = score;
    }
  }
  return best;
}

// One observation stream sampled from the model itself.
bgt::FrameMatrix sample_from(const bgt::ErgodicHmm& h, int n,
                             std::uint64_t seed, std::vector<int>* states) {
  bgt::Rng rng(seed);
  bgt::FrameMatrix frames(1, 10.0);
  frames.reserve_frames(n);
  int state = rng.categorical(h.initial);
  for (int i = 0; i < n; ++i) {
    if (i > 0) {
      std::span<const double> row(h.trans.data() +
                                      static_cast<std::size_t>(state) *
                                          h.num_states(),
                                  static_cast<std::size_t>(h.num_states()));
      state = rng.categorical(row);
    }
    if (states != nullptr) states->push_back(state);
    const std::vector<double> obs = {h.emissions[state].mean(0)[0] +
                                     std::sqrt(h.emissions[state].var(0)[0]) *
                                         rng.gaussian()};
    frames.append(obs);
  }
  return frames;
}

}  // namespace

TEST_CASE("single-state forward collapses to the emission sum") {
  bgt::ErgodicHmm h;
  h.initial = {1.0};
  h.trans = {1.0};
  h.emissions = {single_gaussian(0.5, 2.0)};

  const auto frames = bgt_test::random_frames(200, 1, 101);
  const double forward = bgt::forward_log_likelihood(h, frames);
  const double direct = bgt::score_show(h.emissions[0], frames);
  CHECK(std::abs(forward - direct) <= 1e-9 * std::max(1.0, std::abs(direct)));
}

TEST_CASE("one-frame forward mixes the initial distribution") {
  const auto h = two_state_hmm(3.0);
  bgt::FrameMatrix frames(1, 10.0);
  frames.append(std::vector<double>{1.2});

  const double expect = std::log(
      h.initial[0] *
          std::exp(h.emissions[0].log_likelihood(frames.frame(0))) +
      h.initial[1] *
          std::exp(h.emissions[1].log_likelihood(frames.frame(0))));
  CHECK(std::abs(bgt::forward_log_likelihood(h, frames) - expect) <= 1e-12);
}

TEST_CASE("forward matches exhaustive path enumeration") {
  bgt::Rng rng(103);
  for (int instance = 0; instance < 60; ++instance) {
    bgt::ErgodicHmm h = two_state_hmm(1.0 + 2.0 * rng.uniform());
    const double p = 0.2 + 0.6 * rng.uniform();
    const double q = 0.2 + 0.6 * rng.uniform();
    h.trans = {p, 1.0 - p, 1.0 - q, q};

    const int n = 1 + rng.uniform_int(6);
    bgt::FrameMatrix frames(1, 10.0);
    for (int i = 0; i < n; ++i)
      frames.append(std::vector<double>{3.0 * rng.gaussian()});

    const double fast = bgt::forward_log_likelihood(h, frames);
    const double slow = enumerate_forward(h, frames);
    CHECK(std::abs(fast - slow) <= 1e-8);
  }
}

TEST_CASE("forward is invariant under joint state relabeling") {
  const auto h = two_state_hmm(4.0);
  bgt::ErgodicHmm swapped;
  swapped.initial = {h.initial[1], h.initial[0]};
  swapped.trans = {h.trans[3], h.trans[2], h.trans[1], h.trans[0]};
  swapped.emissions = {h.emissions[1], h.emissions[0]};

  const auto frames = bgt_test::random_frames(50, 1, 104);
  const double a = bgt::forward_log_likelihood(h, frames);
  const double b = bgt::forward_log_likelihood(swapped, frames);
  CHECK(std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(a)));
}

TEST_CASE("viterbi_path trivial cases") {
  bgt::ErgodicHmm single;
  single.initial = {1.0};
  single.trans = {1.0};
  single.emissions = {single_gaussian(0.0, 1.0)};
  const auto frames = bgt_test::random_frames(30, 1, 105);
  CHECK(bgt::viterbi_path(single, frames) == std::vector<int>(30, 0));

  // Identity transitions force a constant path; identical emissions leave
  // the initial distribution to pick it.
  bgt::ErgodicHmm frozen;
  frozen.initial = {0.2, 0.5, 0.3};
  frozen.trans = {1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0};
  frozen.emissions = {single_gaussian(0.0, 1.0), single_gaussian(0.0, 1.0),
                      single_gaussian(0.0, 1.0)};
  CHECK(bgt::viterbi_path(frozen, frames) == std::vector<int>(30, 1));

  bgt::FrameMatrix empty(1, 10.0);
  CHECK_THROWS_AS(bgt::viterbi_path(single, empty), bgt::ValidationError);
  CHECK_THROWS_AS(bgt::forward_log_likelihood(single, empty),
                  bgt::ValidationError);
}

TEST_CASE("viterbi_path matches exhaustive argmax") {
  bgt::Rng rng(107);
  for (int instance = 0; instance < 60; ++instance) {
    bgt::ErgodicHmm h = two_state_hmm(1.0 + 2.0 * rng.uniform());
    const int n = 1 + rng.uniform_int(6);
    bgt::FrameMatrix frames(1, 10.0);
    for (int i = 0; i < n; ++i)
      frames.append(std::vector<double>{3.0 * rng.gaussian()});
    CHECK(bgt::viterbi_path(h, frames) == enumerate_viterbi(h, frames));
  }
}

TEST_CASE("forward dominates the best single path") {
  bgt::Rng rng(109);
  for (int instance = 0; instance < 20; ++instance) {
    const auto h = two_state_hmm(2.0);
    const auto frames = sample_from(h, 5, 1000 + instance, nullptr);
    const auto path = bgt::viterbi_path(h, frames);
    double path_score =
        std::log(h.initial[path[0]]) +
        h.emissions[path[0]].log_likelihood(frames.frame(0));
    for (int f = 1; f < frames.num_frames(); ++f) {
      path_score += std::log(h.trans[path[f - 1] * 2 + path[f]]) +
                    h.emissions[path[f]].log_likelihood(frames.frame(f));
    }
    CHECK(bgt::forward_log_likelihood(h, frames) >= path_score - 1e-9);
  }
}

TEST_CASE("baum-welch with one state matches pooled EM") {
  const auto pooled = bgt_test::random_frames(800, 2, 111);
  const int k = 3;
  const int iters = 10;

  auto gmm = bgt::train_gmm_em(pooled, k, iters, 0);
  gmm = bgt::run_em_sweeps(std::move(gmm), pooled, iters);
  const double em_ll = bgt::score_show(gmm, pooled);

  const auto hmm =
      bgt::train_hmm_baum_welch({pooled}, 1, k, iters, 0, nullptr);
  const double bw_ll = bgt::forward_log_likelihood(hmm, pooled);
  CHECK(std::abs(bw_ll - em_ll) <= 1e-6 * std::abs(em_ll));
}

TEST_CASE("baum-welch recovers a well-separated two-state chain") {
  bgt::ErgodicHmm truth = two_state_hmm(8.0);
  truth.trans = {0.9, 0.1, 0.2, 0.8};

  std::vector<bgt::FrameMatrix> shows;
  for (int s = 0; s < 4; ++s)
    shows.push_back(sample_from(truth, 2000, 200 + s, nullptr));

  const auto model = bgt::train_hmm_baum_welch(shows, 2, 1, 25, 0, nullptr);

  // Match learned states to the truth by emission mean.
  const int lo = model.emissions[0].mean(0)[0] < model.emissions[1].mean(0)[0]
                     ? 0
                     : 1;
  const int hi = 1 - lo;
  CHECK(std::abs(model.trans[lo * 2 + lo] - 0.9) <= 0.05);
  CHECK(std::abs(model.trans[lo * 2 + hi] - 0.1) <= 0.05);
  CHECK(std::abs(model.trans[hi * 2 + lo] - 0.2) <= 0.05);
  CHECK(std::abs(model.trans[hi * 2 + hi] - 0.8) <= 0.05);
}

TEST_CASE("baum-welch log-likelihood trace never decreases") {
  std::vector<bgt::FrameMatrix> shows;
  for (int s = 0; s < 3; ++s)
    shows.push_back(bgt_test::random_frames(400, 2, 300 + s));

  std::vector<double> trace;
  const auto model = bgt::train_hmm_baum_welch(shows, 3, 2, 12, 0, &trace);
  REQUIRE(trace.size() >= 2);
  for (std::size_t i = 1; i < trace.size(); ++i)
    CHECK(trace[i] >= trace[i - 1] - 1e-6 * std::abs(trace[i - 1]));

  // Stochasticity of the trained model.
  CHECK_NOTHROW(model.validate());
  double initial_sum = 0.0;
  for (double v : model.initial) initial_sum += v;
  CHECK(std::abs(initial_sum - 1.0) <= 1e-9);
  for (int r = 0; r < 3; ++r) {
    double row = 0.0;
    for (int c = 0; c < 3; ++c) row += model.trans[r * 3 + c];
    CHECK(std::abs(row - 1.0) <= 1e-9);
  }
}

TEST_CASE("baum-welch stochasticity holds for every sweep count") {
  std::vector<bgt::FrameMatrix> shows = {bgt_test::random_frames(300, 1, 310)};
  for (int iters = 1; iters <= 3; ++iters) {
    const auto model = bgt::train_hmm_baum_welch(shows, 2, 1, iters, 0);
    CHECK_NOTHROW(model.validate());
  }
}

TEST_CASE("train_hmm_baum_welch rejects insufficient data") {
  std::vector<bgt::FrameMatrix> shows = {bgt_test::random_frames(3, 1, 311)};
  CHECK_THROWS_AS(bgt::train_hmm_baum_welch(shows, 4, 2, 5, 0),
                  bgt::ValidationError);
}

TEST_CASE("hmm file round-trip") {
  TempDir dir("hmm_io");
  std::vector<bgt::FrameMatrix> shows = {bgt_test::random_frames(500, 2, 313)};
  const auto model = bgt::train_hmm_baum_welch(shows, 2, 2, 5, 0);
  bgt::save_hmm(dir / "model.json", model);
  const auto back = bgt::load_hmm(dir / "model.json");
  CHECK(back.initial == model.initial);
  CHECK(back.trans == model.trans);
  REQUIRE(back.num_states() == model.num_states());
  for (int s = 0; s < model.num_states(); ++s) {
    CHECK(back.emissions[s].weights() == model.emissions[s].weights());
    CHECK(back.emissions[s].means() == model.emissions[s].means());
    CHECK(back.emissions[s].vars() == model.emissions[s].vars());
  }

  const auto frames = bgt_test::random_frames(100, 2, 314);
  CHECK(bgt::forward_log_likelihood(back, frames) ==
        bgt::forward_log_likelihood(model, frames));
}
