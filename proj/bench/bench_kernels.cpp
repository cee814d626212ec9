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

// Compares the OpenMP kernels against their serial reference twins on
// realistically sized inputs. Run with --benchmark_min_time=0.1 for a quick
// smoke pass.

#include <benchmark/benchmark.h>

#include <vector>

#include "bgt/bgtrack.hpp"
#include "bgt/gmm.hpp"
#include "bgt/reference.hpp"
#include "bgt/rng.hpp"
#include "bgt/transforms.hpp"
#include "bgt/types.hpp"

namespace {

constexpr int kDims = 20;
constexpr int kFrames = 6000;
constexpr int kComponents = 32;

bgt::FrameMatrix make_frames(int frames, int dims) {
  bgt::Rng rng(42);
  std::vector<double> data(static_cast<std::size_t>(frames) * dims);
  for (double& v : data) v = rng.gaussian();
  return bgt::FrameMatrix(dims, 10.0, std::move(data));
}

bgt::DiagonalGmm make_gmm(int components, int dims) {
  bgt::Rng rng(7);
  std::vector<double> weights(components, 1.0 / components);
  std::vector<double> means(static_cast<std::size_t>(components) * dims);
  std::vector<double> vars(means.size(), 1.0);
  for (double& m : means) m = rng.gaussian();
  return bgt::DiagonalGmm(weights, means, vars, dims);
}

void BM_ScoreShowParallel(benchmark::State& state) {
  const auto frames = make_frames(kFrames, kDims);
  const auto gmm = make_gmm(kComponents, kDims);
  for (auto _ : state) {
    benchmark::DoNotOptimize(bgt::score_show(gmm, frames));
  }
}
BENCHMARK(BM_ScoreShowParallel);

void BM_ScoreShowSerial(benchmark::State& state) {
  const auto frames = make_frames(kFrames, kDims);
  const auto gmm = make_gmm(kComponents, kDims);
  for (auto _ : state) {
    benchmark::DoNotOptimize(bgt::serial::score_show(gmm, frames));
  }
}
BENCHMARK(BM_ScoreShowSerial);

void BM_EmStatsParallel(benchmark::State& state) {
  const auto frames = make_frames(kFrames, kDims);
  const auto gmm = make_gmm(kComponents, kDims);
  for (auto _ : state) {
    benchmark::DoNotOptimize(bgt::accumulate_em_stats(gmm, frames));
  }
}
BENCHMARK(BM_EmStatsParallel);

void BM_EmStatsSerial(benchmark::State& state) {
  const auto frames = make_frames(kFrames, kDims);
  const auto gmm = make_gmm(kComponents, kDims);
  for (auto _ : state) {
    benchmark::DoNotOptimize(bgt::serial::accumulate_em_stats(gmm, frames));
  }
}
BENCHMARK(BM_EmStatsSerial);

bgt::BackgroundBank make_bank(int backgrounds, int dims) {
  bgt::BackgroundBank bank;
  bank.canonical_gmm = make_gmm(8, dims);
  for (int t = 0; t < backgrounds; ++t) {
    bank.transforms.push_back(bgt::CmllrTransform::identity(dims));
  }
  const auto probs = bgt::bank_transition_log_probs(backgrounds, 0.98);
  bank.stay_log_prob = probs.first;
  bank.switch_log_prob = probs.second;
  return bank;
}

void BM_BankEmissionsParallel(benchmark::State& state) {
  const auto frames = make_frames(kFrames, kDims);
  const auto bank = make_bank(7, kDims);
  for (auto _ : state) {
    benchmark::DoNotOptimize(bgt::bank_emission_matrix(bank, frames));
  }
}
BENCHMARK(BM_BankEmissionsParallel);

void BM_BankEmissionsSerial(benchmark::State& state) {
  const auto frames = make_frames(kFrames, kDims);
  const auto bank = make_bank(7, kDims);
  for (auto _ : state) {
    benchmark::DoNotOptimize(bgt::serial::bank_emission_matrix(bank, frames));
  }
}
BENCHMARK(BM_BankEmissionsSerial);

bgt::LabelSequence make_labels(int frames, int backgrounds) {
  bgt::Rng rng(11);
  bgt::LabelSequence seq;
  seq.num_backgrounds = backgrounds;
  seq.labels.resize(frames);
  for (int& l : seq.labels) l = rng.uniform_int(backgrounds);
  return seq;
}

void BM_ExtractTrackParallel(benchmark::State& state) {
  const auto labels = make_labels(kFrames * 20, 7);
  for (auto _ : state) {
    benchmark::DoNotOptimize(bgt::extract_track(labels, 100));
  }
}
BENCHMARK(BM_ExtractTrackParallel);

void BM_ExtractTrackSerial(benchmark::State& state) {
  const auto labels = make_labels(kFrames * 20, 7);
  for (auto _ : state) {
    benchmark::DoNotOptimize(bgt::serial::extract_track(labels, 100));
  }
}
BENCHMARK(BM_ExtractTrackSerial);

}  // namespace

BENCHMARK_MAIN();
