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

#include "bgt/reference.hpp"

#include "bgt/errors.hpp"
#include "internal_util.hpp"

namespace bgt::serial {

double score_show(const DiagonalGmm& gmm, const FrameMatrix& frames) {
  if (frames.num_frames() == 0)
    throw ValidationError("score_show: empty input");
  double total = 0.0;
  for (const auto& chunk : internal::reduction_chunks(frames.num_frames())) {
    double acc = 0.0;
    for (int i = chunk.begin; i < chunk.end; ++i)
      acc += gmm.log_likelihood(frames.frame(i));
    total += acc;
  }
  return total;
}

GmmStats accumulate_em_stats(const DiagonalGmm& gmm,
                             const FrameMatrix& frames) {
  const int k = gmm.num_components();
  const int d = gmm.dims();
  GmmStats total(k, d);
  std::vector<double> gamma(k);
  for (const auto& chunk : internal::reduction_chunks(frames.num_frames())) {
    GmmStats stats(k, d);
    for (int i = chunk.begin; i < chunk.end; ++i) {
      const auto y = frames.frame(i);
      stats.log_likelihood += gmm.posteriors(y, gamma);
      for (int comp = 0; comp < k; ++comp) {
        const double g = gamma[comp];
        if (g == 0.0) continue;
        stats.occupancy[comp] += g;
        double* ms = stats.mean_sum.data() + static_cast<std::size_t>(comp) * d;
        double* sq = stats.sq_sum.data() + static_cast<std::size_t>(comp) * d;
        for (int dim = 0; dim < d; ++dim) {
          ms[dim] += g * y[dim];
          sq[dim] += g * y[dim] * y[dim];
        }
      }
    }
    total.merge(stats);
  }
  return total;
}

std::vector<double> bank_emission_matrix(const BackgroundBank& bank,
                                         const FrameMatrix& frames) {
  const int n = frames.num_frames();
  const int t = bank.num_backgrounds();
  std::vector<double> emissions(static_cast<std::size_t>(n) * t);
  std::vector<double> transformed(bank.canonical_gmm.dims());
  for (int i = 0; i < n; ++i) {
    const auto y = frames.frame(i);
    for (int bg = 0; bg < t; ++bg) {
      bank.transforms[bg].apply(y, transformed);
      emissions[static_cast<std::size_t>(i) * t + bg] =
          bank.canonical_gmm.log_likelihood(transformed) +
          bank.transforms[bg].log_abs_det();
    }
  }
  return emissions;
}

BackgroundTrack extract_track(const LabelSequence& x, int window) {
  if (window < 1) throw ValidationError("extract_track: window must be >= 1");
  x.validate();
  const int t = x.num_backgrounds;
  const int m = x.num_frames() / window;
  std::vector<double> rows(static_cast<std::size_t>(m) * t, 0.0);
  std::vector<int> counts(t);
  for (int w = 0; w < m; ++w) {
    std::fill(counts.begin(), counts.end(), 0);
    for (int p = 0; p < window; ++p) ++counts[x.labels[w * window + p]];
    double* out = rows.data() + static_cast<std::size_t>(w) * t;
    for (int bg = 0; bg < t; ++bg)
      out[bg] = static_cast<double>(counts[bg]) / window;
  }
  return BackgroundTrack(t, window, std::move(rows));
}

}  // namespace bgt::serial
