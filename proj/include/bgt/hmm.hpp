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

#ifndef BGT_HMM_HPP
#define BGT_HMM_HPP

#include <cstdint>
#include <filesystem>
#include <vector>

#include "bgt/gmm.hpp"
#include "bgt/types.hpp"

namespace bgt {

// Fully connected HMM with one diagonal-covariance GMM per state.
struct ErgodicHmm {
  std::vector<double> initial;         // S
  std::vector<double> trans;           // S x S row-major, row-stochastic
  std::vector<DiagonalGmm> emissions;  // S

  int num_states() const { return static_cast<int>(emissions.size()); }
  int dims() const { return emissions.empty() ? 0 : emissions[0].dims(); }

  // Checks stochasticity (rows and initial sum to 1 within 1e-9) and that
  // all emission models share one dimension.
  void validate() const;
};

// log p(frames | h) via the scaled forward recursion. The per-frame
// emission matrix is computed in parallel; the recursion itself is serial.
double forward_log_likelihood(const ErgodicHmm& h, const FrameMatrix& frames);

// Most likely state path; ties broken toward the lower state index.
std::vector<int> viterbi_path(const ErgodicHmm& h, const FrameMatrix& frames);

// Baum-Welch training over a set of observation sequences. States are
// seeded by training a pooled GMM with states*components components and
// dealing its components round-robin across states; initial and transition
// probabilities start uniform. Each sweep accumulates per-show statistics
// (shows processed in parallel, merged in show order) and stops early when
// the relative likelihood gain drops below 1e-6. The trace holds the total
// log-likelihood of the model entering each sweep plus the final model's;
// it is non-decreasing.
ErgodicHmm train_hmm_baum_welch(const std::vector<FrameMatrix>& shows,
                                int states, int components, int iters,
                                std::uint64_t seed,
                                std::vector<double>* ll_trace = nullptr);

// Model file: JSON {initial, trans, emissions:[gmm...]}.
void save_hmm(const std::filesystem::path& path, const ErgodicHmm& h);
ErgodicHmm load_hmm(const std::filesystem::path& path);

}  // namespace bgt

#endif  // BGT_HMM_HPP
