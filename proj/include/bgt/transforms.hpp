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

#ifndef BGT_TRANSFORMS_HPP
#define BGT_TRANSFORMS_HPP

#include <filesystem>
#include <span>
#include <vector>

#include "bgt/gmm.hpp"
#include "bgt/types.hpp"

namespace bgt {

// Affine feature transform y -> A y + b with invertible A. The log absolute
// determinant of A is cached at construction.
class CmllrTransform {
 public:
  CmllrTransform() = default;

  // a: D x D row-major, b: length D. Throws NumericError when
  // |det A| <= 1e-12.
  CmllrTransform(std::vector<double> a, std::vector<double> b);

  static CmllrTransform identity(int dims);

  int dims() const { return static_cast<int>(b_.size()); }
  const std::vector<double>& a_matrix() const { return a_; }
  const std::vector<double>& bias() const { return b_; }
  double log_abs_det() const { return log_abs_det_; }

  void apply(std::span<const double> y, std::span<double> out) const;

 private:
  std::vector<double> a_;  // D x D row-major
  std::vector<double> b_;  // D
  double log_abs_det_ = 0.0;
};

std::vector<double> apply_transform(const CmllrTransform& t,
                                    std::span<const double> y);

// log p_gmm(A y + b) + log|det A|.
double transformed_log_likelihood(const CmllrTransform& t,
                                  const DiagonalGmm& gmm,
                                  std::span<const double> y);

// One canonical GMM shared by all backgrounds, with one transform per
// background and a first-order stay/switch model governing label changes.
struct BackgroundBank {
  DiagonalGmm canonical_gmm;
  std::vector<CmllrTransform> transforms;
  double stay_log_prob = 0.0;
  double switch_log_prob = 0.0;

  int num_backgrounds() const { return static_cast<int>(transforms.size()); }

  // Checks T >= 1, matching dimensions, and that the stay/switch
  // probabilities form a distribution: exp(stay) + (T-1) exp(switch) = 1
  // within 1e-9.
  void validate() const;
};

// stay/switch log-probabilities for a given stay probability, the switch
// mass split uniformly over the other T-1 backgrounds.
std::pair<double, double> bank_transition_log_probs(int num_backgrounds,
                                                    double stay_prob);

struct CmllrEstimate {
  CmllrTransform transform;
  // Total transformed log-likelihood of the data: entry 0 is the score
  // under the identity transform, then one entry per iteration.
  std::vector<double> log_likelihood_trace;
};

// Maximum-likelihood estimation of a single transform against `gmm`. Each
// iteration refreshes component posteriors, accumulates row statistics, and
// re-solves every row of [A b] through the cofactor quadratic, keeping the
// root with the higher auxiliary value. The trace is non-decreasing.
CmllrEstimate estimate_cmllr(const DiagonalGmm& gmm, const FrameMatrix& frames,
                             int iters);

// Per-frame, per-background transformed log-likelihoods, N x T row-major.
// Parallel over frames.
std::vector<double> bank_emission_matrix(const BackgroundBank& bank,
                                         const FrameMatrix& frames);

// Viterbi over T backgrounds with uniform initial probabilities. Ties are
// broken toward the lower state index.
LabelSequence viterbi_backgrounds(std::span<const double> emissions,
                                  int num_frames, int num_backgrounds,
                                  double stay_log_prob,
                                  double switch_log_prob);

LabelSequence decode_backgrounds(const BackgroundBank& bank,
                                 const FrameMatrix& frames);

// Bank file: JSON {canonical_gmm, transforms:[{a,b}...], stay_log_prob,
// switch_log_prob}.
void save_bank(const std::filesystem::path& path, const BackgroundBank& bank);
BackgroundBank load_bank(const std::filesystem::path& path);

}  // namespace bgt

#endif  // BGT_TRANSFORMS_HPP
