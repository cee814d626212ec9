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

#ifndef BGT_GMM_HPP
#define BGT_GMM_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "bgt/types.hpp"

namespace bgt {

// Diagonal-covariance Gaussian mixture. Immutable after construction;
// per-component scoring constants are precomputed.
class DiagonalGmm {
 public:
  DiagonalGmm() = default;

  // weights: length K, sums to 1 within 1e-9. means/vars: K x D row-major,
  // variances strictly positive.
  DiagonalGmm(std::vector<double> weights, std::vector<double> means,
              std::vector<double> vars, int dims);

  int num_components() const { return static_cast<int>(weights_.size()); }
  int dims() const { return dims_; }

  double weight(int k) const { return weights_[k]; }
  std::span<const double> mean(int k) const {
    return {means_.data() + static_cast<std::size_t>(k) * dims_,
            static_cast<std::size_t>(dims_)};
  }
  std::span<const double> var(int k) const {
    return {vars_.data() + static_cast<std::size_t>(k) * dims_,
            static_cast<std::size_t>(dims_)};
  }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<double>& means() const { return means_; }
  const std::vector<double>& vars() const { return vars_; }

  // log sum_k w_k N(y; mu_k, diag sigma^2_k), via one-pass log-sum-exp.
  double log_likelihood(std::span<const double> y) const;

  // Fills gamma (length K) with component posteriors; returns the
  // log-likelihood of y.
  double posteriors(std::span<const double> y,
                    std::span<double> gamma) const;

  // log w_k + log N(y; mu_k, sigma^2_k) for every component.
  void component_log_terms(std::span<const double> y,
                           std::span<double> out) const;

 private:
  int dims_ = 0;
  std::vector<double> weights_;
  std::vector<double> means_;  // K x D
  std::vector<double> vars_;   // K x D
  // Cached log w_k - 0.5 sum_d log(2 pi sigma^2_kd) and -0.5 / sigma^2_kd.
  std::vector<double> log_gconst_;
  std::vector<double> neg_half_inv_var_;
};

// Per-frame log-likelihoods; parallel over frames.
std::vector<double> frame_log_likelihoods(const DiagonalGmm& gmm,
                                          const FrameMatrix& frames);

// Total log-likelihood of a show: sum_n log p(y_n). Parallel with a fixed
// chunked reduction, so the result is identical for any thread count.
double score_show(const DiagonalGmm& gmm, const FrameMatrix& frames);

// Zeroth/first/second-order EM statistics plus the data log-likelihood under
// the accumulating model.
struct GmmStats {
  std::vector<double> occupancy;  // K
  std::vector<double> mean_sum;   // K x D: sum_n gamma_k(n) y_n
  std::vector<double> sq_sum;     // K x D: sum_n gamma_k(n) y_n^2
  double log_likelihood = 0.0;

  GmmStats() = default;
  GmmStats(int components, int dims);
  void merge(const GmmStats& other);
};

GmmStats accumulate_em_stats(const DiagonalGmm& gmm,
                             const FrameMatrix& frames);

// Maximum-likelihood update from accumulated statistics. Components with
// negligible occupancy keep their previous parameters; variances are clamped
// to var_floor.
DiagonalGmm em_update(const GmmStats& stats, const DiagonalGmm& current,
                      std::span<const double> var_floor);

// 1e-4 of the global per-dimension variance of the training data.
std::vector<double> default_variance_floor(const FrameMatrix& frames);

// Runs EM sweeps with early stopping at relative improvement < 1e-6. The
// trace, when requested, holds the data log-likelihood of the model before
// each sweep plus the final model's log-likelihood; it is non-decreasing.
DiagonalGmm run_em_sweeps(DiagonalGmm gmm, const FrameMatrix& frames,
                          int sweeps, std::vector<double>* ll_trace = nullptr,
                          std::span<const double> var_floor = {});

struct EmStage {
  int components = 0;
  std::vector<double> sweep_log_likelihoods;
};
using EmTrace = std::vector<EmStage>;

// Binary-splitting EM: starts from the global single Gaussian and doubles
// the component count (perturbing means by +-0.2 sigma) until `components`
// is reached, running up to `iters` EM sweeps after each split. Training is
// deterministic; `seed` is accepted for interface stability with randomized
// initializers.
DiagonalGmm train_gmm_em(const FrameMatrix& frames, int components, int iters,
                         std::uint64_t seed, EmTrace* trace = nullptr);

// MAP adaptation of the means toward the data, relevance factor tau >= 0:
//   mu'_k = (tau mu_k + sum_n gamma_k(n) y_n) / (tau + sum_n gamma_k(n)).
// Weights and variances are copied from the prior.
DiagonalGmm map_adapt_means(const DiagonalGmm& prior, const FrameMatrix& frames,
                            double tau);

// Model file: JSON {weights, means, vars, dims, K}.
void save_gmm(const std::filesystem::path& path, const DiagonalGmm& gmm);
DiagonalGmm load_gmm(const std::filesystem::path& path);

}  // namespace bgt

#endif  // BGT_GMM_HPP
