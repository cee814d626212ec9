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

#ifndef BGT_SVM_HPP
#define BGT_SVM_HPP

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bgt/gmm.hpp"
#include "bgt/types.hpp"

namespace bgt {

// Fixed-length show representation: the concatenated MAP-adapted component
// means of a show GMM.
struct Supervector {
  std::vector<double> values;  // ubm components x dims
  std::string source_show;
};

// MAP-adapts the UBM means toward the show and concatenates them in
// component order.
Supervector build_supervector(const DiagonalGmm& ubm, const FrameMatrix& frames,
                              double tau, std::string source_show = {});

// exp(-gamma ||x - y||^2).
double gaussian_kernel(std::span<const double> x, std::span<const double> y,
                       double gamma);

struct SvmModel {
  std::vector<std::vector<double>> support_vectors;
  std::vector<double> alphas_signed;  // alpha_i * y_i, |value| <= c
  double bias = 0.0;
  double gamma = 0.0;
  double c = 0.0;
};

// Two-variable SMO on the Gaussian kernel. Violators are examined from the
// largest KKT violation down (deterministic order); each is matched with
// the point of maximal |E_i - E_j| first and an ascending scan second, and
// the first pair that moves is taken. Trains until every KKT violation is
// below tol.
SvmModel train_svm_smo(const std::vector<std::vector<double>>& x,
                       const std::vector<int>& y, double c, double gamma,
                       double tol = 1e-3);

// sum_i alphas_signed[i] k(sv_i, x) + bias.
double svm_decision(const SvmModel& m, std::span<const double> x);

// Argmax of svm_decision over genre models; ties go to the
// lexicographically smallest genre name.
std::pair<std::string, double> classify_one_vs_rest(
    const std::vector<std::pair<std::string, SvmModel>>& models,
    std::span<const double> x);

// One-vs-rest model per genre plus the shared preprocessing: supervectors
// are z-normalized per dimension with training-set statistics before both
// training and scoring.
struct SvmGenreModel {
  std::string name;
  SvmModel model;
  std::vector<double> norm_mean;
  std::vector<double> norm_std;
};

struct SvmModelSet {
  std::vector<SvmGenreModel> genres;
  std::string ubm_ref;  // path of the UBM model file, relative to the set
  double tau = 10.0;
  double gamma = 0.0;
  double c = 1.0;
};

// Trains one model per genre name over the labeled supervectors. gamma <= 0
// selects the 1/F default. Genre models are trained in parallel.
SvmModelSet train_svm_genre_set(const std::vector<std::string>& genre_names,
                                const std::vector<Supervector>& supervectors,
                                const std::vector<std::string>& labels,
                                double c, double gamma, double tau,
                                std::string ubm_ref);

// z-normalizes a raw supervector with the stats stored for one genre, then
// scores it. Used by classification; exposed for tests.
double genre_decision(const SvmGenreModel& genre, std::span<const double> raw);

// Model set file: JSON {genres:[{name, model, norm_mean, norm_std}],
// ubm_ref, tau, gamma, c}.
void save_svm_set(const std::filesystem::path& path, const SvmModelSet& set);
SvmModelSet load_svm_set(const std::filesystem::path& path);

}  // namespace bgt

#endif  // BGT_SVM_HPP
