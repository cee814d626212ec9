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

#include "bgt/svm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "model_json.hpp"

namespace bgt {

namespace {

constexpr double kStepEpsilon = 1e-12;
constexpr double kBoundSnap = 1e-8;  // relative to c
constexpr long kMaxSmoSteps = 1000000;

// Batch SMO state over a precomputed kernel matrix.
struct SmoProblem {
  const std::vector<std::vector<double>>& x;
  const std::vector<int>& y;
  double c;
  double tol;
  int n;
  std::vector<double> kernel;  // n x n
  std::vector<double> alpha;
  std::vector<double> error;  // E_i = f(x_i) - y_i
  double bias = 0.0;

  double k(int i, int j) const {
    return kernel[static_cast<std::size_t>(i) * n + j];
  }

  // KKT violation of point i under the current solution.
  double violation(int i) const {
    const double margin = y[i] * error[i];  // y_i f(x_i) - 1
    if (alpha[i] <= 0.0) return std::max(0.0, -margin);
    if (alpha[i] >= c) return std::max(0.0, margin);
    return std::abs(margin);
  }

  // Joint optimization of the pair (i1, i2); returns false when the pair
  // cannot make progress.
  bool take_step(int i1, int i2) {
    if (i1 == i2) return false;
    const double alph1 = alpha[i1];
    const double alph2 = alpha[i2];
    const int y1 = y[i1];
    const int y2 = y[i2];
    const double e1 = error[i1];
    const double e2 = error[i2];
    const double s = y1 * y2;

    double low, high;
    if (y1 != y2) {
      low = std::max(0.0, alph2 - alph1);
      high = std::min(c, c + alph2 - alph1);
    } else {
      low = std::max(0.0, alph2 + alph1 - c);
      high = std::min(c, alph2 + alph1);
    }
    if (low >= high) return false;

    const double k11 = k(i1, i1);
    const double k12 = k(i1, i2);
    const double k22 = k(i2, i2);
    const double eta = k11 + k22 - 2.0 * k12;

    double a2;
    if (eta > 0.0) {
      a2 = std::clamp(alph2 + y2 * (e1 - e2) / eta, low, high);
    } else {
      // Flat direction (duplicate points): evaluate the dual objective
      // (minimization form) at both clip bounds and move to the better one.
      const double f1 = y1 * (e1 - bias) - alph1 * k11 - s * alph2 * k12;
      const double f2 = y2 * (e2 - bias) - s * alph1 * k12 - alph2 * k22;
      const double l1 = alph1 + s * (alph2 - low);
      const double h1 = alph1 + s * (alph2 - high);
      const double low_obj = l1 * f1 + low * f2 + 0.5 * l1 * l1 * k11 +
                             0.5 * low * low * k22 + s * low * l1 * k12;
      const double high_obj = h1 * f1 + high * f2 + 0.5 * h1 * h1 * k11 +
                              0.5 * high * high * k22 + s * high * h1 * k12;
      if (low_obj < high_obj - kStepEpsilon)
        a2 = low;
      else if (low_obj > high_obj + kStepEpsilon)
        a2 = high;
      else
        a2 = alph2;
    }
    if (std::abs(a2 - alph2) < kStepEpsilon * (a2 + alph2 + kStepEpsilon))
      return false;
    double a1 = alph1 + s * (alph2 - a2);

    // Snap rounding crumbs onto the bounds. Without this an alpha of a few
    // ulps reads as an interior point whose margin must equal 1, and the
    // solver can wedge against the box trying to satisfy that.
    const double snap = kBoundSnap * c;
    if (a1 < snap)
      a1 = 0.0;
    else if (a1 > c - snap)
      a1 = c;
    if (a2 < snap)
      a2 = 0.0;
    else if (a2 > c - snap)
      a2 = c;

    const double d1 = a1 - alph1;
    const double d2 = a2 - alph2;
    const double b1 = bias - e1 - y1 * d1 * k11 - y2 * d2 * k12;
    const double b2 = bias - e2 - y1 * d1 * k12 - y2 * d2 * k22;
    double new_bias;
    if (a1 > 0.0 && a1 < c)
      new_bias = b1;
    else if (a2 > 0.0 && a2 < c)
      new_bias = b2;
    else
      new_bias = 0.5 * (b1 + b2);

    for (int j = 0; j < n; ++j)
      error[j] +=
          y1 * d1 * k(i1, j) + y2 * d2 * k(i2, j) + (new_bias - bias);
    alpha[i1] = a1;
    alpha[i2] = a2;
    bias = new_bias;
    return true;
  }
};

}  // namespace

Supervector build_supervector(const DiagonalGmm& ubm, const FrameMatrix& frames,
                              double tau, std::string source_show) {
  if (frames.num_frames() == 0)
    throw ValidationError("build_supervector: empty input");
  const DiagonalGmm adapted = map_adapt_means(ubm, frames, tau);
  Supervector sv;
  sv.source_show = std::move(source_show);
  sv.values = adapted.means();
  return sv;
}

double gaussian_kernel(std::span<const double> x, std::span<const double> y,
                       double gamma) {
  if (x.size() != y.size())
    throw ValidationError("gaussian_kernel: length mismatch");
  if (!(gamma > 0.0))
    throw ValidationError("gaussian_kernel: gamma must be positive");
  double sq = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double diff = x[i] - y[i];
    sq += diff * diff;
  }
  return std::exp(-gamma * sq);
}

SvmModel train_svm_smo(const std::vector<std::vector<double>>& x,
                       const std::vector<int>& y, double c, double gamma,
                       double tol) {
  const int n = static_cast<int>(x.size());
  if (n < 2 || y.size() != x.size())
    throw ValidationError("train_svm_smo: need matching examples and labels");
  if (!(c > 0.0)) throw ValidationError("train_svm_smo: c must be positive");
  if (!(gamma > 0.0))
    throw ValidationError("train_svm_smo: gamma must be positive");
  if (!(tol > 0.0))
    throw ValidationError("train_svm_smo: tol must be positive");
  bool has_pos = false, has_neg = false;
  for (int label : y) {
    if (label == 1)
      has_pos = true;
    else if (label == -1)
      has_neg = true;
    else
      throw ValidationError("train_svm_smo: labels must be +1 or -1");
  }
  if (!has_pos || !has_neg)
    throw ValidationError("train_svm_smo: single-class input");
  const std::size_t dims = x[0].size();
  for (const auto& row : x)
    if (row.size() != dims)
      throw ValidationError("train_svm_smo: inconsistent dimensions");

  SmoProblem p{x, y, c, tol, n, {}, {}, {}};
  p.kernel.resize(static_cast<std::size_t>(n) * n);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      p.kernel[static_cast<std::size_t>(i) * n + j] =
          gaussian_kernel(x[i], x[j], gamma);
  p.alpha.assign(n, 0.0);
  p.error.resize(n);
  for (int i = 0; i < n; ++i) p.error[i] = -y[i];  // f = 0 at the start

  std::vector<int> violators;
  for (long step = 0; step < kMaxSmoSteps; ++step) {
    violators.clear();
    for (int i = 0; i < n; ++i)
      if (p.violation(i) > tol) violators.push_back(i);
    if (violators.empty()) break;  // KKT satisfied everywhere within tol
    std::stable_sort(violators.begin(), violators.end(), [&](int a, int b) {
      return p.violation(a) > p.violation(b);
    });

    // A violator can be pinned against the box with every partner, so walk
    // the violators from the worst down until one pair moves.
    bool moved = false;
    for (int i : violators) {
      int partner = -1;
      double best_gap = -1.0;
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        const double gap = std::abs(p.error[i] - p.error[j]);
        if (gap > best_gap) {
          best_gap = gap;
          partner = j;
        }
      }
      moved = partner >= 0 && p.take_step(i, partner);
      for (int j = 0; !moved && j < n; ++j) moved = p.take_step(i, j);
      if (moved) break;
    }
    if (!moved)
      throw NumericError(
          "train_svm_smo: no working pair can reduce the remaining KKT "
          "violation");
  }

  double residual = 0.0;
  for (int i = 0; i < n; ++i) residual = std::max(residual, p.violation(i));
  if (residual >= tol)
    throw NumericError("train_svm_smo: did not converge (violation " +
                       std::to_string(residual) + ")");

  SvmModel model;
  model.gamma = gamma;
  model.c = c;
  model.bias = p.bias;
  for (int i = 0; i < n; ++i) {
    if (p.alpha[i] > 0.0) {
      model.support_vectors.push_back(x[i]);
      model.alphas_signed.push_back(p.alpha[i] * y[i]);
    }
  }
  return model;
}

double svm_decision(const SvmModel& m, std::span<const double> x) {
  double score = m.bias;
  for (std::size_t i = 0; i < m.support_vectors.size(); ++i)
    score +=
        m.alphas_signed[i] * gaussian_kernel(m.support_vectors[i], x, m.gamma);
  return score;
}

std::pair<std::string, double> classify_one_vs_rest(
    const std::vector<std::pair<std::string, SvmModel>>& models,
    std::span<const double> x) {
  if (models.empty())
    throw ValidationError("classify_one_vs_rest: no models");
  const std::string* best_name = nullptr;
  double best_score = 0.0;
  for (const auto& [name, model] : models) {
    const double score = svm_decision(model, x);
    if (best_name == nullptr || score > best_score ||
        (score == best_score && name < *best_name)) {
      best_name = &name;
      best_score = score;
    }
  }
  return {*best_name, best_score};
}

SvmModelSet train_svm_genre_set(const std::vector<std::string>& genre_names,
                                const std::vector<Supervector>& supervectors,
                                const std::vector<std::string>& labels,
                                double c, double gamma, double tau,
                                std::string ubm_ref) {
  if (supervectors.empty())
    throw ValidationError("train_svm_genre_set: no training supervectors");
  if (labels.size() != supervectors.size())
    throw ValidationError("train_svm_genre_set: label count mismatch");
  if (genre_names.empty())
    throw ValidationError("train_svm_genre_set: no genres");
  const std::size_t dims = supervectors[0].values.size();
  for (const auto& sv : supervectors)
    if (sv.values.size() != dims)
      throw ValidationError("train_svm_genre_set: mixed supervector lengths");
  if (gamma <= 0.0) gamma = 1.0 / static_cast<double>(dims);

  // Shared per-dimension z-normalization from the training set.
  const int n = static_cast<int>(supervectors.size());
  std::vector<double> mean(dims, 0.0), std_dev(dims, 0.0);
  for (const auto& sv : supervectors)
    for (std::size_t d = 0; d < dims; ++d) mean[d] += sv.values[d];
  for (std::size_t d = 0; d < dims; ++d) mean[d] /= n;
  for (const auto& sv : supervectors)
    for (std::size_t d = 0; d < dims; ++d) {
      const double diff = sv.values[d] - mean[d];
      std_dev[d] += diff * diff;
    }
  for (std::size_t d = 0; d < dims; ++d) {
    std_dev[d] = std::sqrt(std_dev[d] / n);
    if (std_dev[d] == 0.0) std_dev[d] = 1.0;
  }

  std::vector<std::vector<double>> normalized(n);
  for (int i = 0; i < n; ++i) {
    normalized[i].resize(dims);
    for (std::size_t d = 0; d < dims; ++d)
      normalized[i][d] = (supervectors[i].values[d] - mean[d]) / std_dev[d];
  }

  SvmModelSet set;
  set.ubm_ref = std::move(ubm_ref);
  set.tau = tau;
  set.gamma = gamma;
  set.c = c;
  set.genres.resize(genre_names.size());

  std::vector<std::string> failures(genre_names.size());
#pragma omp parallel for schedule(dynamic)
  for (int g = 0; g < static_cast<int>(genre_names.size()); ++g) {
    std::vector<int> y(n);
    for (int i = 0; i < n; ++i) y[i] = labels[i] == genre_names[g] ? 1 : -1;
    try {
      SvmGenreModel entry;
      entry.name = genre_names[g];
      entry.model = train_svm_smo(normalized, y, c, gamma);
      entry.norm_mean = mean;
      entry.norm_std = std_dev;
      set.genres[g] = std::move(entry);
    } catch (const Error& err) {
      failures[g] = err.what();
    }
  }
  for (std::size_t g = 0; g < failures.size(); ++g)
    if (!failures[g].empty())
      throw ValidationError("train_svm_genre_set: genre '" + genre_names[g] +
                            "': " + failures[g]);
  return set;
}

double genre_decision(const SvmGenreModel& genre, std::span<const double> raw) {
  if (raw.size() != genre.norm_mean.size())
    throw ValidationError("genre_decision: supervector length mismatch");
  std::vector<double> normalized(raw.size());
  for (std::size_t d = 0; d < raw.size(); ++d)
    normalized[d] = (raw[d] - genre.norm_mean[d]) / genre.norm_std[d];
  return svm_decision(genre.model, normalized);
}

namespace {

nlohmann::json svm_model_to_json(const SvmModel& m) {
  nlohmann::json doc;
  doc["support_vectors"] = m.support_vectors;
  doc["alphas_signed"] = m.alphas_signed;
  doc["bias"] = m.bias;
  doc["gamma"] = m.gamma;
  doc["c"] = m.c;
  return doc;
}

SvmModel svm_model_from_json(const nlohmann::json& doc) {
  SvmModel m;
  m.support_vectors =
      doc.at("support_vectors").get<std::vector<std::vector<double>>>();
  m.alphas_signed = doc.at("alphas_signed").get<std::vector<double>>();
  m.bias = doc.at("bias").get<double>();
  m.gamma = doc.at("gamma").get<double>();
  m.c = doc.at("c").get<double>();
  return m;
}

}  // namespace

void save_svm_set(const std::filesystem::path& path, const SvmModelSet& set) {
  nlohmann::json doc;
  nlohmann::json genres = nlohmann::json::array();
  for (const auto& genre : set.genres) {
    nlohmann::json entry;
    entry["name"] = genre.name;
    entry["model"] = svm_model_to_json(genre.model);
    entry["norm_mean"] = genre.norm_mean;
    entry["norm_std"] = genre.norm_std;
    genres.push_back(std::move(entry));
  }
  doc["genres"] = std::move(genres);
  doc["ubm_ref"] = set.ubm_ref;
  doc["tau"] = set.tau;
  doc["gamma"] = set.gamma;
  doc["c"] = set.c;
  internal::save_json_file(path, doc);
}

SvmModelSet load_svm_set(const std::filesystem::path& path) {
  const nlohmann::json doc = internal::load_json_file(path);
  SvmModelSet set;
  try {
    for (const auto& entry : doc.at("genres")) {
      SvmGenreModel genre;
      genre.name = entry.at("name").get<std::string>();
      genre.model = svm_model_from_json(entry.at("model"));
      genre.norm_mean = entry.at("norm_mean").get<std::vector<double>>();
      genre.norm_std = entry.at("norm_std").get<std::vector<double>>();
      set.genres.push_back(std::move(genre));
    }
    set.ubm_ref = doc.at("ubm_ref").get<std::string>();
    set.tau = doc.at("tau").get<double>();
    set.gamma = doc.at("gamma").get<double>();
    set.c = doc.at("c").get<double>();
  } catch (const nlohmann::json::exception& err) {
    throw FormatError(path.string() + ": " + err.what());
  }
  return set;
}

}  // namespace bgt
