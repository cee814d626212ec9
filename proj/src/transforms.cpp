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

#include "bgt/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include <Eigen/Dense>

#include "internal_util.hpp"
#include "model_json.hpp"

namespace bgt {

namespace {

constexpr double kDetEpsilon = 1e-12;

Eigen::MatrixXd to_eigen(const std::vector<double>& a, int rows, int cols) {
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      m(i, j) = a[static_cast<std::size_t>(i) * cols + j];
  return m;
}

double log_abs_det_or_throw(const std::vector<double>& a, int dims,
                            const char* who) {
  const Eigen::MatrixXd m = to_eigen(a, dims, dims);
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(m);
  const double det = lu.determinant();
  if (!std::isfinite(det) || std::abs(det) <= kDetEpsilon)
    throw NumericError(std::string(who) + ": matrix is singular (|det| = " +
                       std::to_string(std::abs(det)) + ")");
  return std::log(std::abs(det));
}

}  // namespace

CmllrTransform::CmllrTransform(std::vector<double> a, std::vector<double> b)
    : a_(std::move(a)), b_(std::move(b)) {
  const int d = static_cast<int>(b_.size());
  if (d == 0) throw ValidationError("CmllrTransform: empty bias");
  if (a_.size() != static_cast<std::size_t>(d) * d)
    throw ValidationError("CmllrTransform: A is not D x D for the bias size");
  for (double v : a_)
    if (!std::isfinite(v))
      throw ValidationError("CmllrTransform: non-finite matrix entry");
  for (double v : b_)
    if (!std::isfinite(v))
      throw ValidationError("CmllrTransform: non-finite bias entry");
  log_abs_det_ = log_abs_det_or_throw(a_, d, "CmllrTransform");
}

CmllrTransform CmllrTransform::identity(int dims) {
  if (dims <= 0)
    throw ValidationError("CmllrTransform: dims must be positive");
  std::vector<double> a(static_cast<std::size_t>(dims) * dims, 0.0);
  for (int i = 0; i < dims; ++i) a[static_cast<std::size_t>(i) * dims + i] = 1.0;
  return CmllrTransform(std::move(a), std::vector<double>(dims, 0.0));
}

void CmllrTransform::apply(std::span<const double> y,
                           std::span<double> out) const {
  const int d = dims();
  if (static_cast<int>(y.size()) != d || static_cast<int>(out.size()) != d)
    throw ValidationError("CmllrTransform: dimension mismatch");
  for (int i = 0; i < d; ++i) {
    const double* row = a_.data() + static_cast<std::size_t>(i) * d;
    double acc = b_[i];
    for (int j = 0; j < d; ++j) acc += row[j] * y[j];
    out[i] = acc;
  }
}

std::vector<double> apply_transform(const CmllrTransform& t,
                                    std::span<const double> y) {
  std::vector<double> out(t.dims());
  t.apply(y, out);
  return out;
}

double transformed_log_likelihood(const CmllrTransform& t,
                                  const DiagonalGmm& gmm,
                                  std::span<const double> y) {
  if (t.dims() != gmm.dims())
    throw ValidationError(
        "transformed_log_likelihood: transform and model dims disagree");
  std::vector<double> transformed(t.dims());
  t.apply(y, transformed);
  return gmm.log_likelihood(transformed) + t.log_abs_det();
}

void BackgroundBank::validate() const {
  if (transforms.empty())
    throw ValidationError("BackgroundBank: need at least one background");
  for (const auto& t : transforms)
    if (t.dims() != canonical_gmm.dims())
      throw ValidationError(
          "BackgroundBank: transform dims do not match the canonical model");
  if (!std::isfinite(stay_log_prob) || stay_log_prob > 0.0)
    throw ValidationError("BackgroundBank: stay_log_prob must be finite, <= 0");
  if (!std::isfinite(switch_log_prob) || switch_log_prob > 0.0)
    throw ValidationError(
        "BackgroundBank: switch_log_prob must be finite, <= 0");
  const double total = std::exp(stay_log_prob) +
                       (num_backgrounds() - 1) * std::exp(switch_log_prob);
  if (std::abs(total - 1.0) > 1e-9)
    throw ValidationError(
        "BackgroundBank: stay/switch probabilities sum to " +
        std::to_string(total) + ", expected 1");
}

std::pair<double, double> bank_transition_log_probs(int num_backgrounds,
                                                    double stay_prob) {
  if (num_backgrounds < 1)
    throw ValidationError("bank_transition_log_probs: need T >= 1");
  if (num_backgrounds == 1) {
    if (stay_prob != 1.0)
      throw ValidationError(
          "bank_transition_log_probs: single background requires stay "
          "probability 1");
    // Switching is impossible; use a log-probability that underflows to 0.
    return {0.0, -1e9};
  }
  if (!(stay_prob > 0.0 && stay_prob < 1.0))
    throw ValidationError(
        "bank_transition_log_probs: stay probability must be in (0, 1)");
  return {std::log(stay_prob),
          std::log((1.0 - stay_prob) / (num_backgrounds - 1))};
}

namespace {

// Sufficient statistics for one transform estimation pass. zeta = [y; 1].
struct CmllrStats {
  double beta = 0.0;
  std::vector<double> first;   // K x (D+1): sum_n gamma_k(n) zeta_n
  std::vector<double> second;  // K x (D+1)^2: sum_n gamma_k(n) zeta zeta^T

  CmllrStats(int components, int ext) {
    first.assign(static_cast<std::size_t>(components) * ext, 0.0);
    second.assign(static_cast<std::size_t>(components) * ext * ext, 0.0);
  }
  void merge(const CmllrStats& other) {
    beta += other.beta;
    for (std::size_t i = 0; i < first.size(); ++i) first[i] += other.first[i];
    for (std::size_t i = 0; i < second.size(); ++i)
      second[i] += other.second[i];
  }
};

CmllrStats accumulate_cmllr_stats(const DiagonalGmm& gmm,
                                  const FrameMatrix& frames,
                                  const CmllrTransform& current) {
  const int d = gmm.dims();
  const int ext = d + 1;
  const int k = gmm.num_components();
  const auto chunks = internal::reduction_chunks(frames.num_frames());
  std::vector<CmllrStats> partial(chunks.size(), CmllrStats(k, ext));
#pragma omp parallel
  {
    std::vector<double> gamma(k), transformed(d), zeta(ext);
    zeta[d] = 1.0;
#pragma omp for schedule(dynamic)
    for (int c = 0; c < static_cast<int>(chunks.size()); ++c) {
      CmllrStats& local = partial[c];
      for (int n = chunks[c].begin; n < chunks[c].end; ++n) {
        const auto y = frames.frame(n);
        current.apply(y, transformed);
        gmm.posteriors(transformed, gamma);
        std::copy(y.begin(), y.end(), zeta.begin());
        for (int comp = 0; comp < k; ++comp) {
          const double g = gamma[comp];
          if (g == 0.0) continue;
          local.beta += g;
          double* fst = local.first.data() +
                        static_cast<std::size_t>(comp) * ext;
          double* snd = local.second.data() +
                        static_cast<std::size_t>(comp) * ext * ext;
          for (int i = 0; i < ext; ++i) {
            const double gz = g * zeta[i];
            fst[i] += gz;
            double* row = snd + static_cast<std::size_t>(i) * ext;
            for (int j = 0; j < ext; ++j) row[j] += gz * zeta[j];
          }
        }
      }
    }
  }
  CmllrStats total(k, ext);
  for (const auto& p : partial) total.merge(p);
  return total;
}

double total_transformed_ll(const CmllrTransform& t, const DiagonalGmm& gmm,
                            const FrameMatrix& frames) {
  const auto chunks = internal::reduction_chunks(frames.num_frames());
  std::vector<double> partial(chunks.size(), 0.0);
#pragma omp parallel
  {
    std::vector<double> transformed(t.dims());
#pragma omp for schedule(dynamic)
    for (int c = 0; c < static_cast<int>(chunks.size()); ++c) {
      double acc = 0.0;
      for (int n = chunks[c].begin; n < chunks[c].end; ++n) {
        t.apply(frames.frame(n), transformed);
        acc += gmm.log_likelihood(transformed);
      }
      partial[c] = acc;
    }
  }
  double total = 0.0;
  for (double p : partial) total += p;
  return total + frames.num_frames() * t.log_abs_det();
}

CmllrTransform transform_from_w(const Eigen::MatrixXd& w) {
  const int d = static_cast<int>(w.rows());
  std::vector<double> a(static_cast<std::size_t>(d) * d), b(d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) a[static_cast<std::size_t>(i) * d + j] = w(i, j);
    b[i] = w(i, d);
  }
  return CmllrTransform(std::move(a), std::move(b));
}

}  // namespace

CmllrEstimate estimate_cmllr(const DiagonalGmm& gmm, const FrameMatrix& frames,
                             int iters) {
  const int d = gmm.dims();
  const int ext = d + 1;
  const int k = gmm.num_components();
  if (frames.num_frames() == 0)
    throw ValidationError("estimate_cmllr: empty input");
  if (frames.dims() != d)
    throw ValidationError("estimate_cmllr: frame dims do not match the model");
  if (iters < 1) throw ValidationError("estimate_cmllr: iters must be >= 1");

  // W = [A b], started at the identity transform.
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(d, ext);
  for (int i = 0; i < d; ++i) w(i, i) = 1.0;

  CmllrEstimate result;
  result.transform = CmllrTransform::identity(d);
  result.log_likelihood_trace.push_back(
      total_transformed_ll(result.transform, gmm, frames));

  for (int iter = 0; iter < iters; ++iter) {
    const CmllrStats stats =
        accumulate_cmllr_stats(gmm, frames, result.transform);
    const double beta = stats.beta;

    // Row-statistics templates: G_i = sum_k second_k / var_ki,
    // k_i = sum_k (mean_ki / var_ki) first_k.
    for (int row = 0; row < d; ++row) {
      Eigen::MatrixXd g = Eigen::MatrixXd::Zero(ext, ext);
      Eigen::VectorXd kvec = Eigen::VectorXd::Zero(ext);
      for (int comp = 0; comp < k; ++comp) {
        const double inv_var = 1.0 / gmm.var(comp)[row];
        const double mean_scale = gmm.mean(comp)[row] * inv_var;
        const double* snd = stats.second.data() +
                            static_cast<std::size_t>(comp) * ext * ext;
        const double* fst =
            stats.first.data() + static_cast<std::size_t>(comp) * ext;
        for (int i = 0; i < ext; ++i) {
          kvec(i) += mean_scale * fst[i];
          for (int j = 0; j < ext; ++j)
            g(i, j) += inv_var * snd[static_cast<std::size_t>(i) * ext + j];
        }
      }

      Eigen::FullPivLU<Eigen::MatrixXd> glu(g);
      if (!glu.isInvertible())
        throw NumericError("estimate_cmllr: singular statistics for row " +
                           std::to_string(row));
      const Eigen::MatrixXd ginv = glu.inverse();

      // Extended cofactor vector of the current A for this row.
      const Eigen::MatrixXd a = w.leftCols(d);
      const Eigen::PartialPivLU<Eigen::MatrixXd> alu(a);
      const double det = alu.determinant();
      if (!std::isfinite(det) || std::abs(det) <= kDetEpsilon)
        throw NumericError(
            "estimate_cmllr: transform became singular at row " +
            std::to_string(row));
      const Eigen::MatrixXd ainv = alu.inverse();
      Eigen::VectorXd p = Eigen::VectorXd::Zero(ext);
      for (int j = 0; j < d; ++j) p(j) = det * ainv(j, row);

      const double d1 = p.dot(ginv * p);
      const double d2 = kvec.dot(ginv * p);
      const double disc = d2 * d2 + 4.0 * d1 * beta;
      if (!(d1 > 0.0) || disc < 0.0)
        throw NumericError("estimate_cmllr: degenerate quadratic for row " +
                           std::to_string(row));
      const double root = std::sqrt(disc);
      const double eps_pos = (-d2 + root) / (2.0 * d1);
      const double eps_neg = (-d2 - root) / (2.0 * d1);

      const auto candidate = [&](double eps) {
        Eigen::VectorXd wr = ginv * (eps * p + kvec);
        const double wp = wr.dot(p);
        const double aux = beta * std::log(std::abs(wp)) -
                           0.5 * wr.dot(g * wr) + wr.dot(kvec);
        return std::make_pair(wr, aux);
      };
      const auto [w_pos, q_pos] = candidate(eps_pos);
      const auto [w_neg, q_neg] = candidate(eps_neg);
      w.row(row) = (q_pos >= q_neg ? w_pos : w_neg).transpose();
    }

    result.transform = transform_from_w(w);
    result.log_likelihood_trace.push_back(
        total_transformed_ll(result.transform, gmm, frames));
  }
  return result;
}

std::vector<double> bank_emission_matrix(const BackgroundBank& bank,
                                         const FrameMatrix& frames) {
  const int n = frames.num_frames();
  const int t = bank.num_backgrounds();
  std::vector<double> emissions(static_cast<std::size_t>(n) * t);
#pragma omp parallel
  {
    std::vector<double> transformed(bank.canonical_gmm.dims());
#pragma omp for schedule(static)
    for (int i = 0; i < n; ++i) {
      const auto y = frames.frame(i);
      for (int bg = 0; bg < t; ++bg) {
        bank.transforms[bg].apply(y, transformed);
        emissions[static_cast<std::size_t>(i) * t + bg] =
            bank.canonical_gmm.log_likelihood(transformed) +
            bank.transforms[bg].log_abs_det();
      }
    }
  }
  return emissions;
}

LabelSequence viterbi_backgrounds(std::span<const double> emissions,
                                  int num_frames, int num_backgrounds,
                                  double stay_log_prob,
                                  double switch_log_prob) {
  const int n = num_frames;
  const int t = num_backgrounds;
  if (n < 1) throw ValidationError("viterbi_backgrounds: empty input");
  if (t < 1)
    throw ValidationError("viterbi_backgrounds: need at least one background");
  if (emissions.size() != static_cast<std::size_t>(n) * t)
    throw ValidationError("viterbi_backgrounds: emission matrix size");

  std::vector<double> delta(t), next(t);
  std::vector<int> psi(static_cast<std::size_t>(n) * t, 0);
  const double init = -std::log(static_cast<double>(t));
  for (int s = 0; s < t; ++s) delta[s] = init + emissions[s];

  for (int frame = 1; frame < n; ++frame) {
    const double* em = emissions.data() + static_cast<std::size_t>(frame) * t;
    int* back = psi.data() + static_cast<std::size_t>(frame) * t;
    for (int cur = 0; cur < t; ++cur) {
      double best = -std::numeric_limits<double>::infinity();
      int arg = 0;
      for (int prev = 0; prev < t; ++prev) {
        const double cand =
            delta[prev] + (prev == cur ? stay_log_prob : switch_log_prob);
        if (cand > best) {
          best = cand;
          arg = prev;
        }
      }
      next[cur] = best + em[cur];
      back[cur] = arg;
    }
    std::swap(delta, next);
  }

  int state = 0;
  for (int s = 1; s < t; ++s)
    if (delta[s] > delta[state]) state = s;

  LabelSequence out;
  out.num_backgrounds = t;
  out.labels.assign(n, 0);
  for (int frame = n - 1; frame >= 0; --frame) {
    out.labels[frame] = state;
    if (frame > 0) state = psi[static_cast<std::size_t>(frame) * t + state];
  }
  return out;
}

LabelSequence decode_backgrounds(const BackgroundBank& bank,
                                 const FrameMatrix& frames) {
  bank.validate();
  if (frames.num_frames() == 0)
    throw ValidationError("decode_backgrounds: empty input");
  if (frames.dims() != bank.canonical_gmm.dims())
    throw ValidationError("decode_backgrounds: frame dims do not match bank");
  const auto emissions = bank_emission_matrix(bank, frames);
  return viterbi_backgrounds(emissions, frames.num_frames(),
                             bank.num_backgrounds(), bank.stay_log_prob,
                             bank.switch_log_prob);
}

void save_bank(const std::filesystem::path& path, const BackgroundBank& bank) {
  bank.validate();
  nlohmann::json doc;
  doc["canonical_gmm"] = internal::gmm_to_json(bank.canonical_gmm);
  nlohmann::json transforms = nlohmann::json::array();
  for (const auto& t : bank.transforms) {
    nlohmann::json entry;
    nlohmann::json a = nlohmann::json::array();
    const int d = t.dims();
    for (int i = 0; i < d; ++i) {
      const double* row = t.a_matrix().data() + static_cast<std::size_t>(i) * d;
      a.push_back(std::vector<double>(row, row + d));
    }
    entry["a"] = std::move(a);
    entry["b"] = t.bias();
    transforms.push_back(std::move(entry));
  }
  doc["transforms"] = std::move(transforms);
  doc["stay_log_prob"] = bank.stay_log_prob;
  doc["switch_log_prob"] = bank.switch_log_prob;
  internal::save_json_file(path, doc);
}

BackgroundBank load_bank(const std::filesystem::path& path) {
  const nlohmann::json doc = internal::load_json_file(path);
  BackgroundBank bank;
  try {
    bank.canonical_gmm = internal::gmm_from_json(doc.at("canonical_gmm"));
    for (const auto& entry : doc.at("transforms")) {
      const auto rows = entry.at("a").get<std::vector<std::vector<double>>>();
      std::vector<double> a;
      for (const auto& row : rows) a.insert(a.end(), row.begin(), row.end());
      bank.transforms.emplace_back(std::move(a),
                                   entry.at("b").get<std::vector<double>>());
    }
    bank.stay_log_prob = doc.at("stay_log_prob").get<double>();
    bank.switch_log_prob = doc.at("switch_log_prob").get<double>();
  } catch (const nlohmann::json::exception& err) {
    throw FormatError(path.string() + ": " + err.what());
  }
  bank.validate();
  return bank;
}

}  // namespace bgt
