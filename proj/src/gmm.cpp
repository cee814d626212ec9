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

#include "bgt/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

#include "internal_util.hpp"
#include "model_json.hpp"

namespace bgt {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2 pi)
constexpr double kMinOccupancy = 1e-10;
constexpr double kEarlyStopRelative = 1e-6;

void check_dims(const DiagonalGmm& gmm, std::size_t got, const char* who) {
  if (static_cast<std::size_t>(gmm.dims()) != got)
    throw ValidationError(std::string(who) + ": vector has " +
                          std::to_string(got) + " dims, model has " +
                          std::to_string(gmm.dims()));
}

}  // namespace

DiagonalGmm::DiagonalGmm(std::vector<double> weights,
                         std::vector<double> means, std::vector<double> vars,
                         int dims)
    : dims_(dims),
      weights_(std::move(weights)),
      means_(std::move(means)),
      vars_(std::move(vars)) {
  if (dims_ <= 0) throw ValidationError("DiagonalGmm: dims must be positive");
  const std::size_t k = weights_.size();
  if (k == 0) throw ValidationError("DiagonalGmm: no components");
  if (means_.size() != k * dims_ || vars_.size() != k * dims_)
    throw ValidationError("DiagonalGmm: parameter sizes disagree");

  double weight_sum = 0.0;
  for (double w : weights_) {
    if (!(w >= 0.0) || !std::isfinite(w))
      throw ValidationError("DiagonalGmm: weights must be non-negative");
    weight_sum += w;
  }
  if (std::abs(weight_sum - 1.0) > 1e-9)
    throw ValidationError("DiagonalGmm: weights sum to " +
                          std::to_string(weight_sum) + ", expected 1");
  for (double v : vars_)
    if (!(v > 0.0) || !std::isfinite(v))
      throw ValidationError("DiagonalGmm: variances must be positive");
  for (double m : means_)
    if (!std::isfinite(m))
      throw ValidationError("DiagonalGmm: non-finite mean");

  log_gconst_.resize(k);
  neg_half_inv_var_.resize(k * dims_);
  for (std::size_t comp = 0; comp < k; ++comp) {
    double log_det = 0.0;
    for (int d = 0; d < dims_; ++d) {
      const double v = vars_[comp * dims_ + d];
      log_det += std::log(v);
      neg_half_inv_var_[comp * dims_ + d] = -0.5 / v;
    }
    log_gconst_[comp] =
        std::log(weights_[comp]) - 0.5 * (dims_ * kLog2Pi + log_det);
  }
}

double DiagonalGmm::log_likelihood(std::span<const double> y) const {
  check_dims(*this, y.size(), "log_likelihood");
  // Online log-sum-exp over the per-component terms.
  double max_term = -std::numeric_limits<double>::infinity();
  double sum = 0.0;
  const int k = num_components();
  for (int comp = 0; comp < k; ++comp) {
    const double* mu = means_.data() + static_cast<std::size_t>(comp) * dims_;
    const double* nhv =
        neg_half_inv_var_.data() + static_cast<std::size_t>(comp) * dims_;
    double term = log_gconst_[comp];
    for (int d = 0; d < dims_; ++d) {
      const double diff = y[d] - mu[d];
      term += nhv[d] * diff * diff;
    }
    if (term > max_term) {
      sum = sum * std::exp(max_term - term) + 1.0;
      max_term = term;
    } else {
      sum += std::exp(term - max_term);
    }
  }
  return max_term + std::log(sum);
}

void DiagonalGmm::component_log_terms(std::span<const double> y,
                                      std::span<double> out) const {
  check_dims(*this, y.size(), "component_log_terms");
  const int k = num_components();
  if (static_cast<int>(out.size()) != k)
    throw ValidationError("component_log_terms: bad output size");
  for (int comp = 0; comp < k; ++comp) {
    const double* mu = means_.data() + static_cast<std::size_t>(comp) * dims_;
    const double* nhv =
        neg_half_inv_var_.data() + static_cast<std::size_t>(comp) * dims_;
    double term = log_gconst_[comp];
    for (int d = 0; d < dims_; ++d) {
      const double diff = y[d] - mu[d];
      term += nhv[d] * diff * diff;
    }
    out[comp] = term;
  }
}

double DiagonalGmm::posteriors(std::span<const double> y,
                               std::span<double> gamma) const {
  component_log_terms(y, gamma);
  const int k = num_components();
  double max_term = -std::numeric_limits<double>::infinity();
  for (int comp = 0; comp < k; ++comp) max_term = std::max(max_term, gamma[comp]);
  double sum = 0.0;
  for (int comp = 0; comp < k; ++comp) {
    gamma[comp] = std::exp(gamma[comp] - max_term);
    sum += gamma[comp];
  }
  for (int comp = 0; comp < k; ++comp) gamma[comp] /= sum;
  return max_term + std::log(sum);
}

std::vector<double> frame_log_likelihoods(const DiagonalGmm& gmm,
                                          const FrameMatrix& frames) {
  check_dims(gmm, frames.dims(), "frame_log_likelihoods");
  const int n = frames.num_frames();
  std::vector<double> out(n);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) out[i] = gmm.log_likelihood(frames.frame(i));
  return out;
}

double score_show(const DiagonalGmm& gmm, const FrameMatrix& frames) {
  check_dims(gmm, frames.dims(), "score_show");
  if (frames.num_frames() == 0)
    throw ValidationError("score_show: empty input");

  const auto chunks = internal::reduction_chunks(frames.num_frames());
  std::vector<double> partial(chunks.size(), 0.0);
#pragma omp parallel for schedule(dynamic)
  for (int c = 0; c < static_cast<int>(chunks.size()); ++c) {
    double acc = 0.0;
    for (int i = chunks[c].begin; i < chunks[c].end; ++i)
      acc += gmm.log_likelihood(frames.frame(i));
    partial[c] = acc;
  }
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

GmmStats::GmmStats(int components, int dims)
    : occupancy(components, 0.0),
      mean_sum(static_cast<std::size_t>(components) * dims, 0.0),
      sq_sum(static_cast<std::size_t>(components) * dims, 0.0) {}

void GmmStats::merge(const GmmStats& other) {
  for (std::size_t i = 0; i < occupancy.size(); ++i)
    occupancy[i] += other.occupancy[i];
  for (std::size_t i = 0; i < mean_sum.size(); ++i) {
    mean_sum[i] += other.mean_sum[i];
    sq_sum[i] += other.sq_sum[i];
  }
  log_likelihood += other.log_likelihood;
}

namespace {

void accumulate_range(const DiagonalGmm& gmm, const FrameMatrix& frames,
                      int begin, int end, GmmStats& stats,
                      std::vector<double>& gamma) {
  const int k = gmm.num_components();
  const int d = gmm.dims();
  for (int i = begin; i < end; ++i) {
    const auto y = frames.frame(i);
    stats.log_likelihood += gmm.posteriors(y, gamma);
    for (int comp = 0; comp < k; ++comp) {
      const double g = gamma[comp];
      if (g == 0.0) continue;
      stats.occupancy[comp] += g;
      double* ms = stats.mean_sum.data() + static_cast<std::size_t>(comp) * d;
      double* ss = stats.sq_sum.data() + static_cast<std::size_t>(comp) * d;
      for (int dim = 0; dim < d; ++dim) {
        ms[dim] += g * y[dim];
        ss[dim] += g * y[dim] * y[dim];
      }
    }
  }
}

}  // namespace

GmmStats accumulate_em_stats(const DiagonalGmm& gmm,
                             const FrameMatrix& frames) {
  check_dims(gmm, frames.dims(), "accumulate_em_stats");
  const auto chunks = internal::reduction_chunks(frames.num_frames());
  std::vector<GmmStats> partial(chunks.size());
#pragma omp parallel
  {
    std::vector<double> gamma(gmm.num_components());
#pragma omp for schedule(dynamic)
    for (int c = 0; c < static_cast<int>(chunks.size()); ++c) {
      GmmStats local(gmm.num_components(), gmm.dims());
      accumulate_range(gmm, frames, chunks[c].begin, chunks[c].end, local,
                       gamma);
      partial[c] = std::move(local);
    }
  }
  GmmStats total(gmm.num_components(), gmm.dims());
  for (const auto& p : partial) total.merge(p);
  return total;
}

DiagonalGmm em_update(const GmmStats& stats, const DiagonalGmm& current,
                      std::span<const double> var_floor) {
  const int k = current.num_components();
  const int d = current.dims();
  if (static_cast<int>(var_floor.size()) != d)
    throw ValidationError("em_update: variance floor has wrong dimension");

  double total_occ = 0.0;
  for (double occ : stats.occupancy) total_occ += occ;
  if (!(total_occ > 0.0)) throw ValidationError("em_update: empty statistics");

  std::vector<double> weights(k), means(static_cast<std::size_t>(k) * d),
      vars(static_cast<std::size_t>(k) * d);
  for (int comp = 0; comp < k; ++comp) {
    const double occ = stats.occupancy[comp];
    weights[comp] = occ / total_occ;
    const auto old_mean = current.mean(comp);
    const auto old_var = current.var(comp);
    double* mu = means.data() + static_cast<std::size_t>(comp) * d;
    double* var = vars.data() + static_cast<std::size_t>(comp) * d;
    if (occ < kMinOccupancy) {
      // Starved component: keep its parameters, let the weight decay.
      std::copy(old_mean.begin(), old_mean.end(), mu);
      std::copy(old_var.begin(), old_var.end(), var);
      continue;
    }
    const double* ms =
        stats.mean_sum.data() + static_cast<std::size_t>(comp) * d;
    const double* ss = stats.sq_sum.data() + static_cast<std::size_t>(comp) * d;
    for (int dim = 0; dim < d; ++dim) {
      mu[dim] = ms[dim] / occ;
      var[dim] = std::max(ss[dim] / occ - mu[dim] * mu[dim], var_floor[dim]);
    }
  }
  return DiagonalGmm(std::move(weights), std::move(means), std::move(vars), d);
}

std::vector<double> default_variance_floor(const FrameMatrix& frames) {
  const int n = frames.num_frames();
  const int d = frames.dims();
  if (n == 0) throw ValidationError("default_variance_floor: empty input");
  std::vector<double> mean(d, 0.0), var(d, 0.0);
  for (int i = 0; i < n; ++i) {
    const auto y = frames.frame(i);
    for (int dim = 0; dim < d; ++dim) mean[dim] += y[dim];
  }
  for (int dim = 0; dim < d; ++dim) mean[dim] /= n;
  for (int i = 0; i < n; ++i) {
    const auto y = frames.frame(i);
    for (int dim = 0; dim < d; ++dim) {
      const double diff = y[dim] - mean[dim];
      var[dim] += diff * diff;
    }
  }
  for (int dim = 0; dim < d; ++dim)
    var[dim] = std::max(1e-4 * (var[dim] / n), 1e-12);
  return var;
}

DiagonalGmm run_em_sweeps(DiagonalGmm gmm, const FrameMatrix& frames,
                          int sweeps, std::vector<double>* ll_trace,
                          std::span<const double> var_floor) {
  std::vector<double> floor_storage;
  if (var_floor.empty()) {
    floor_storage = default_variance_floor(frames);
    var_floor = floor_storage;
  }
  double prev_ll = -std::numeric_limits<double>::infinity();
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    const GmmStats stats = accumulate_em_stats(gmm, frames);
    if (ll_trace) ll_trace->push_back(stats.log_likelihood);
    if (sweep > 0 && stats.log_likelihood - prev_ll <
                         kEarlyStopRelative * std::abs(prev_ll)) {
      return gmm;
    }
    prev_ll = stats.log_likelihood;
    gmm = em_update(stats, gmm, var_floor);
  }
  if (ll_trace) ll_trace->push_back(score_show(gmm, frames));
  return gmm;
}

namespace {

DiagonalGmm global_gaussian(const FrameMatrix& frames,
                            std::span<const double> var_floor) {
  const int n = frames.num_frames();
  const int d = frames.dims();
  std::vector<double> mean(d, 0.0), var(d, 0.0);
  for (int i = 0; i < n; ++i) {
    const auto y = frames.frame(i);
    for (int dim = 0; dim < d; ++dim) mean[dim] += y[dim];
  }
  for (int dim = 0; dim < d; ++dim) mean[dim] /= n;
  for (int i = 0; i < n; ++i) {
    const auto y = frames.frame(i);
    for (int dim = 0; dim < d; ++dim) {
      const double diff = y[dim] - mean[dim];
      var[dim] += diff * diff;
    }
  }
  for (int dim = 0; dim < d; ++dim)
    var[dim] = std::max(var[dim] / n, var_floor[dim]);
  return DiagonalGmm({1.0}, std::move(mean), std::move(var), d);
}

// Splits the `count` heaviest components, perturbing means by +-0.2 sigma.
// Split pairs stay adjacent so the layout is deterministic.
DiagonalGmm split_components(const DiagonalGmm& gmm, int count) {
  const int k = gmm.num_components();
  const int d = gmm.dims();
  std::vector<int> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&gmm](int a, int b) {
    return gmm.weight(a) > gmm.weight(b);
  });
  std::vector<bool> split(k, false);
  for (int i = 0; i < count; ++i) split[order[i]] = true;

  std::vector<double> weights, means, vars;
  weights.reserve(k + count);
  means.reserve(static_cast<std::size_t>(k + count) * d);
  vars.reserve(static_cast<std::size_t>(k + count) * d);
  for (int comp = 0; comp < k; ++comp) {
    const auto mu = gmm.mean(comp);
    const auto var = gmm.var(comp);
    if (!split[comp]) {
      weights.push_back(gmm.weight(comp));
      means.insert(means.end(), mu.begin(), mu.end());
      vars.insert(vars.end(), var.begin(), var.end());
      continue;
    }
    for (int sign = -1; sign <= 1; sign += 2) {
      weights.push_back(0.5 * gmm.weight(comp));
      for (int dim = 0; dim < d; ++dim)
        means.push_back(mu[dim] + sign * 0.2 * std::sqrt(var[dim]));
      vars.insert(vars.end(), var.begin(), var.end());
    }
  }
  return DiagonalGmm(std::move(weights), std::move(means), std::move(vars), d);
}

}  // namespace

DiagonalGmm train_gmm_em(const FrameMatrix& frames, int components, int iters,
                         std::uint64_t /*seed*/, EmTrace* trace) {
  if (components < 1)
    throw ValidationError("train_gmm_em: components must be >= 1");
  if (iters < 1) throw ValidationError("train_gmm_em: iters must be >= 1");
  if (frames.num_frames() < components)
    throw ValidationError("train_gmm_em: insufficient data (" +
                          std::to_string(frames.num_frames()) + " frames for " +
                          std::to_string(components) + " components)");
  for (double v : frames.data())
    if (!std::isfinite(v))
      throw ValidationError("train_gmm_em: non-finite frame value");

  const std::vector<double> floor = default_variance_floor(frames);
  DiagonalGmm gmm = global_gaussian(frames, floor);

  auto run_stage = [&](DiagonalGmm model) {
    EmStage stage;
    stage.components = model.num_components();
    model = run_em_sweeps(std::move(model), frames, iters,
                          trace ? &stage.sweep_log_likelihoods : nullptr,
                          floor);
    if (trace) trace->push_back(std::move(stage));
    return model;
  };

  gmm = run_stage(std::move(gmm));
  while (gmm.num_components() < components) {
    const int target = std::min(2 * gmm.num_components(), components);
    gmm = split_components(gmm, target - gmm.num_components());
    gmm = run_stage(std::move(gmm));
  }
  return gmm;
}

DiagonalGmm map_adapt_means(const DiagonalGmm& prior, const FrameMatrix& frames,
                            double tau) {
  check_dims(prior, frames.dims(), "map_adapt_means");
  if (tau < 0.0) throw ValidationError("map_adapt_means: tau must be >= 0");
  if (frames.num_frames() == 0)
    throw ValidationError("map_adapt_means: empty input");

  const GmmStats stats = accumulate_em_stats(prior, frames);
  const int k = prior.num_components();
  const int d = prior.dims();
  std::vector<double> means(static_cast<std::size_t>(k) * d);
  for (int comp = 0; comp < k; ++comp) {
    const auto prior_mean = prior.mean(comp);
    const double occ = stats.occupancy[comp];
    const double denom = tau + occ;
    double* mu = means.data() + static_cast<std::size_t>(comp) * d;
    for (int dim = 0; dim < d; ++dim) {
      const double data_sum =
          stats.mean_sum[static_cast<std::size_t>(comp) * d + dim];
      mu[dim] = denom > 0.0 ? (tau * prior_mean[dim] + data_sum) / denom
                            : prior_mean[dim];
    }
  }
  return DiagonalGmm(prior.weights(), std::move(means), prior.vars(), d);
}

namespace internal {

nlohmann::json gmm_to_json(const DiagonalGmm& gmm) {
  nlohmann::json doc;
  doc["dims"] = gmm.dims();
  doc["K"] = gmm.num_components();
  doc["weights"] = gmm.weights();
  nlohmann::json means = nlohmann::json::array();
  nlohmann::json vars = nlohmann::json::array();
  for (int comp = 0; comp < gmm.num_components(); ++comp) {
    const auto mu = gmm.mean(comp);
    const auto var = gmm.var(comp);
    means.push_back(std::vector<double>(mu.begin(), mu.end()));
    vars.push_back(std::vector<double>(var.begin(), var.end()));
  }
  doc["means"] = std::move(means);
  doc["vars"] = std::move(vars);
  return doc;
}

DiagonalGmm gmm_from_json(const nlohmann::json& doc) {
  try {
    const int dims = doc.at("dims").get<int>();
    const int k = doc.at("K").get<int>();
    auto weights = doc.at("weights").get<std::vector<double>>();
    const auto& means_rows = doc.at("means");
    const auto& vars_rows = doc.at("vars");
    if (static_cast<int>(weights.size()) != k ||
        static_cast<int>(means_rows.size()) != k ||
        static_cast<int>(vars_rows.size()) != k)
      throw FormatError("gmm: K does not match parameter sizes");
    std::vector<double> means, vars;
    means.reserve(static_cast<std::size_t>(k) * dims);
    vars.reserve(static_cast<std::size_t>(k) * dims);
    for (int comp = 0; comp < k; ++comp) {
      auto mu = means_rows[comp].get<std::vector<double>>();
      auto var = vars_rows[comp].get<std::vector<double>>();
      means.insert(means.end(), mu.begin(), mu.end());
      vars.insert(vars.end(), var.begin(), var.end());
    }
    return DiagonalGmm(std::move(weights), std::move(means), std::move(vars),
                       dims);
  } catch (const nlohmann::json::exception& err) {
    throw FormatError(std::string("gmm: ") + err.what());
  }
}

nlohmann::json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return nlohmann::json::parse(buf.str());
  } catch (const nlohmann::json::parse_error& err) {
    throw FormatError(path.string() + ": " + err.what());
  }
}

void save_json_file(const std::filesystem::path& path,
                    const nlohmann::json& doc) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << doc.dump(2) << "\n";
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace internal

void save_gmm(const std::filesystem::path& path, const DiagonalGmm& gmm) {
  internal::save_json_file(path, internal::gmm_to_json(gmm));
}

DiagonalGmm load_gmm(const std::filesystem::path& path) {
  return internal::gmm_from_json(internal::load_json_file(path));
}

}  // namespace bgt
