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

#include "bgt/hmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "internal_util.hpp"
#include "model_json.hpp"

namespace bgt {

namespace {

constexpr double kMinOccupancy = 1e-10;
constexpr double kEarlyStopRelative = 1e-6;

void check_frames(const ErgodicHmm& h, const FrameMatrix& frames,
                  const char* who) {
  if (frames.num_frames() == 0)
    throw ValidationError(std::string(who) + ": empty input");
  if (frames.dims() != h.dims())
    throw ValidationError(std::string(who) + ": frame dims do not match");
}

// Emission log-likelihoods, N x S row-major.
std::vector<double> emission_log_matrix(const ErgodicHmm& h,
                                        const FrameMatrix& frames) {
  const int n = frames.num_frames();
  const int s = h.num_states();
  std::vector<double> logb(static_cast<std::size_t>(n) * s);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    const auto y = frames.frame(i);
    for (int state = 0; state < s; ++state)
      logb[static_cast<std::size_t>(i) * s + state] =
          h.emissions[state].log_likelihood(y);
  }
  return logb;
}

// Scaled forward pass. Per frame, emissions are shifted by their maximum
// before exponentiation and alphas renormalized, so
//   log p = sum_n (log c_n + max_shift_n).
struct ForwardPass {
  double log_likelihood = 0.0;
  std::vector<double> alpha;      // N x S, scaled to sum 1 per frame
  std::vector<double> scaled_em;  // N x S: exp(logb - max_shift)
  std::vector<double> scale;      // N: c_n
};

ForwardPass run_forward(const ErgodicHmm& h, const std::vector<double>& logb,
                        int n, const char* who) {
  const int s = h.num_states();
  ForwardPass fw;
  fw.alpha.resize(static_cast<std::size_t>(n) * s);
  fw.scaled_em.resize(static_cast<std::size_t>(n) * s);
  fw.scale.resize(n);

  for (int frame = 0; frame < n; ++frame) {
    const double* lb = logb.data() + static_cast<std::size_t>(frame) * s;
    double* em = fw.scaled_em.data() + static_cast<std::size_t>(frame) * s;
    double mx = -std::numeric_limits<double>::infinity();
    for (int state = 0; state < s; ++state) mx = std::max(mx, lb[state]);
    if (!std::isfinite(mx))
      throw NumericError(std::string(who) + ": non-finite emission at frame " +
                         std::to_string(frame));
    for (int state = 0; state < s; ++state)
      em[state] = std::exp(lb[state] - mx);

    double* a = fw.alpha.data() + static_cast<std::size_t>(frame) * s;
    if (frame == 0) {
      for (int state = 0; state < s; ++state)
        a[state] = h.initial[state] * em[state];
    } else {
      const double* prev =
          fw.alpha.data() + static_cast<std::size_t>(frame - 1) * s;
      for (int state = 0; state < s; ++state) {
        double acc = 0.0;
        for (int r = 0; r < s; ++r)
          acc += prev[r] * h.trans[static_cast<std::size_t>(r) * s + state];
        a[state] = acc * em[state];
      }
    }
    double c = 0.0;
    for (int state = 0; state < s; ++state) c += a[state];
    if (!(c > 0.0))
      throw NumericError(std::string(who) + ": zero probability at frame " +
                         std::to_string(frame));
    for (int state = 0; state < s; ++state) a[state] /= c;
    fw.scale[frame] = c;
    fw.log_likelihood += std::log(c) + mx;
  }
  return fw;
}

// Accumulated expectations from one Baum-Welch sweep.
struct HmmStats {
  std::vector<double> initial_acc;  // S
  std::vector<double> trans_num;    // S x S: sum of xi
  std::vector<double> trans_den;    // S: occupancy over frames 0..N-2
  std::vector<GmmStats> emission;   // S
  double log_likelihood = 0.0;

  HmmStats() = default;
  HmmStats(int states, int components, int dims)
      : initial_acc(states, 0.0),
        trans_num(static_cast<std::size_t>(states) * states, 0.0),
        trans_den(states, 0.0),
        emission(states, GmmStats(components, dims)) {}

  void merge(const HmmStats& other) {
    for (std::size_t i = 0; i < initial_acc.size(); ++i)
      initial_acc[i] += other.initial_acc[i];
    for (std::size_t i = 0; i < trans_num.size(); ++i)
      trans_num[i] += other.trans_num[i];
    for (std::size_t i = 0; i < trans_den.size(); ++i)
      trans_den[i] += other.trans_den[i];
    for (std::size_t i = 0; i < emission.size(); ++i)
      emission[i].merge(other.emission[i]);
    log_likelihood += other.log_likelihood;
  }
};

// Forward-backward over one show; the backward pass streams beta and folds
// state/transition/emission expectations as it goes.
HmmStats accumulate_show(const ErgodicHmm& h, const FrameMatrix& frames,
                         int components) {
  const int s = h.num_states();
  const int n = frames.num_frames();
  const int d = h.dims();
  const std::vector<double> logb = emission_log_matrix(h, frames);
  const ForwardPass fw = run_forward(h, logb, n, "train_hmm_baum_welch");

  HmmStats stats(s, components, d);
  stats.log_likelihood = fw.log_likelihood;

  std::vector<double> beta(s, 1.0), beta_prev(s), gamma(s), comp_gamma;
  for (int frame = n - 1; frame >= 0; --frame) {
    const double* a = fw.alpha.data() + static_cast<std::size_t>(frame) * s;
    for (int state = 0; state < s; ++state) gamma[state] = a[state] * beta[state];

    if (frame == 0)
      for (int state = 0; state < s; ++state)
        stats.initial_acc[state] += gamma[state];
    if (frame < n - 1)
      for (int state = 0; state < s; ++state)
        stats.trans_den[state] += gamma[state];

    const auto y = frames.frame(frame);
    for (int state = 0; state < s; ++state) {
      const double g = gamma[state];
      if (g == 0.0) continue;
      const DiagonalGmm& gmm = h.emissions[state];
      comp_gamma.resize(gmm.num_components());
      gmm.posteriors(y, comp_gamma);
      GmmStats& es = stats.emission[state];
      for (int comp = 0; comp < gmm.num_components(); ++comp) {
        const double w = g * comp_gamma[comp];
        if (w == 0.0) continue;
        es.occupancy[comp] += w;
        double* ms = es.mean_sum.data() + static_cast<std::size_t>(comp) * d;
        double* sq = es.sq_sum.data() + static_cast<std::size_t>(comp) * d;
        for (int dim = 0; dim < d; ++dim) {
          ms[dim] += w * y[dim];
          sq[dim] += w * y[dim] * y[dim];
        }
      }
    }

    if (frame > 0) {
      const double* em =
          fw.scaled_em.data() + static_cast<std::size_t>(frame) * s;
      const double* ap =
          fw.alpha.data() + static_cast<std::size_t>(frame - 1) * s;
      const double inv_c = 1.0 / fw.scale[frame];
      for (int r = 0; r < s; ++r) {
        double back = 0.0;
        for (int to = 0; to < s; ++to) {
          const double step =
              h.trans[static_cast<std::size_t>(r) * s + to] * em[to] * beta[to];
          stats.trans_num[static_cast<std::size_t>(r) * s + to] +=
              ap[r] * step * inv_c;
          back += step;
        }
        beta_prev[r] = back * inv_c;
      }
      std::swap(beta, beta_prev);
    }
  }
  return stats;
}

std::vector<double> pooled_variance_floor(
    const std::vector<FrameMatrix>& shows) {
  const int d = shows[0].dims();
  std::vector<double> mean(d, 0.0), sq(d, 0.0);
  long total = 0;
  for (const auto& show : shows) {
    total += show.num_frames();
    for (int i = 0; i < show.num_frames(); ++i) {
      const auto y = show.frame(i);
      for (int dim = 0; dim < d; ++dim) {
        mean[dim] += y[dim];
        sq[dim] += y[dim] * y[dim];
      }
    }
  }
  std::vector<double> floor(d);
  for (int dim = 0; dim < d; ++dim) {
    const double mu = mean[dim] / total;
    floor[dim] = std::max(1e-4 * (sq[dim] / total - mu * mu), 1e-12);
  }
  return floor;
}

}  // namespace

void ErgodicHmm::validate() const {
  const int s = num_states();
  if (s < 1) throw ValidationError("ErgodicHmm: need at least one state");
  if (static_cast<int>(initial.size()) != s ||
      trans.size() != static_cast<std::size_t>(s) * s)
    throw ValidationError("ErgodicHmm: parameter sizes disagree");
  double init_sum = 0.0;
  for (double p : initial) {
    if (!(p >= 0.0) || !std::isfinite(p))
      throw ValidationError("ErgodicHmm: invalid initial probability");
    init_sum += p;
  }
  if (std::abs(init_sum - 1.0) > 1e-9)
    throw ValidationError("ErgodicHmm: initial probabilities sum to " +
                          std::to_string(init_sum));
  for (int r = 0; r < s; ++r) {
    double row_sum = 0.0;
    for (int to = 0; to < s; ++to) {
      const double p = trans[static_cast<std::size_t>(r) * s + to];
      if (!(p >= 0.0) || !std::isfinite(p))
        throw ValidationError("ErgodicHmm: invalid transition probability");
      row_sum += p;
    }
    if (std::abs(row_sum - 1.0) > 1e-9)
      throw ValidationError("ErgodicHmm: transition row " + std::to_string(r) +
                            " sums to " + std::to_string(row_sum));
  }
  for (const auto& gmm : emissions)
    if (gmm.dims() != dims())
      throw ValidationError("ErgodicHmm: emission dims disagree");
}

double forward_log_likelihood(const ErgodicHmm& h, const FrameMatrix& frames) {
  check_frames(h, frames, "forward_log_likelihood");
  const std::vector<double> logb = emission_log_matrix(h, frames);
  return run_forward(h, logb, frames.num_frames(), "forward_log_likelihood")
      .log_likelihood;
}

std::vector<int> viterbi_path(const ErgodicHmm& h, const FrameMatrix& frames) {
  check_frames(h, frames, "viterbi_path");
  const int s = h.num_states();
  const int n = frames.num_frames();
  const std::vector<double> logb = emission_log_matrix(h, frames);

  std::vector<double> log_trans(static_cast<std::size_t>(s) * s);
  for (std::size_t i = 0; i < log_trans.size(); ++i)
    log_trans[i] = std::log(h.trans[i]);

  std::vector<double> delta(s), next(s);
  std::vector<int> psi(static_cast<std::size_t>(n) * s, 0);
  for (int state = 0; state < s; ++state)
    delta[state] = std::log(h.initial[state]) + logb[state];
  for (int frame = 1; frame < n; ++frame) {
    const double* lb = logb.data() + static_cast<std::size_t>(frame) * s;
    int* back = psi.data() + static_cast<std::size_t>(frame) * s;
    for (int cur = 0; cur < s; ++cur) {
      double best = -std::numeric_limits<double>::infinity();
      int arg = 0;
      for (int prev = 0; prev < s; ++prev) {
        const double cand =
            delta[prev] + log_trans[static_cast<std::size_t>(prev) * s + cur];
        if (cand > best) {
          best = cand;
          arg = prev;
        }
      }
      next[cur] = best + lb[cur];
      back[cur] = arg;
    }
    std::swap(delta, next);
  }

  int state = 0;
  for (int cand = 1; cand < s; ++cand)
    if (delta[cand] > delta[state]) state = cand;
  std::vector<int> path(n);
  for (int frame = n - 1; frame >= 0; --frame) {
    path[frame] = state;
    if (frame > 0) state = psi[static_cast<std::size_t>(frame) * s + state];
  }
  return path;
}

ErgodicHmm train_hmm_baum_welch(const std::vector<FrameMatrix>& shows,
                                int states, int components, int iters,
                                std::uint64_t seed,
                                std::vector<double>* ll_trace) {
  if (states < 1)
    throw ValidationError("train_hmm_baum_welch: states must be >= 1");
  if (components < 1)
    throw ValidationError("train_hmm_baum_welch: components must be >= 1");
  if (iters < 1)
    throw ValidationError("train_hmm_baum_welch: iters must be >= 1");
  if (shows.empty())
    throw ValidationError("train_hmm_baum_welch: no training shows");
  const int d = shows[0].dims();
  long total_frames = 0;
  for (const auto& show : shows) {
    if (show.dims() != d)
      throw ValidationError("train_hmm_baum_welch: shows have mixed dims");
    total_frames += show.num_frames();
  }
  if (total_frames < static_cast<long>(states) * components)
    throw ValidationError("train_hmm_baum_welch: insufficient data (" +
                          std::to_string(total_frames) + " frames for " +
                          std::to_string(states) + "x" +
                          std::to_string(components) + " Gaussians)");

  // Pool all shows and seed the states from one big mixture, dealt
  // round-robin by component index.
  FrameMatrix pooled(d, shows[0].frame_period_ms());
  pooled.reserve_frames(static_cast<int>(total_frames));
  for (const auto& show : shows)
    for (int i = 0; i < show.num_frames(); ++i) pooled.append(show.frame(i));
  const DiagonalGmm seed_gmm =
      train_gmm_em(pooled, states * components, iters, seed);

  ErgodicHmm model;
  model.initial.assign(states, 1.0 / states);
  model.trans.assign(static_cast<std::size_t>(states) * states,
                     1.0 / states);
  for (int state = 0; state < states; ++state) {
    std::vector<double> weights, means, vars;
    for (int comp = state; comp < seed_gmm.num_components(); comp += states) {
      weights.push_back(seed_gmm.weight(comp));
      const auto mu = seed_gmm.mean(comp);
      const auto var = seed_gmm.var(comp);
      means.insert(means.end(), mu.begin(), mu.end());
      vars.insert(vars.end(), var.begin(), var.end());
    }
    double sum = 0.0;
    for (double w : weights) sum += w;
    if (sum > 0.0)
      for (double& w : weights) w /= sum;
    else
      std::fill(weights.begin(), weights.end(), 1.0 / weights.size());
    model.emissions.emplace_back(std::move(weights), std::move(means),
                                 std::move(vars), d);
  }

  const std::vector<double> var_floor = pooled_variance_floor(shows);
  const int num_shows = static_cast<int>(shows.size());
  double prev_ll = -std::numeric_limits<double>::infinity();

  for (int sweep = 0; sweep < iters; ++sweep) {
    std::vector<HmmStats> partial(num_shows);
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < num_shows; ++i)
      partial[i] = accumulate_show(model, shows[i], components);
    HmmStats stats(states, components, d);
    for (const auto& p : partial) stats.merge(p);

    if (ll_trace) ll_trace->push_back(stats.log_likelihood);
    if (sweep > 0 && stats.log_likelihood - prev_ll <
                         kEarlyStopRelative * std::abs(prev_ll))
      return model;
    prev_ll = stats.log_likelihood;

    // M step. Starved states keep their previous parameters.
    double init_sum = 0.0;
    for (double v : stats.initial_acc) init_sum += v;
    if (init_sum > 0.0)
      for (int state = 0; state < states; ++state)
        model.initial[state] = stats.initial_acc[state] / init_sum;
    for (int r = 0; r < states; ++r) {
      if (stats.trans_den[r] < kMinOccupancy) continue;
      double row_sum = 0.0;
      for (int to = 0; to < states; ++to)
        row_sum += stats.trans_num[static_cast<std::size_t>(r) * states + to];
      if (!(row_sum > 0.0)) continue;
      for (int to = 0; to < states; ++to)
        model.trans[static_cast<std::size_t>(r) * states + to] =
            stats.trans_num[static_cast<std::size_t>(r) * states + to] /
            row_sum;
    }
    for (int state = 0; state < states; ++state) {
      double occ = 0.0;
      for (double o : stats.emission[state].occupancy) occ += o;
      if (occ < kMinOccupancy) continue;
      model.emissions[state] =
          em_update(stats.emission[state], model.emissions[state], var_floor);
    }
  }

  if (ll_trace) {
    double final_ll = 0.0;
    std::vector<double> partial(num_shows);
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < num_shows; ++i)
      partial[i] = forward_log_likelihood(model, shows[i]);
    for (double p : partial) final_ll += p;
    ll_trace->push_back(final_ll);
  }
  return model;
}

namespace internal {

nlohmann::json hmm_to_json(const ErgodicHmm& h) {
  h.validate();
  nlohmann::json doc;
  doc["initial"] = h.initial;
  nlohmann::json trans = nlohmann::json::array();
  const int s = h.num_states();
  for (int r = 0; r < s; ++r) {
    const double* row = h.trans.data() + static_cast<std::size_t>(r) * s;
    trans.push_back(std::vector<double>(row, row + s));
  }
  doc["trans"] = std::move(trans);
  nlohmann::json emissions = nlohmann::json::array();
  for (const auto& gmm : h.emissions) emissions.push_back(gmm_to_json(gmm));
  doc["emissions"] = std::move(emissions);
  return doc;
}

ErgodicHmm hmm_from_json(const nlohmann::json& doc) {
  ErgodicHmm h;
  try {
    h.initial = doc.at("initial").get<std::vector<double>>();
    const auto rows = doc.at("trans").get<std::vector<std::vector<double>>>();
    for (const auto& row : rows)
      h.trans.insert(h.trans.end(), row.begin(), row.end());
    for (const auto& entry : doc.at("emissions"))
      h.emissions.push_back(gmm_from_json(entry));
  } catch (const nlohmann::json::exception& err) {
    throw FormatError(std::string("hmm: ") + err.what());
  }
  h.validate();
  return h;
}

}  // namespace internal

void save_hmm(const std::filesystem::path& path, const ErgodicHmm& h) {
  internal::save_json_file(path, internal::hmm_to_json(h));
}

ErgodicHmm load_hmm(const std::filesystem::path& path) {
  try {
    return internal::hmm_from_json(internal::load_json_file(path));
  } catch (const FormatError& err) {
    throw FormatError(path.string() + ": " + err.what());
  }
}

}  // namespace bgt
