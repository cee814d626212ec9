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

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "bgt/errors.hpp"
#include "bgt/gmm.hpp"
#include "bgt/rng.hpp"
#include "bgt/svm.hpp"
#include "bgt/types.hpp"
#include "test_util.hpp"

using bgt_test::TempDir;

namespace {

// Reconstructs the alpha of each training point from the stored support
// vectors and checks the KKT case conditions.
void audit_kkt(const bgt::SvmModel& m,
               const std::vector<std::vector<double>>& x,
               const std::vector<int>& y, double c, double tol) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    double alpha = 0.0;
    for (std::size_t s = 0; s < m.support_vectors.size(); ++s) {
      if (m.support_vectors[s] == x[i]) {
        alpha = std::abs(m.alphas_signed[s]);
        break;
      }
    }
    const double margin = y[i] * bgt::svm_decision(m, x[i]);
    if (alpha <= 0.0) {
      CHECK(margin >= 1.0 - tol);
    } else if (alpha >= c) {
      CHECK(margin <= 1.0 + tol);
    } else {
      CHECK(std::abs(margin - 1.0) <= tol);
    }
  }
}

std::vector<std::vector<double>> separable_points() {
  return {{-2.0, 0.0}, {-1.0, 0.0}, {1.0, 0.0}, {2.0, 0.0}};
}

std::vector<int> separable_labels() { return {-1, -1, 1, 1}; }

}  // namespace

TEST_CASE("gaussian_kernel basics") {
  const std::vector<double> x = {0.5, -1.0, 2.0};
  CHECK(bgt::gaussian_kernel(x, x, 0.7) == 1.0);

  const std::vector<double> a = {0.0};
  const std::vector<double> b = {1.0};
  CHECK(std::abs(bgt::gaussian_kernel(a, b, 1.0) - std::exp(-1.0)) <= 1e-15);

  bgt::Rng rng(121);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> u(4), v(4);
    for (double& e : u) e = rng.gaussian();
    for (double& e : v) e = rng.gaussian();
    CHECK(bgt::gaussian_kernel(u, v, 0.3) == bgt::gaussian_kernel(v, u, 0.3));
  }

  CHECK_THROWS_AS(bgt::gaussian_kernel(x, a, 1.0), bgt::ValidationError);
  CHECK_THROWS_AS(bgt::gaussian_kernel(a, b, 0.0), bgt::ValidationError);
}

TEST_CASE("build_supervector limits and shape") {
  const auto frames = bgt_test::random_frames(300, 21, 123);
  const auto ubm = bgt::train_gmm_em(frames, 16, 4, 0);

  const auto sv = bgt::build_supervector(ubm, frames, 10.0, "show1");
  CHECK(sv.values.size() == 336);
  CHECK(sv.source_show == "show1");

  // Huge tau reproduces the UBM means.
  const auto pinned = bgt::build_supervector(ubm, frames, 1e9);
  REQUIRE(pinned.values.size() == ubm.means().size());
  for (std::size_t i = 0; i < pinned.values.size(); ++i)
    CHECK(std::abs(pinned.values[i] - ubm.means()[i]) <= 1e-6);

  bgt::FrameMatrix empty(21, 10.0);
  CHECK_THROWS_AS(bgt::build_supervector(ubm, empty, 10.0),
                  bgt::ValidationError);
}

TEST_CASE("build_supervector matches the MAP update formula") {
  bgt::DiagonalGmm prior({0.5, 0.5}, {0.0, 5.0}, {1.0, 1.0}, 1);
  bgt::FrameMatrix frames(1, 10.0);
  for (double v : {-1.0, 0.5, 4.0, 6.0})
    frames.append(std::vector<double>{v});
  const double tau = 3.0;

  double occ[2] = {0.0, 0.0};
  double weighted[2] = {0.0, 0.0};
  std::vector<double> gamma(2);
  for (int n = 0; n < frames.num_frames(); ++n) {
    prior.posteriors(frames.frame(n), gamma);
    for (int k = 0; k < 2; ++k) {
      occ[k] += gamma[k];
      weighted[k] += gamma[k] * frames.frame(n)[0];
    }
  }

  const auto sv = bgt::build_supervector(prior, frames, tau);
  REQUIRE(sv.values.size() == 2);
  for (int k = 0; k < 2; ++k) {
    const double expect =
        (tau * prior.mean(k)[0] + weighted[k]) / (tau + occ[k]);
    CHECK(std::abs(sv.values[k] - expect) <= 1e-10);
  }
}

TEST_CASE("svm_decision closed cases and oracle") {
  bgt::SvmModel unit;
  unit.support_vectors = {{0.5, 0.5}};
  unit.alphas_signed = {1.0};
  unit.bias = 0.0;
  unit.gamma = 0.9;
  unit.c = 1.0;
  CHECK(bgt::svm_decision(unit, unit.support_vectors[0]) == 1.0);

  bgt::SvmModel bias_only;
  bias_only.bias = -0.25;
  bias_only.gamma = 1.0;
  bias_only.c = 1.0;
  const std::vector<double> anything = {3.0, -3.0};
  CHECK(bgt::svm_decision(bias_only, anything) == -0.25);

  bgt::Rng rng(127);
  bgt::SvmModel model;
  model.gamma = 0.4;
  model.c = 2.0;
  model.bias = 0.3;
  for (int s = 0; s < 5; ++s) {
    std::vector<double> sv(3);
    for (double& v : sv) v = rng.gaussian();
    model.support_vectors.push_back(sv);
    model.alphas_signed.push_back(rng.gaussian());
  }
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> probe(3);
    for (double& v : probe) v = rng.gaussian();
    double expect = model.bias;
    for (int s = 0; s < 5; ++s)
      expect += model.alphas_signed[s] *
                bgt::gaussian_kernel(model.support_vectors[s], probe,
                                     model.gamma);
    CHECK(std::abs(bgt::svm_decision(model, probe) - expect) <= 1e-12);
  }
}

TEST_CASE("decision is stable under support-vector reordering") {
  bgt::Rng rng(129);
  bgt::SvmModel model;
  model.gamma = 0.4;
  model.c = 2.0;
  model.bias = 0.1;
  for (int s = 0; s < 6; ++s) {
    std::vector<double> sv(2);
    for (double& v : sv) v = rng.gaussian();
    model.support_vectors.push_back(sv);
    model.alphas_signed.push_back(rng.gaussian());
  }
  bgt::SvmModel reversed = model;
  std::reverse(reversed.support_vectors.begin(),
               reversed.support_vectors.end());
  std::reverse(reversed.alphas_signed.begin(), reversed.alphas_signed.end());

  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> probe(2);
    for (double& v : probe) v = rng.gaussian();
    CHECK(std::abs(bgt::svm_decision(model, probe) -
                   bgt::svm_decision(reversed, probe)) <= 1e-12);
  }
}

TEST_CASE("SMO solves a separable four-point problem") {
  const auto x = separable_points();
  const auto y = separable_labels();
  const double c = 10.0;
  const double tol = 1e-3;
  const auto model = bgt::train_svm_smo(x, y, c, 0.5, tol);

  for (std::size_t i = 0; i < x.size(); ++i) {
    const double margin = y[i] * bgt::svm_decision(model, x[i]);
    CHECK(margin > 0.0);           // correct side
    CHECK(margin >= 1.0 - tol);    // functional margin
  }
  audit_kkt(model, x, y, c, tol);

  // Dual constraint: signed alphas cancel.
  double total = 0.0;
  for (double a : model.alphas_signed) {
    total += a;
    CHECK(std::abs(a) <= c + 1e-12);
  }
  CHECK(std::abs(total) <= 1e-6);
}

TEST_CASE("duplicating every training point leaves the decision unchanged") {
  const auto x = separable_points();
  const auto y = separable_labels();
  auto x2 = x;
  auto y2 = y;
  x2.insert(x2.end(), x.begin(), x.end());
  y2.insert(y2.end(), y.begin(), y.end());

  const auto base = bgt::train_svm_smo(x, y, 10.0, 0.5);
  const auto doubled = bgt::train_svm_smo(x2, y2, 10.0, 0.5);

  for (double px = -3.0; px <= 3.0; px += 0.25) {
    const std::vector<double> probe = {px, 0.4};
    CHECK(std::abs(bgt::svm_decision(base, probe) -
                   bgt::svm_decision(doubled, probe)) <= 1e-6);
  }
}

TEST_CASE("vanishing box constraint collapses to the bias") {
  const auto x = separable_points();
  const auto y = separable_labels();
  const auto model = bgt::train_svm_smo(x, y, 1e-9, 0.5);
  for (double px = -3.0; px <= 3.0; px += 0.5) {
    const std::vector<double> probe = {px, -0.3};
    CHECK(std::abs(bgt::svm_decision(model, probe) - model.bias) <= 1e-6);
  }
}

TEST_CASE("train_svm_smo validates its input") {
  const auto x = separable_points();
  CHECK_THROWS_AS(bgt::train_svm_smo(x, {1, 1, 1, 1}, 1.0, 0.5),
                  bgt::ValidationError);
  CHECK_THROWS_AS(bgt::train_svm_smo(x, {1, -1, 1, 2}, 1.0, 0.5),
                  bgt::ValidationError);
  CHECK_THROWS_AS(bgt::train_svm_smo(x, {1, -1, 1}, 1.0, 0.5),
                  bgt::ValidationError);
  CHECK_THROWS_AS(bgt::train_svm_smo(x, {1, -1, 1, -1}, -1.0, 0.5),
                  bgt::ValidationError);
}

TEST_CASE("KKT audit on a non-separable problem") {
  bgt::Rng rng(131);
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  for (int i = 0; i < 40; ++i) {
    const int label = i % 2 == 0 ? 1 : -1;
    // Overlapping classes force bounded alphas.
    x.push_back({label * 0.5 + rng.gaussian(), rng.gaussian()});
    y.push_back(label);
  }
  const double c = 1.0;
  const double tol = 1e-3;
  const auto model = bgt::train_svm_smo(x, y, c, 0.7, tol);
  audit_kkt(model, x, y, c, tol);
}

TEST_CASE("classify_one_vs_rest picks the best genre") {
  bgt::SvmModel a;
  a.bias = 0.9;
  a.gamma = 1.0;
  a.c = 1.0;
  bgt::SvmModel b = a;
  b.bias = -0.2;

  const std::vector<double> probe = {0.0};
  std::vector<std::pair<std::string, bgt::SvmModel>> one = {{"News", a}};
  CHECK(bgt::classify_one_vs_rest(one, probe).first == "News");

  std::vector<std::pair<std::string, bgt::SvmModel>> two = {{"Advice", a},
                                                            {"News", b}};
  const auto [genre, score] = bgt::classify_one_vs_rest(two, probe);
  CHECK(genre == "Advice");
  CHECK(score == 0.9);

  bgt::SvmModel tied = a;
  std::vector<std::pair<std::string, bgt::SvmModel>> tie = {{"News", a},
                                                            {"Advice", tied}};
  CHECK(bgt::classify_one_vs_rest(tie, probe).first == "Advice");

  CHECK_THROWS_AS(bgt::classify_one_vs_rest({}, probe), bgt::ValidationError);
}

namespace {

struct GenreSetFixture {
  std::vector<std::string> genre_names = {"Drama", "News"};
  std::vector<bgt::Supervector> supervectors;
  std::vector<std::string> labels;

  explicit GenreSetFixture(std::uint64_t seed) {
    bgt::Rng rng(seed);
    for (int i = 0; i < 30; ++i) {
      const bool drama = i % 2 == 0;
      bgt::Supervector sv;
      sv.source_show = "show" + std::to_string(i);
      sv.values = {(drama ? -2.0 : 2.0) + rng.gaussian(),
                   (drama ? 1.0 : -1.0) + 0.5 * rng.gaussian()};
      supervectors.push_back(std::move(sv));
      labels.push_back(drama ? "Drama" : "News");
    }
  }
};

}  // namespace

TEST_CASE("genre set training separates the classes") {
  GenreSetFixture fix(137);
  const auto set = bgt::train_svm_genre_set(fix.genre_names, fix.supervectors,
                                            fix.labels, 1.0, 0.0, 10.0,
                                            "ubm.json");
  REQUIRE(set.genres.size() == 2);
  CHECK(set.gamma == 0.5);  // 1/F default with F = 2
  CHECK(set.ubm_ref == "ubm.json");

  int correct = 0;
  for (std::size_t i = 0; i < fix.supervectors.size(); ++i) {
    std::string best;
    double best_score = 0.0;
    for (const auto& genre : set.genres) {
      const double score =
          bgt::genre_decision(genre, fix.supervectors[i].values);
      if (best.empty() || score > best_score) {
        best = genre.name;
        best_score = score;
      }
    }
    correct += best == fix.labels[i] ? 1 : 0;
  }
  CHECK(correct == 30);
}

TEST_CASE("z-normalization makes training invariant to affine rescaling") {
  GenreSetFixture fix(139);
  const auto base = bgt::train_svm_genre_set(fix.genre_names, fix.supervectors,
                                             fix.labels, 1.0, 0.0, 10.0, "u");

  // Per-dimension affine map of every raw supervector.
  const double scale[2] = {7.0, 0.2};
  const double shift[2] = {100.0, -3.0};
  auto rescaled = fix.supervectors;
  for (auto& sv : rescaled) {
    for (int d = 0; d < 2; ++d)
      sv.values[d] = scale[d] * sv.values[d] + shift[d];
  }
  const auto moved = bgt::train_svm_genre_set(fix.genre_names, rescaled,
                                              fix.labels, 1.0, 0.0, 10.0, "u");

  for (std::size_t i = 0; i < fix.supervectors.size(); ++i) {
    for (std::size_t g = 0; g < base.genres.size(); ++g) {
      const double a =
          bgt::genre_decision(base.genres[g], fix.supervectors[i].values);
      const double b =
          bgt::genre_decision(moved.genres[g], rescaled[i].values);
      CHECK(std::abs(a - b) <= 1e-6);
    }
  }
}

TEST_CASE("svm set file round-trip") {
  TempDir dir("svm_io");
  GenreSetFixture fix(141);
  const auto set = bgt::train_svm_genre_set(fix.genre_names, fix.supervectors,
                                            fix.labels, 1.0, 0.0, 10.0,
                                            "ubm.json");
  bgt::save_svm_set(dir / "svm.json", set);
  const auto back = bgt::load_svm_set(dir / "svm.json");
  REQUIRE(back.genres.size() == set.genres.size());
  CHECK(back.tau == set.tau);
  CHECK(back.gamma == set.gamma);
  CHECK(back.c == set.c);
  CHECK(back.ubm_ref == set.ubm_ref);
  for (std::size_t g = 0; g < set.genres.size(); ++g) {
    CHECK(back.genres[g].name == set.genres[g].name);
    CHECK(back.genres[g].norm_mean == set.genres[g].norm_mean);
    CHECK(back.genres[g].norm_std == set.genres[g].norm_std);
    CHECK(back.genres[g].model.bias == set.genres[g].model.bias);
    CHECK(back.genres[g].model.support_vectors ==
          set.genres[g].model.support_vectors);
    CHECK(back.genres[g].model.alphas_signed ==
          set.genres[g].model.alphas_signed);

    // Identical scores after the round-trip.
    for (std::size_t i = 0; i < fix.supervectors.size(); ++i) {
      CHECK(bgt::genre_decision(back.genres[g], fix.supervectors[i].values) ==
            bgt::genre_decision(set.genres[g], fix.supervectors[i].values));
    }
  }
}
