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

#include "bgt/cli.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bgt/bgtrack.hpp"
#include "bgt/corpus.hpp"
#include "bgt/hmm.hpp"
#include "bgt/pipeline.hpp"
#include "bgt/svm.hpp"
#include "bgt/transforms.hpp"

namespace bgt {

namespace {

namespace fs = std::filesystem;

// Genres that actually have training material, in sorted order. A corpus
// rarely covers the whole genre glossary, so trainers fit one model per
// genre found here rather than per glossary entry.
std::vector<std::string> train_split_genres(const CorpusManifest& manifest) {
  std::vector<std::string> genres;
  for (const auto& show : manifest.shows)
    if (show.split == Split::train) genres.push_back(show.genre);
  std::sort(genres.begin(), genres.end());
  genres.erase(std::unique(genres.begin(), genres.end()), genres.end());
  if (genres.empty())
    throw ValidationError("manifest has no training shows");
  return genres;
}

// Training material of one genre: its train-split shows, loaded.
std::vector<FrameMatrix> load_genre_train_shows(const CorpusManifest& manifest,
                                                const std::string& genre) {
  std::vector<FrameMatrix> shows;
  for (const auto& show : manifest.shows)
    if (show.split == Split::train && show.genre == genre)
      shows.push_back(read_feature_file(show.feat_path));
  if (shows.empty())
    throw ValidationError("no training shows for genre '" + genre + "'");
  return shows;
}

FrameMatrix pool_shows(const std::vector<FrameMatrix>& shows) {
  long total = 0;
  for (const auto& show : shows) total += show.num_frames();
  FrameMatrix pooled(shows[0].dims(), shows[0].frame_period_ms());
  pooled.reserve_frames(static_cast<int>(total));
  for (const auto& show : shows)
    for (int i = 0; i < show.num_frames(); ++i) pooled.append(show.frame(i));
  return pooled;
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

void run_synth(const fs::path& config_path, const fs::path& out_dir,
               std::uint64_t seed, bool seed_given) {
  SynthConfig config = load_synth_config(config_path);
  if (seed_given) config.seed = seed;
  fs::create_directories(out_dir);
  synthesize_corpus(config, out_dir);
}

void run_align(const fs::path& bank_path, const fs::path& feat_path,
               const fs::path& out_path) {
  const BackgroundBank bank = load_bank(bank_path);
  const FrameMatrix frames = read_feature_file(feat_path);
  write_label_file(out_path, decode_backgrounds(bank, frames));
}

void run_extract(const fs::path& lab_path, int window, bool deltas,
                 double period_ms, const fs::path& out_path) {
  const LabelSequence labels = read_label_file(lab_path);
  const BackgroundTrack track = extract_track(labels, window);
  write_feature_file(out_path, track_to_features(track, deltas, period_ms));
}

void run_train_gmm(const fs::path& manifest_path, int components, int iters,
                   std::uint64_t seed, const fs::path& out_dir) {
  const CorpusManifest manifest = load_manifest(manifest_path);
  GmmModelSet set;
  for (const auto& genre : train_split_genres(manifest)) {
    const FrameMatrix pooled =
        pool_shows(load_genre_train_shows(manifest, genre));
    set.genres.emplace_back(genre,
                            train_gmm_em(pooled, components, iters, seed));
  }
  fs::create_directories(out_dir);
  save_gmm_set(out_dir / "gmm.json", set);
}

void run_train_hmm(const fs::path& manifest_path, int states, int components,
                   int iters, std::uint64_t seed, const fs::path& out_dir) {
  const CorpusManifest manifest = load_manifest(manifest_path);
  HmmModelSet set;
  for (const auto& genre : train_split_genres(manifest)) {
    const auto shows = load_genre_train_shows(manifest, genre);
    set.genres.emplace_back(
        genre, train_hmm_baum_welch(shows, states, components, iters, seed));
  }
  fs::create_directories(out_dir);
  save_hmm_set(out_dir / "hmm.json", set);
}

void run_train_svm(const fs::path& manifest_path, int components, double tau,
                   double c, double gamma, int iters, std::uint64_t seed,
                   const fs::path& out_dir) {
  const CorpusManifest manifest = load_manifest(manifest_path);
  const auto train_shows = manifest.shows_in_split(Split::train);
  if (train_shows.empty())
    throw ValidationError("train-svm: manifest has no training shows");

  std::vector<FrameMatrix> frames(train_shows.size());
  std::vector<std::string> labels(train_shows.size());
  for (std::size_t i = 0; i < train_shows.size(); ++i) {
    frames[i] = read_feature_file(train_shows[i]->feat_path);
    labels[i] = train_shows[i]->genre;
  }
  const DiagonalGmm ubm =
      train_gmm_em(pool_shows(frames), components, iters, seed);

  std::vector<Supervector> supervectors(frames.size());
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < static_cast<int>(frames.size()); ++i)
    supervectors[i] =
        build_supervector(ubm, frames[i], tau, train_shows[i]->id);

  const SvmModelSet set = train_svm_genre_set(
      train_split_genres(manifest), supervectors, labels, c, gamma, tau,
      "ubm.json");
  fs::create_directories(out_dir);
  save_gmm(out_dir / "ubm.json", ubm);
  save_svm_set(out_dir / "svm.json", set);
}

void run_train_bank(const fs::path& manifest_path, int components,
                    double stay_prob, int iters, std::uint64_t seed,
                    const fs::path& out_path) {
  const CorpusManifest manifest = load_manifest(manifest_path);
  const auto train_shows = manifest.shows_in_split(Split::train);
  if (train_shows.empty())
    throw ValidationError("train-bank: manifest has no training shows");

  int num_backgrounds = 0;
  std::vector<FrameMatrix> frames;
  std::vector<LabelSequence> labels;
  for (const auto* show : train_shows) {
    if (!show->lab_path)
      throw ValidationError("train-bank: show '" + show->id +
                            "' has no label file");
    frames.push_back(read_feature_file(show->feat_path));
    labels.push_back(read_label_file(*show->lab_path));
    if (labels.back().num_frames() != frames.back().num_frames())
      throw ValidationError("train-bank: show '" + show->id +
                            "' labels do not cover its frames");
    if (num_backgrounds == 0)
      num_backgrounds = labels.back().num_backgrounds;
    else if (labels.back().num_backgrounds != num_backgrounds)
      throw ValidationError("train-bank: shows disagree on background count");
  }

  const DiagonalGmm canonical =
      train_gmm_em(pool_shows(frames), components, iters, seed);

  BackgroundBank bank;
  bank.canonical_gmm = canonical;
  for (int bg = 0; bg < num_backgrounds; ++bg) {
    FrameMatrix subset(frames[0].dims(), frames[0].frame_period_ms());
    for (std::size_t s = 0; s < frames.size(); ++s)
      for (int n = 0; n < frames[s].num_frames(); ++n)
        if (labels[s].labels[n] == bg) subset.append(frames[s].frame(n));
    if (subset.num_frames() == 0)
      throw ValidationError("train-bank: no frames labeled background " +
                            std::to_string(bg));
    bank.transforms.push_back(
        estimate_cmllr(canonical, subset, iters).transform);
  }
  std::tie(bank.stay_log_prob, bank.switch_log_prob) =
      bank_transition_log_probs(num_backgrounds, stay_prob);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  save_bank(out_path, bank);
}

void run_classify(const std::string& system_name, const fs::path& models_dir,
                  const fs::path& manifest_path, const fs::path& out_path) {
  const System system = system_from_string(system_name);
  if (system == System::kCombined)
    throw ValidationError("classify: system must be gmm, hmm, or svm");
  const CorpusManifest manifest = load_manifest(manifest_path);
  const auto test_shows = manifest.shows_in_split(Split::test);
  if (test_shows.empty())
    throw ValidationError("classify: manifest has no test shows");

  // Every reference genre among the test shows needs a model, otherwise
  // those shows could never be scored correctly.
  std::vector<std::string> wanted_genres;
  for (const auto* show : test_shows) wanted_genres.push_back(show->genre);
  std::sort(wanted_genres.begin(), wanted_genres.end());
  wanted_genres.erase(
      std::unique(wanted_genres.begin(), wanted_genres.end()),
      wanted_genres.end());

  GmmModelSet gmm_set;
  HmmModelSet hmm_set;
  SvmModelSet svm_set;
  DiagonalGmm ubm;
  const auto require_cover = [&wanted_genres](const auto& genres) {
    for (const auto& wanted : wanted_genres) {
      bool found = false;
      for (const auto& entry : genres)
        if ((entry.first) == wanted) found = true;
      if (!found)
        throw ValidationError("classify: missing model for genre '" + wanted +
                              "'");
    }
  };
  if (system == System::kGmm) {
    gmm_set = load_gmm_set(models_dir / "gmm.json");
    require_cover(gmm_set.genres);
  } else if (system == System::kHmm) {
    hmm_set = load_hmm_set(models_dir / "hmm.json");
    require_cover(hmm_set.genres);
  } else {
    svm_set = load_svm_set(models_dir / "svm.json");
    ubm = load_gmm(models_dir / svm_set.ubm_ref);
    for (const auto& wanted : wanted_genres) {
      bool found = false;
      for (const auto& entry : svm_set.genres)
        if (entry.name == wanted) found = true;
      if (!found)
        throw ValidationError("classify: missing model for genre '" + wanted +
                              "'");
    }
  }

  const int n = static_cast<int>(test_shows.size());
  std::vector<ClassificationResult> results(n);
  std::vector<std::string> failures(n);
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    try {
      const FrameMatrix frames = read_feature_file(test_shows[i]->feat_path);
      if (system == System::kGmm)
        results[i] = classify_show_gmm(gmm_set, test_shows[i]->id, frames);
      else if (system == System::kHmm)
        results[i] = classify_show_hmm(hmm_set, test_shows[i]->id, frames);
      else
        results[i] = classify_show_svm(svm_set, ubm, test_shows[i]->id, frames);
    } catch (const std::exception& err) {
      failures[i] = err.what();
    }
  }
  for (int i = 0; i < n; ++i)
    if (!failures[i].empty())
      throw ValidationError("classify: show '" + test_shows[i]->id +
                            "': " + failures[i]);
  write_results_tsv(out_path, results);
}

void run_combine(const fs::path& a_path, const fs::path& b_path,
                 const fs::path& out_path) {
  const auto a_results = read_results_tsv(a_path);
  const auto b_results = read_results_tsv(b_path);
  std::map<std::string, const ClassificationResult*> b_by_show;
  for (const auto& result : b_results) {
    if (!b_by_show.emplace(result.show_id, &result).second)
      throw ValidationError("combine: duplicate show '" + result.show_id +
                            "' in " + b_path.string());
  }
  if (a_results.size() != b_results.size())
    throw ValidationError("combine: inputs list different shows");
  std::vector<ClassificationResult> combined;
  combined.reserve(a_results.size());
  for (const auto& a : a_results) {
    const auto b = b_by_show.find(a.show_id);
    if (b == b_by_show.end())
      throw ValidationError("combine: show '" + a.show_id + "' is missing in " +
                            b_path.string());
    combined.push_back(combine(a, *b->second));
  }
  write_results_tsv(out_path, combined);
}

void run_eval(const fs::path& results_path, const fs::path& manifest_path) {
  const auto results = read_results_tsv(results_path);
  const CorpusManifest manifest = load_manifest(manifest_path);
  std::cout << format_eval_report(evaluate(results, manifest));
}

void run_render(const fs::path& track_path, int start, int count,
                const fs::path& out_path) {
  const FrameMatrix frames = read_feature_file(track_path);
  const BackgroundTrack track = track_from_features(frames);
  write_text_file(out_path, render_track_svg(track, start, count));
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Background-tracking features and broadcast genre identification"};
  app.require_subcommand(1);

  // Shared option storage; only the parsed subcommand's callback reads it.
  fs::path config_path, out_path, bank_path, feat_path, lab_path;
  fs::path manifest_path, models_dir, a_path, b_path, results_path, track_path;
  std::uint64_t seed = 1234;
  int window = 100, components = 32, states = 8, iters = 20;
  int start = 0, count = 0;
  double tau = 10.0, c_param = 1.0, gamma = 0.0, period_ms = 10.0;
  double stay_prob = 0.98;
  bool deltas = false;
  std::string system_name;

  auto* synth = app.add_subcommand("synth", "Sample a synthetic corpus");
  synth->add_option("--config", config_path, "Corpus description (JSON)")
      ->required();
  synth->add_option("--out", out_path, "Output directory")->required();
  auto* synth_seed = synth->add_option("--seed", seed, "Generator seed");
  synth->callback([&] {
    run_synth(config_path, out_path, seed, synth_seed->count() > 0);
  });

  auto* align = app.add_subcommand(
      "align", "Decode the per-frame background labels of a show");
  align->add_option("--bank", bank_path, "Background bank (JSON)")->required();
  align->add_option("--feat", feat_path, "Input feature file")->required();
  align->add_option("--out", out_path, "Output label file")->required();
  align->callback([&] { run_align(bank_path, feat_path, out_path); });

  auto* extract = app.add_subcommand(
      "extract", "Turn a label file into background-tracking features");
  extract->add_option("--lab", lab_path, "Input label file")->required();
  extract->add_option("--window", window, "Frames per output step")
      ->required()
      ->check(CLI::PositiveNumber);
  extract->add_flag("--deltas", deltas,
                    "Append first and second derivatives");
  extract->add_option("--period-ms", period_ms,
                      "Frame period of the labeled stream (ms)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  extract->add_option("--out", out_path, "Output feature file")->required();
  extract->callback(
      [&] { run_extract(lab_path, window, deltas, period_ms, out_path); });

  auto* train_gmm = app.add_subcommand(
      "train-gmm", "Train one genre GMM per genre on the train split");
  train_gmm->add_option("--manifest", manifest_path, "Corpus manifest")
      ->required();
  train_gmm->add_option("--components", components, "Mixture components")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train_gmm->add_option("--iters", iters, "EM sweeps per split stage")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train_gmm->add_option("--seed", seed, "Training seed")
      ->capture_default_str();
  train_gmm->add_option("--out", out_path, "Output model directory")
      ->required();
  train_gmm->callback(
      [&] { run_train_gmm(manifest_path, components, iters, seed, out_path); });

  auto* train_hmm = app.add_subcommand(
      "train-hmm", "Train one genre HMM per genre on the train split");
  train_hmm->add_option("--manifest", manifest_path, "Corpus manifest")
      ->required();
  train_hmm->add_option("--states", states, "HMM states")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train_hmm->add_option("--components", components, "Components per state")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train_hmm->add_option("--iters", iters, "Baum-Welch sweeps")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train_hmm->add_option("--seed", seed, "Training seed")
      ->capture_default_str();
  train_hmm->add_option("--out", out_path, "Output model directory")
      ->required();
  train_hmm->callback([&] {
    run_train_hmm(manifest_path, states, components, iters, seed, out_path);
  });

  auto* train_svm = app.add_subcommand(
      "train-svm", "Train a UBM plus one genre SVM per genre");
  train_svm->add_option("--manifest", manifest_path, "Corpus manifest")
      ->required();
  train_svm->add_option("--components", components, "UBM components")
      ->default_val(16)
      ->check(CLI::PositiveNumber);
  train_svm->add_option("--tau", tau, "MAP relevance factor")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  train_svm->add_option("--c", c_param, "Soft-margin C")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train_svm->add_option("--gamma", gamma,
                        "Kernel width (0 selects 1/supervector length)")
      ->capture_default_str();
  train_svm->add_option("--iters", iters, "UBM EM sweeps per split stage")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train_svm->add_option("--seed", seed, "Training seed")
      ->capture_default_str();
  train_svm->add_option("--out", out_path, "Output model directory")
      ->required();
  train_svm->callback([&] {
    run_train_svm(manifest_path, components, tau, c_param, gamma, iters, seed,
                  out_path);
  });

  auto* train_bank = app.add_subcommand(
      "train-bank",
      "Estimate a background bank (canonical GMM plus one transform per "
      "background) from labeled training shows");
  train_bank->add_option("--manifest", manifest_path, "Corpus manifest")
      ->required();
  train_bank->add_option("--components", components,
                         "Canonical GMM components")
      ->default_val(8)
      ->check(CLI::PositiveNumber);
  train_bank->add_option("--stay", stay_prob, "Stay probability")
      ->capture_default_str();
  train_bank->add_option("--iters", iters, "Estimation iterations")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  train_bank->add_option("--seed", seed, "Training seed")
      ->capture_default_str();
  train_bank->add_option("--out", out_path, "Output bank file (JSON)")
      ->required();
  train_bank->callback([&] {
    run_train_bank(manifest_path, components, stay_prob, iters, seed,
                   out_path);
  });

  auto* classify = app.add_subcommand(
      "classify", "Score every test show against a trained model set");
  classify->add_option("--system", system_name, "gmm, hmm, or svm")
      ->required()
      ->check(CLI::IsMember({"gmm", "hmm", "svm"}));
  classify->add_option("--models", models_dir, "Model directory")->required();
  classify->add_option("--manifest", manifest_path, "Corpus manifest")
      ->required();
  classify->add_option("--out", out_path, "Output results TSV")->required();
  classify->callback([&] {
    run_classify(system_name, models_dir, manifest_path, out_path);
  });

  auto* combine_cmd = app.add_subcommand(
      "combine", "Merge two results files by per-show confidence");
  combine_cmd->add_option("--a", a_path, "First results TSV (wins ties)")
      ->required();
  combine_cmd->add_option("--b", b_path, "Second results TSV")->required();
  combine_cmd->add_option("--out", out_path, "Output results TSV")->required();
  combine_cmd->callback([&] { run_combine(a_path, b_path, out_path); });

  auto* eval = app.add_subcommand(
      "eval", "Score a results file against the manifest's test split");
  eval->add_option("--results", results_path, "Results TSV")->required();
  eval->add_option("--manifest", manifest_path, "Corpus manifest")->required();
  eval->callback([&] { run_eval(results_path, manifest_path); });

  auto* render = app.add_subcommand(
      "render", "Draw a track window range as stacked bars (SVG)");
  render->add_option("--track", track_path, "Track feature file (statics only)")
      ->required();
  render->add_option("--start", start, "First window")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  render->add_option("--count", count, "Number of windows")
      ->required()
      ->check(CLI::PositiveNumber);
  render->add_option("--out", out_path, "Output SVG file")->required();
  render->callback([&] { run_render(track_path, start, count, out_path); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 1;
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace bgt
