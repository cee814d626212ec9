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

#ifndef BGT_CORPUS_HPP
#define BGT_CORPUS_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bgt/types.hpp"

namespace bgt {

enum class Split { train, test };

std::string to_string(Split split);
Split split_from_string(const std::string& s);

// The eight broadcast genres used throughout as the default genre list.
const std::vector<std::string>& default_genres();

struct ShowRecord {
  std::string id;
  std::string genre;
  Split split = Split::train;
  std::filesystem::path feat_path;
  std::optional<std::filesystem::path> lab_path;

  bool operator==(const ShowRecord&) const = default;
};

struct CorpusManifest {
  std::vector<std::string> genre_list;
  std::vector<ShowRecord> shows;

  bool operator==(const CorpusManifest&) const = default;

  // Unique ids, genres drawn from genre_list.
  void validate() const;

  std::vector<const ShowRecord*> shows_in_split(Split split) const;
};

// Manifest file: a JSON array of show records. Relative paths are resolved
// against the manifest's directory on load. Genres are validated against
// `genres` (the default eight when omitted).
CorpusManifest load_manifest(const std::filesystem::path& path);
CorpusManifest load_manifest(const std::filesystem::path& path,
                             const std::vector<std::string>& genres);
// Paths are written relative to the manifest's directory when possible.
void save_manifest(const std::filesystem::path& path,
                   const CorpusManifest& manifest);

// Feature file: header "FEAT <dims> <frames> <frame_period_ms>" followed by
// one space-separated row per frame. Values are printed with the shortest
// representation that round-trips exactly.
FrameMatrix read_feature_file(const std::filesystem::path& path);
void write_feature_file(const std::filesystem::path& path,
                        const FrameMatrix& frames);

// Label file: header "LAB <T> <frames>" followed by one line of
// space-separated integers.
LabelSequence read_label_file(const std::filesystem::path& path);
void write_label_file(const std::filesystem::path& path,
                      const LabelSequence& labels);

// Appends first and second derivatives to the statics, tripling the feature
// dimension. The derivative is the regression delta
//   d(n) = sum_{theta=1..window} theta * (c(n+theta) - c(n-theta))
//          / (2 * sum_{theta=1..window} theta^2)
// with sequence edges padded by repeating the first/last frame. Second
// derivatives are the same operator applied to the first derivatives.
FrameMatrix compute_deltas(const FrameMatrix& frames, int window = 2);

// One genre of the synthetic corpus: a first-order Markov chain over
// backgrounds plus per-split show counts.
struct GenreSynthSpec {
  std::string name;
  std::vector<std::vector<double>> background_transition_matrix;  // T x T
  std::vector<double> background_initial;                         // length T
  int shows_train = 0;
  int shows_test = 0;
  int frames_per_show = 0;
};

struct BackgroundSpec {
  std::vector<double> mean;  // length D
  std::vector<double> var;   // length D, strictly positive
};

struct SynthConfig {
  std::vector<GenreSynthSpec> genres;
  std::vector<BackgroundSpec> backgrounds;
  int dims = 0;
  std::uint64_t seed = 0;
  double frame_period_ms = 10.0;

  int num_backgrounds() const { return static_cast<int>(backgrounds.size()); }
  void validate() const;
};

SynthConfig load_synth_config(const std::filesystem::path& path);
void save_synth_config(const std::filesystem::path& path,
                       const SynthConfig& config);

struct SynthShow {
  FrameMatrix frames;
  LabelSequence labels;
};

// One sampled show for genre `genre_index`, drawing from `rng`. The corpus
// synthesizer layers file output and per-show sub-seeding on top of this.
SynthShow synthesize_show(const SynthConfig& config, int genre_index,
                          class Rng& rng);

// Samples one label path and observation stream per show, writes feature and
// ground-truth label files plus "manifest.json" under out_dir, and returns
// the manifest. Each show draws from its own sub-seeded generator, so output
// is byte-identical for a given seed regardless of scheduling.
CorpusManifest synthesize_corpus(const SynthConfig& config,
                                 const std::filesystem::path& out_dir);

}  // namespace bgt

#endif  // BGT_CORPUS_HPP
