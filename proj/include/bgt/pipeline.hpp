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

#ifndef BGT_PIPELINE_HPP
#define BGT_PIPELINE_HPP

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "bgt/corpus.hpp"
#include "bgt/gmm.hpp"
#include "bgt/hmm.hpp"
#include "bgt/svm.hpp"
#include "bgt/types.hpp"

namespace bgt {

enum class System { kGmm, kHmm, kSvm, kCombined };

std::string to_string(System system);
System system_from_string(const std::string& name);

struct ClassificationResult {
  std::string show_id;
  System system = System::kGmm;
  std::map<std::string, double> scores;  // genre -> score
  std::string predicted;
  double confidence = 0.0;
};

// Normalized margin of the sorted scores s1 >= s2 >= ... >= sG:
// (s1 - s2) / (s1 - sG), and 0 when all scores are equal (including G = 1).
double normalize_confidence(const std::map<std::string, double>& scores);

// Per-genre model collections for the likelihood-based classifiers.
struct GmmModelSet {
  std::vector<std::pair<std::string, DiagonalGmm>> genres;
};
struct HmmModelSet {
  std::vector<std::pair<std::string, ErgodicHmm>> genres;
};

ClassificationResult classify_show_gmm(const GmmModelSet& models,
                                       const std::string& show_id,
                                       const FrameMatrix& frames);
ClassificationResult classify_show_hmm(const HmmModelSet& models,
                                       const std::string& show_id,
                                       const FrameMatrix& frames);
// Builds the show supervector against the UBM (tau from the set) and scores
// every genre SVM on it.
ClassificationResult classify_show_svm(const SvmModelSet& models,
                                       const DiagonalGmm& ubm,
                                       const std::string& show_id,
                                       const FrameMatrix& frames);

// Agreement keeps the shared genre at the higher confidence; disagreement
// keeps the higher-confidence input. An exact confidence tie keeps `a`, so
// pass the preferred system first.
ClassificationResult combine(const ClassificationResult& a,
                             const ClassificationResult& b);

struct GenreMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f_measure = 0.0;
};

struct EvalReport {
  std::vector<std::string> genres;
  std::vector<long> confusion;  // G x G row-major, [reference][predicted]
  std::vector<GenreMetrics> per_genre;
  double accuracy = 0.0;
  long total = 0;
  long correct = 0;
};

// Scores results against the manifest's test split. Every test show must
// appear exactly once.
EvalReport evaluate(const std::vector<ClassificationResult>& results,
                    const CorpusManifest& manifest);

std::string format_eval_report(const EvalReport& report);

// Results file: one line per show,
//   show_id<TAB>system<TAB>predicted<TAB>confidence<TAB>genre=score;...
// with confidence and scores at 6 decimals, scores sorted by genre name.
void write_results_tsv(const std::filesystem::path& path,
                       const std::vector<ClassificationResult>& results);
std::vector<ClassificationResult> read_results_tsv(
    const std::filesystem::path& path);

// Model set files: JSON {genres:[{name, model}]}.
void save_gmm_set(const std::filesystem::path& path, const GmmModelSet& set);
GmmModelSet load_gmm_set(const std::filesystem::path& path);
void save_hmm_set(const std::filesystem::path& path, const HmmModelSet& set);
HmmModelSet load_hmm_set(const std::filesystem::path& path);

}  // namespace bgt

#endif  // BGT_PIPELINE_HPP
