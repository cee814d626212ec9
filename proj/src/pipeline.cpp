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

#include "bgt/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "internal_util.hpp"
#include "model_json.hpp"

namespace bgt {

namespace {

std::string fixed6(double v) {
  char buf[64];
  snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string fixed3(double v) {
  char buf[32];
  snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

// Predicted genre (argmax, lexicographically smallest on ties) and
// confidence from a filled score map.
void finalize_result(ClassificationResult& result) {
  if (result.scores.empty())
    throw ValidationError("classify_show: no genre scores");
  auto best = result.scores.begin();
  for (auto it = std::next(result.scores.begin()); it != result.scores.end();
       ++it)
    if (it->second > best->second) best = it;
  result.predicted = best->first;
  result.confidence = normalize_confidence(result.scores);
}

}  // namespace

std::string to_string(System system) {
  switch (system) {
    case System::kGmm:
      return "gmm";
    case System::kHmm:
      return "hmm";
    case System::kSvm:
      return "svm";
    case System::kCombined:
      return "combined";
  }
  throw ValidationError("to_string: unknown system");
}

System system_from_string(const std::string& name) {
  if (name == "gmm") return System::kGmm;
  if (name == "hmm") return System::kHmm;
  if (name == "svm") return System::kSvm;
  if (name == "combined") return System::kCombined;
  throw ValidationError("unknown system '" + name + "'");
}

double normalize_confidence(const std::map<std::string, double>& scores) {
  if (scores.empty())
    throw ValidationError("normalize_confidence: no scores");
  std::vector<double> sorted;
  sorted.reserve(scores.size());
  for (const auto& [genre, score] : scores) {
    if (!std::isfinite(score))
      throw ValidationError("normalize_confidence: non-finite score for '" +
                            genre + "'");
    sorted.push_back(score);
  }
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const double top = sorted.front();
  const double bottom = sorted.back();
  if (top == bottom) return 0.0;
  return (top - sorted[1]) / (top - bottom);
}

ClassificationResult classify_show_gmm(const GmmModelSet& models,
                                       const std::string& show_id,
                                       const FrameMatrix& frames) {
  ClassificationResult result;
  result.show_id = show_id;
  result.system = System::kGmm;
  for (const auto& [genre, gmm] : models.genres)
    result.scores[genre] = score_show(gmm, frames);
  finalize_result(result);
  return result;
}

ClassificationResult classify_show_hmm(const HmmModelSet& models,
                                       const std::string& show_id,
                                       const FrameMatrix& frames) {
  ClassificationResult result;
  result.show_id = show_id;
  result.system = System::kHmm;
  for (const auto& [genre, hmm] : models.genres)
    result.scores[genre] = forward_log_likelihood(hmm, frames);
  finalize_result(result);
  return result;
}

ClassificationResult classify_show_svm(const SvmModelSet& models,
                                       const DiagonalGmm& ubm,
                                       const std::string& show_id,
                                       const FrameMatrix& frames) {
  ClassificationResult result;
  result.show_id = show_id;
  result.system = System::kSvm;
  const Supervector sv = build_supervector(ubm, frames, models.tau, show_id);
  for (const auto& genre : models.genres)
    result.scores[genre.name] = genre_decision(genre, sv.values);
  finalize_result(result);
  return result;
}

ClassificationResult combine(const ClassificationResult& a,
                             const ClassificationResult& b) {
  if (a.show_id != b.show_id)
    throw ValidationError("combine: results are for different shows ('" +
                          a.show_id + "' vs '" + b.show_id + "')");
  const ClassificationResult& winner = b.confidence > a.confidence ? b : a;
  ClassificationResult out = winner;
  out.system = System::kCombined;
  if (a.predicted == b.predicted)
    out.confidence = std::max(a.confidence, b.confidence);
  return out;
}

EvalReport evaluate(const std::vector<ClassificationResult>& results,
                    const CorpusManifest& manifest) {
  EvalReport report;
  report.genres = manifest.genre_list;
  const int g = static_cast<int>(report.genres.size());
  std::map<std::string, int> genre_index;
  for (int i = 0; i < g; ++i) genre_index[report.genres[i]] = i;

  std::map<std::string, std::string> reference;  // show -> genre
  for (const auto& show : manifest.shows)
    if (show.split == Split::test) reference[show.id] = show.genre;
  if (reference.empty())
    throw ValidationError("evaluate: manifest has no test shows");

  report.confusion.assign(static_cast<std::size_t>(g) * g, 0);
  std::map<std::string, bool> seen;
  for (const auto& result : results) {
    const auto ref = reference.find(result.show_id);
    if (ref == reference.end())
      throw ValidationError("evaluate: result for unknown test show '" +
                            result.show_id + "'");
    if (seen[result.show_id])
      throw ValidationError("evaluate: duplicate result for show '" +
                            result.show_id + "'");
    seen[result.show_id] = true;
    const auto pred = genre_index.find(result.predicted);
    if (pred == genre_index.end())
      throw ValidationError("evaluate: predicted genre '" + result.predicted +
                            "' is not in the manifest genre list");
    const int row = genre_index.at(ref->second);
    ++report.confusion[static_cast<std::size_t>(row) * g + pred->second];
  }
  for (const auto& [show, genre] : reference)
    if (!seen[show])
      throw ValidationError("evaluate: missing result for test show '" + show +
                            "'");

  report.total = static_cast<long>(reference.size());
  for (int i = 0; i < g; ++i)
    report.correct += report.confusion[static_cast<std::size_t>(i) * g + i];
  report.accuracy = static_cast<double>(report.correct) / report.total;

  report.per_genre.resize(g);
  for (int i = 0; i < g; ++i) {
    long row_sum = 0, col_sum = 0;
    for (int j = 0; j < g; ++j) {
      row_sum += report.confusion[static_cast<std::size_t>(i) * g + j];
      col_sum += report.confusion[static_cast<std::size_t>(j) * g + i];
    }
    const long tp = report.confusion[static_cast<std::size_t>(i) * g + i];
    GenreMetrics& m = report.per_genre[i];
    m.precision = col_sum > 0 ? static_cast<double>(tp) / col_sum : 0.0;
    m.recall = row_sum > 0 ? static_cast<double>(tp) / row_sum : 0.0;
    m.f_measure = m.precision + m.recall > 0.0
                      ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                      : 0.0;
  }
  return report;
}

std::string format_eval_report(const EvalReport& report) {
  std::string out = "accuracy " + fixed3(report.accuracy) + "\n";
  out += "shows " + std::to_string(report.total) + " correct " +
         std::to_string(report.correct) + "\n";
  for (std::size_t i = 0; i < report.genres.size(); ++i) {
    const GenreMetrics& m = report.per_genre[i];
    out += "genre " + report.genres[i] + " precision " + fixed3(m.precision) +
           " recall " + fixed3(m.recall) + " f " + fixed3(m.f_measure) + "\n";
  }
  out += "confusion (rows reference, columns predicted)\n";
  const int g = static_cast<int>(report.genres.size());
  for (int i = 0; i < g; ++i) {
    out += report.genres[i];
    for (int j = 0; j < g; ++j)
      out += " " +
             std::to_string(report.confusion[static_cast<std::size_t>(i) * g + j]);
    out += "\n";
  }
  return out;
}

void write_results_tsv(const std::filesystem::path& path,
                       const std::vector<ClassificationResult>& results) {
  std::string out;
  for (const auto& result : results) {
    out += result.show_id + "\t" + to_string(result.system) + "\t" +
           result.predicted + "\t" + fixed6(result.confidence) + "\t";
    bool first = true;
    for (const auto& [genre, score] : result.scores) {
      if (!first) out += ";";
      first = false;
      out += genre + "=" + fixed6(score);
    }
    out += "\n";
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open " + path.string() + " for writing");
  file << out;
  if (!file) throw IoError("write failed for " + path.string());
}

std::vector<ClassificationResult> read_results_tsv(
    const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open " + path.string());
  std::vector<ClassificationResult> results;
  std::string line;
  int line_no = 0;
  while (std::getline(file, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto where = [&] {
      return path.string() + ":" + std::to_string(line_no) + ": ";
    };
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 5)
      throw FormatError(where() + "expected 5 tab-separated fields, found " +
                        std::to_string(fields.size()));
    ClassificationResult result;
    result.show_id = fields[0];
    result.system = system_from_string(fields[1]);
    result.predicted = fields[2];
    if (!internal::parse_double(fields[3], result.confidence))
      throw FormatError(where() + "bad confidence '" + fields[3] + "'");
    std::stringstream scores(fields[4]);
    std::string entry;
    while (std::getline(scores, entry, ';')) {
      const std::size_t eq = entry.find('=');
      if (eq == std::string::npos)
        throw FormatError(where() + "bad score entry '" + entry + "'");
      double value = 0.0;
      if (!internal::parse_double(entry.substr(eq + 1), value))
        throw FormatError(where() + "bad score entry '" + entry + "'");
      result.scores[entry.substr(0, eq)] = value;
    }
    if (result.scores.find(result.predicted) == result.scores.end())
      throw FormatError(where() + "predicted genre '" + result.predicted +
                        "' is missing from the score list");
    results.push_back(std::move(result));
  }
  return results;
}

void save_gmm_set(const std::filesystem::path& path, const GmmModelSet& set) {
  nlohmann::json genres = nlohmann::json::array();
  for (const auto& [name, gmm] : set.genres) {
    nlohmann::json entry;
    entry["name"] = name;
    entry["model"] = internal::gmm_to_json(gmm);
    genres.push_back(std::move(entry));
  }
  nlohmann::json doc;
  doc["genres"] = std::move(genres);
  internal::save_json_file(path, doc);
}

GmmModelSet load_gmm_set(const std::filesystem::path& path) {
  const nlohmann::json doc = internal::load_json_file(path);
  GmmModelSet set;
  try {
    for (const auto& entry : doc.at("genres"))
      set.genres.emplace_back(entry.at("name").get<std::string>(),
                              internal::gmm_from_json(entry.at("model")));
  } catch (const nlohmann::json::exception& err) {
    throw FormatError(path.string() + ": " + err.what());
  }
  return set;
}

void save_hmm_set(const std::filesystem::path& path, const HmmModelSet& set) {
  nlohmann::json genres = nlohmann::json::array();
  for (const auto& [name, hmm] : set.genres) {
    nlohmann::json entry;
    entry["name"] = name;
    entry["model"] = internal::hmm_to_json(hmm);
    genres.push_back(std::move(entry));
  }
  nlohmann::json doc;
  doc["genres"] = std::move(genres);
  internal::save_json_file(path, doc);
}

HmmModelSet load_hmm_set(const std::filesystem::path& path) {
  const nlohmann::json doc = internal::load_json_file(path);
  HmmModelSet set;
  try {
    for (const auto& entry : doc.at("genres"))
      set.genres.emplace_back(entry.at("name").get<std::string>(),
                              internal::hmm_from_json(entry.at("model")));
  } catch (const nlohmann::json::exception& err) {
    throw FormatError(path.string() + ": " + err.what());
  }
  return set;
}

}  // namespace bgt
