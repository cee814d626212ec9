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

#include "bgt/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "bgt/rng.hpp"
#include "internal_util.hpp"

namespace bgt {

using internal::format_double;
using internal::parse_double;
using internal::parse_int;
using nlohmann::json;

std::string to_string(Split split) {
  return split == Split::train ? "train" : "test";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw ValidationError("unknown split \"" + s + "\" (expected train|test)");
}

const std::vector<std::string>& default_genres() {
  static const std::vector<std::string> genres = {
      "Advice", "Children's", "Comedy", "Competition",
      "Documentary", "Drama", "Events", "News"};
  return genres;
}

void CorpusManifest::validate() const {
  std::set<std::string> seen;
  for (const auto& show : shows) {
    if (show.id.empty()) throw ValidationError("manifest: empty show id");
    if (!seen.insert(show.id).second)
      throw ValidationError("manifest: duplicate show id \"" + show.id + "\"");
    if (std::find(genre_list.begin(), genre_list.end(), show.genre) ==
        genre_list.end())
      throw ValidationError("manifest: unknown genre \"" + show.genre +
                            "\" for show \"" + show.id + "\"");
  }
}

std::vector<const ShowRecord*> CorpusManifest::shows_in_split(
    Split split) const {
  std::vector<const ShowRecord*> out;
  for (const auto& show : shows)
    if (show.split == split) out.push_back(&show);
  return out;
}

namespace {

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file(const std::filesystem::path& path,
                     const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

int line_of_offset(const std::string& text, std::size_t offset) {
  int line = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

json parse_json(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& err) {
    throw FormatError(path.string() + ":" +
                      std::to_string(line_of_offset(text, err.byte)) + ": " +
                      err.what());
  }
}

}  // namespace

CorpusManifest load_manifest(const std::filesystem::path& path) {
  return load_manifest(path, default_genres());
}

CorpusManifest load_manifest(const std::filesystem::path& path,
                             const std::vector<std::string>& genres) {
  const json doc = parse_json(path);
  if (!doc.is_array())
    throw FormatError(path.string() + ": manifest must be a JSON array");

  const std::filesystem::path dir = path.parent_path();
  auto resolve = [&dir](const std::string& p) {
    std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : dir / fp;
  };

  CorpusManifest manifest;
  manifest.genre_list = genres;
  for (const auto& entry : doc) {
    try {
      ShowRecord show;
      show.id = entry.at("id").get<std::string>();
      show.genre = entry.at("genre").get<std::string>();
      show.split = split_from_string(entry.at("split").get<std::string>());
      show.feat_path = resolve(entry.at("feat_path").get<std::string>());
      if (entry.contains("lab_path") && !entry["lab_path"].is_null())
        show.lab_path = resolve(entry["lab_path"].get<std::string>());
      manifest.shows.push_back(std::move(show));
    } catch (const json::exception& err) {
      throw FormatError(path.string() + ": bad show record: " + err.what());
    }
  }
  manifest.validate();
  return manifest;
}

void save_manifest(const std::filesystem::path& path,
                   const CorpusManifest& manifest) {
  manifest.validate();
  const std::filesystem::path dir = path.parent_path();
  auto relativize = [&dir](const std::filesystem::path& p) {
    const std::filesystem::path rel = p.lexically_proximate(dir);
    // Keep the path absolute unless it sits below the manifest's directory.
    if (!rel.empty() && rel.begin()->string() != "..") return rel.generic_string();
    return p.generic_string();
  };

  json doc = json::array();
  for (const auto& show : manifest.shows) {
    json entry;
    entry["id"] = show.id;
    entry["genre"] = show.genre;
    entry["split"] = to_string(show.split);
    entry["feat_path"] = relativize(show.feat_path);
    if (show.lab_path) entry["lab_path"] = relativize(*show.lab_path);
    doc.push_back(std::move(entry));
  }
  write_text_file(path, doc.dump(2) + "\n");
}

FrameMatrix read_feature_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line))
    throw FormatError(path.string() + ": missing FEAT header");
  std::istringstream header(line);
  std::string magic, dims_tok, frames_tok, period_tok;
  header >> magic >> dims_tok >> frames_tok >> period_tok;
  int dims = 0;
  int frames = 0;
  double period = 0.0;
  if (magic != "FEAT" || !parse_int(dims_tok, dims) ||
      !parse_int(frames_tok, frames) || !parse_double(period_tok, period) ||
      dims <= 0 || frames < 0 || !(period > 0.0))
    throw FormatError(path.string() + ":1: bad FEAT header \"" + line + "\"");

  FrameMatrix out(dims, period);
  out.reserve_frames(frames);
  std::vector<double> row(dims);
  for (int n = 0; n < frames; ++n) {
    if (!std::getline(in, line))
      throw FormatError(path.string() + ": expected " +
                        std::to_string(frames) + " rows, found " +
                        std::to_string(n));
    const char* ptr = line.c_str();
    const char* end = ptr + line.size();
    for (int d = 0; d < dims; ++d) {
      while (ptr < end && *ptr == ' ') ++ptr;
      auto [next, ec] = std::from_chars(ptr, end, row[d]);
      if (ec != std::errc() || next == ptr)
        throw FormatError(path.string() + ":" + std::to_string(n + 2) +
                          ": row has fewer than " + std::to_string(dims) +
                          " values");
      if (!std::isfinite(row[d]))
        throw FormatError(path.string() + ":" + std::to_string(n + 2) +
                          ": non-finite value");
      ptr = next;
    }
    while (ptr < end && *ptr == ' ') ++ptr;
    if (ptr != end)
      throw FormatError(path.string() + ":" + std::to_string(n + 2) +
                        ": row has more than " + std::to_string(dims) +
                        " values");
    out.append(row);
  }
  return out;
}

void write_feature_file(const std::filesystem::path& path,
                        const FrameMatrix& frames) {
  std::string text = "FEAT " + std::to_string(frames.dims()) + " " +
                     std::to_string(frames.num_frames()) + " " +
                     format_double(frames.frame_period_ms()) + "\n";
  for (int n = 0; n < frames.num_frames(); ++n) {
    const auto row = frames.frame(n);
    for (int d = 0; d < frames.dims(); ++d) {
      if (d > 0) text += ' ';
      if (!std::isfinite(row[d]))
        throw ValidationError("write_feature_file: non-finite value at frame " +
                              std::to_string(n));
      text += format_double(row[d]);
    }
    text += '\n';
  }
  write_text_file(path, text);
}

LabelSequence read_label_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line))
    throw FormatError(path.string() + ": missing LAB header");
  std::istringstream header(line);
  std::string magic, t_tok, frames_tok;
  header >> magic >> t_tok >> frames_tok;
  int num_backgrounds = 0;
  int frames = 0;
  if (magic != "LAB" || !parse_int(t_tok, num_backgrounds) ||
      !parse_int(frames_tok, frames) || num_backgrounds <= 0 || frames < 0)
    throw FormatError(path.string() + ":1: bad LAB header \"" + line + "\"");

  LabelSequence out;
  out.num_backgrounds = num_backgrounds;
  out.labels.reserve(frames);
  if (frames > 0) {
    if (!std::getline(in, line))
      throw FormatError(path.string() + ": missing label line");
    const char* ptr = line.c_str();
    const char* end = ptr + line.size();
    for (int n = 0; n < frames; ++n) {
      while (ptr < end && *ptr == ' ') ++ptr;
      int lab = 0;
      auto [next, ec] = std::from_chars(ptr, end, lab);
      if (ec != std::errc() || next == ptr)
        throw FormatError(path.string() + ":2: expected " +
                          std::to_string(frames) + " labels, found " +
                          std::to_string(n));
      ptr = next;
      if (lab < 0 || lab >= num_backgrounds)
        throw FormatError(path.string() + ":2: label " + std::to_string(lab) +
                          " outside [0, " + std::to_string(num_backgrounds) +
                          ")");
      out.labels.push_back(lab);
    }
    while (ptr < end && *ptr == ' ') ++ptr;
    if (ptr != end)
      throw FormatError(path.string() + ":2: more than " +
                        std::to_string(frames) + " labels");
  }
  out.validate();
  return out;
}

void write_label_file(const std::filesystem::path& path,
                      const LabelSequence& labels) {
  labels.validate();
  std::string text = "LAB " + std::to_string(labels.num_backgrounds) + " " +
                     std::to_string(labels.num_frames()) + "\n";
  for (std::size_t n = 0; n < labels.labels.size(); ++n) {
    if (n > 0) text += ' ';
    text += std::to_string(labels.labels[n]);
  }
  if (!labels.labels.empty()) text += '\n';
  write_text_file(path, text);
}

namespace {

// One regression-delta pass over a row-major block; edges repeat frames.
void delta_pass(const double* src, double* dst, int num_frames, int dims,
                int window) {
  double norm = 0.0;
  for (int theta = 1; theta <= window; ++theta) norm += theta * theta;
  norm *= 2.0;
  for (int n = 0; n < num_frames; ++n) {
    for (int d = 0; d < dims; ++d) {
      double acc = 0.0;
      for (int theta = 1; theta <= window; ++theta) {
        const int ahead = std::min(n + theta, num_frames - 1);
        const int behind = std::max(n - theta, 0);
        acc += theta * (src[static_cast<std::size_t>(ahead) * dims + d] -
                        src[static_cast<std::size_t>(behind) * dims + d]);
      }
      dst[static_cast<std::size_t>(n) * dims + d] = acc / norm;
    }
  }
}

}  // namespace

FrameMatrix compute_deltas(const FrameMatrix& frames, int window) {
  if (frames.num_frames() == 0)
    throw ValidationError("compute_deltas: empty input");
  if (window < 1) throw ValidationError("compute_deltas: window must be >= 1");

  const int n = frames.num_frames();
  const int d = frames.dims();
  std::vector<double> first(static_cast<std::size_t>(n) * d);
  std::vector<double> second(static_cast<std::size_t>(n) * d);
  delta_pass(frames.data().data(), first.data(), n, d, window);
  delta_pass(first.data(), second.data(), n, d, window);

  FrameMatrix out(3 * d, frames.frame_period_ms());
  out.reserve_frames(n);
  std::vector<double> row(3 * d);
  for (int i = 0; i < n; ++i) {
    const auto statics = frames.frame(i);
    std::copy(statics.begin(), statics.end(), row.begin());
    std::copy_n(first.begin() + static_cast<std::size_t>(i) * d, d,
                row.begin() + d);
    std::copy_n(second.begin() + static_cast<std::size_t>(i) * d, d,
                row.begin() + 2 * d);
    out.append(row);
  }
  return out;
}

void SynthConfig::validate() const {
  if (dims <= 0) throw ValidationError("synth config: dims must be positive");
  if (backgrounds.empty())
    throw ValidationError("synth config: at least one background required");
  if (genres.empty())
    throw ValidationError("synth config: at least one genre required");
  const int t = num_backgrounds();
  for (std::size_t b = 0; b < backgrounds.size(); ++b) {
    const auto& bg = backgrounds[b];
    if (static_cast<int>(bg.mean.size()) != dims ||
        static_cast<int>(bg.var.size()) != dims)
      throw ValidationError("synth config: background " + std::to_string(b) +
                            " has wrong dimension");
    for (double v : bg.var)
      if (!(v > 0.0))
        throw ValidationError("synth config: background " + std::to_string(b) +
                              " has non-positive variance");
  }
  std::set<std::string> names;
  for (const auto& genre : genres) {
    if (!names.insert(genre.name).second)
      throw ValidationError("synth config: duplicate genre \"" + genre.name +
                            "\"");
    if (static_cast<int>(genre.background_initial.size()) != t)
      throw ValidationError("synth config: genre \"" + genre.name +
                            "\" initial distribution has wrong length");
    double initial_sum = 0.0;
    for (double p : genre.background_initial) initial_sum += p;
    if (std::abs(initial_sum - 1.0) > 1e-9)
      throw ValidationError("synth config: genre \"" + genre.name +
                            "\" initial distribution does not sum to 1");
    if (static_cast<int>(genre.background_transition_matrix.size()) != t)
      throw ValidationError("synth config: genre \"" + genre.name +
                            "\" transition matrix has wrong shape");
    for (const auto& transition_row : genre.background_transition_matrix) {
      if (static_cast<int>(transition_row.size()) != t)
        throw ValidationError("synth config: genre \"" + genre.name +
                              "\" transition matrix has wrong shape");
      double row_sum = 0.0;
      for (double p : transition_row) {
        if (p < 0.0)
          throw ValidationError("synth config: genre \"" + genre.name +
                                "\" has negative transition probability");
        row_sum += p;
      }
      if (std::abs(row_sum - 1.0) > 1e-9)
        throw ValidationError("synth config: genre \"" + genre.name +
                              "\" transition row does not sum to 1");
    }
    if (genre.shows_train < 0 || genre.shows_test < 0)
      throw ValidationError("synth config: negative show count");
    if (genre.frames_per_show <= 0)
      throw ValidationError("synth config: frames_per_show must be positive");
  }
  if (!(frame_period_ms > 0.0))
    throw ValidationError("synth config: frame period must be positive");
}

SynthConfig load_synth_config(const std::filesystem::path& path) {
  const json doc = parse_json(path);
  SynthConfig config;
  try {
    config.dims = doc.at("dims").get<int>();
    config.seed = doc.at("seed").get<std::uint64_t>();
    if (doc.contains("frame_period_ms"))
      config.frame_period_ms = doc["frame_period_ms"].get<double>();
    for (const auto& entry : doc.at("backgrounds")) {
      BackgroundSpec bg;
      bg.mean = entry.at("mean").get<std::vector<double>>();
      bg.var = entry.at("var").get<std::vector<double>>();
      config.backgrounds.push_back(std::move(bg));
    }
    for (const auto& entry : doc.at("genres")) {
      GenreSynthSpec genre;
      genre.name = entry.at("name").get<std::string>();
      genre.background_transition_matrix =
          entry.at("background_transition_matrix")
              .get<std::vector<std::vector<double>>>();
      genre.background_initial =
          entry.at("background_initial").get<std::vector<double>>();
      genre.shows_train = entry.at("shows_train").get<int>();
      genre.shows_test = entry.at("shows_test").get<int>();
      genre.frames_per_show = entry.at("frames_per_show").get<int>();
      config.genres.push_back(std::move(genre));
    }
  } catch (const json::exception& err) {
    throw FormatError(path.string() + ": bad synth config: " + err.what());
  }
  config.validate();
  return config;
}

void save_synth_config(const std::filesystem::path& path,
                       const SynthConfig& config) {
  config.validate();
  json doc;
  doc["dims"] = config.dims;
  doc["seed"] = config.seed;
  doc["frame_period_ms"] = config.frame_period_ms;
  doc["backgrounds"] = json::array();
  for (const auto& bg : config.backgrounds)
    doc["backgrounds"].push_back({{"mean", bg.mean}, {"var", bg.var}});
  doc["genres"] = json::array();
  for (const auto& genre : config.genres) {
    doc["genres"].push_back(
        {{"name", genre.name},
         {"background_transition_matrix", genre.background_transition_matrix},
         {"background_initial", genre.background_initial},
         {"shows_train", genre.shows_train},
         {"shows_test", genre.shows_test},
         {"frames_per_show", genre.frames_per_show}});
  }
  write_text_file(path, doc.dump(2) + "\n");
}

SynthShow synthesize_show(const SynthConfig& config, int genre_index,
                          Rng& rng) {
  const auto& genre = config.genres.at(genre_index);
  const int n = genre.frames_per_show;
  const int t = config.num_backgrounds();

  SynthShow show;
  show.labels.num_backgrounds = t;
  show.labels.labels.reserve(n);
  show.frames = FrameMatrix(config.dims, config.frame_period_ms);
  show.frames.reserve_frames(n);

  std::vector<double> row(config.dims);
  int state = rng.categorical(genre.background_initial);
  for (int frame = 0; frame < n; ++frame) {
    if (frame > 0)
      state = rng.categorical(genre.background_transition_matrix[state]);
    show.labels.labels.push_back(state);
    const auto& bg = config.backgrounds[state];
    for (int d = 0; d < config.dims; ++d)
      row[d] = bg.mean[d] + std::sqrt(bg.var[d]) * rng.gaussian();
    show.frames.append(row);
  }
  return show;
}

namespace {

std::string sanitize_id(const std::string& name) {
  std::string out;
  for (char c : name) {
    if (std::isalnum(static_cast<unsigned char>(c)))
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    else if (!out.empty() && out.back() != '_')
      out += '_';
  }
  if (out.empty()) out = "genre";
  return out;
}

}  // namespace

CorpusManifest synthesize_corpus(const SynthConfig& config,
                                 const std::filesystem::path& out_dir) {
  config.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string());

  struct Plan {
    int genre_index;
    Split split;
    std::string id;
  };
  std::vector<Plan> plans;
  for (std::size_t g = 0; g < config.genres.size(); ++g) {
    const auto& genre = config.genres[g];
    const std::string stem = sanitize_id(genre.name);
    for (int i = 0; i < genre.shows_train; ++i) {
      char suffix[32];
      std::snprintf(suffix, sizeof(suffix), "_tr%03d", i);
      plans.push_back({static_cast<int>(g), Split::train, stem + suffix});
    }
    for (int i = 0; i < genre.shows_test; ++i) {
      char suffix[32];
      std::snprintf(suffix, sizeof(suffix), "_te%03d", i);
      plans.push_back({static_cast<int>(g), Split::test, stem + suffix});
    }
  }

  CorpusManifest manifest;
  for (const auto& genre : config.genres)
    manifest.genre_list.push_back(genre.name);
  manifest.shows.resize(plans.size());

  std::vector<std::string> failures(plans.size());
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < static_cast<int>(plans.size()); ++i) {
    const auto& plan = plans[i];
    try {
      Rng rng = Rng::stream(config.seed, static_cast<std::uint64_t>(i));
      const SynthShow show = synthesize_show(config, plan.genre_index, rng);
      const auto feat_path = out_dir / (plan.id + ".feat");
      const auto lab_path = out_dir / (plan.id + ".lab");
      write_feature_file(feat_path, show.frames);
      write_label_file(lab_path, show.labels);
      ShowRecord record;
      record.id = plan.id;
      record.genre = config.genres[plan.genre_index].name;
      record.split = plan.split;
      record.feat_path = feat_path;
      record.lab_path = lab_path;
      manifest.shows[i] = std::move(record);
    } catch (const std::exception& err) {
      failures[i] = err.what();
    }
  }
  for (const auto& failure : failures)
    if (!failure.empty()) throw IoError("synthesize_corpus: " + failure);

  save_manifest(out_dir / "manifest.json", manifest);
  return manifest;
}

}  // namespace bgt
