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

#include "bgt/bgtrack.hpp"

#include <cmath>
#include <cstdarg>
#include <cstdio>

#include "bgt/corpus.hpp"
#include "bgt/errors.hpp"

namespace bgt {

namespace {

// Muted categorical palette, one slot per background; cycles past seven.
constexpr const char* kPalette[7] = {"#4477aa", "#ee6677", "#228833",
                                     "#ccbb44", "#66ccee", "#aa3377",
                                     "#bbbbbb"};

void append_format(std::string& out, const char* fmt, ...) {
  char buf[256];
  va_list args;
  va_start(args, fmt);
  const int n = vsnprintf(buf, sizeof(buf), fmt, args);
  va_end(args);
  out.append(buf, buf + n);
}

}  // namespace

BackgroundTrack::BackgroundTrack(int num_backgrounds, int window,
                                 std::vector<double> rows)
    : num_backgrounds_(num_backgrounds),
      window_(window),
      rows_(std::move(rows)) {
  if (num_backgrounds_ < 1)
    throw ValidationError("BackgroundTrack: need at least one background");
  if (window_ < 0)
    throw ValidationError("BackgroundTrack: negative window");
  if (rows_.size() % num_backgrounds_ != 0)
    throw ValidationError(
        "BackgroundTrack: row data is not a multiple of the background count");
  const int m = num_windows();
  for (int i = 0; i < m; ++i) {
    double sum = 0.0;
    for (double v : row(i)) {
      if (!(v >= 0.0 && v <= 1.0))
        throw ValidationError("BackgroundTrack: entry outside [0,1] in row " +
                              std::to_string(i));
      if (window_ > 0) {
        const double scaled = v * window_;
        if (std::abs(scaled - std::round(scaled)) > 1e-12 * window_)
          throw ValidationError(
              "BackgroundTrack: entry in row " + std::to_string(i) +
              " is not a multiple of 1/" + std::to_string(window_));
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw ValidationError("BackgroundTrack: row " + std::to_string(i) +
                            " sums to " + std::to_string(sum));
  }
}

int indicator(const LabelSequence& x, int t, int n) {
  if (t < 0 || t >= x.num_backgrounds)
    throw ValidationError("indicator: background index " + std::to_string(t) +
                          " out of range");
  if (n < 0 || n >= x.num_frames())
    throw ValidationError("indicator: frame index " + std::to_string(n) +
                          " out of range");
  return x.labels[n] == t ? 1 : 0;
}

BackgroundTrack extract_track(const LabelSequence& x, int window) {
  if (window < 1) throw ValidationError("extract_track: window must be >= 1");
  x.validate();
  const int t = x.num_backgrounds;
  const int m = x.num_frames() / window;
  std::vector<double> rows(static_cast<std::size_t>(m) * t, 0.0);
  // Count occupancy per window and divide once, so every entry is the
  // correctly rounded count/window.
#pragma omp parallel
  {
    std::vector<int> counts(t);
#pragma omp for schedule(static)
    for (int w = 0; w < m; ++w) {
      std::fill(counts.begin(), counts.end(), 0);
      for (int p = 0; p < window; ++p) ++counts[x.labels[w * window + p]];
      double* out = rows.data() + static_cast<std::size_t>(w) * t;
      for (int bg = 0; bg < t; ++bg)
        out[bg] = static_cast<double>(counts[bg]) / window;
    }
  }
  return BackgroundTrack(t, window, std::move(rows));
}

FrameMatrix track_to_features(const BackgroundTrack& v, bool with_deltas,
                              double input_frame_period_ms) {
  if (v.num_windows() == 0)
    throw ValidationError("track_to_features: empty track");
  if (v.window() < 1)
    throw ValidationError(
        "track_to_features: track has no window size recorded");
  if (!(input_frame_period_ms > 0.0))
    throw ValidationError("track_to_features: frame period must be positive");
  FrameMatrix statics(v.num_backgrounds(),
                      v.window() * input_frame_period_ms, v.rows());
  return with_deltas ? compute_deltas(statics) : statics;
}

BackgroundTrack track_from_features(const FrameMatrix& frames) {
  return BackgroundTrack(frames.dims(), 0, frames.data());
}

std::string render_track_svg(const BackgroundTrack& v, int start, int count) {
  if (start < 0 || count < 1 || start + count > v.num_windows())
    throw ValidationError("render_track_svg: window range [" +
                          std::to_string(start) + ", " +
                          std::to_string(start + count) +
                          ") out of bounds for " +
                          std::to_string(v.num_windows()) + " windows");

  constexpr int kBarWidth = 8;
  constexpr int kPlotHeight = 120;
  constexpr int kMargin = 4;
  const int width = 2 * kMargin + count * kBarWidth;
  const int height = 2 * kMargin + kPlotHeight;

  std::string svg;
  svg.reserve(256 + static_cast<std::size_t>(count) * 96);
  append_format(svg,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" "
                "height=\"%d\" viewBox=\"0 0 %d %d\">\n",
                width, height, width, height);
  append_format(svg, "<rect width=\"%d\" height=\"%d\" fill=\"#ffffff\"/>\n",
                width, height);
  for (int i = 0; i < count; ++i) {
    const auto row = v.row(start + i);
    const int x = kMargin + i * kBarWidth;
    append_format(svg, "<g class=\"bar\">\n");
    double top = static_cast<double>(kMargin + kPlotHeight);
    for (int t = 0; t < v.num_backgrounds(); ++t) {
      if (row[t] == 0.0) continue;
      const double h = row[t] * kPlotHeight;
      top -= h;
      append_format(svg,
                    "<rect x=\"%d\" y=\"%.4f\" width=\"%d\" height=\"%.4f\" "
                    "fill=\"%s\"/>\n",
                    x, top, kBarWidth, h, kPalette[t % 7]);
    }
    append_format(svg, "</g>\n");
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace bgt
