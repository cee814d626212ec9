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

#ifndef BGT_BGTRACK_HPP_
#define BGT_BGTRACK_HPP_

#include <span>
#include <string>
#include <vector>

#include "bgt/types.hpp"

namespace bgt {

// Per-window occupancy of each background: rows[m][t] is the fraction of
// frames in window m that were labeled background t. Rows sum to 1 and,
// when `window` is known, every entry is a multiple of 1/window.
class BackgroundTrack {
 public:
  // `window` is the number of frames averaged per row (P). Pass window = 0
  // for a track reconstructed from a feature file, where P is no longer
  // known; the multiple-of-1/P invariant is then not checked.
  BackgroundTrack(int num_backgrounds, int window, std::vector<double> rows);

  int num_backgrounds() const { return num_backgrounds_; }
  int window() const { return window_; }
  int num_windows() const {
    return static_cast<int>(rows_.size()) / num_backgrounds_;
  }
  std::span<const double> row(int m) const {
    return {rows_.data() + static_cast<std::size_t>(m) * num_backgrounds_,
            static_cast<std::size_t>(num_backgrounds_)};
  }
  const std::vector<double>& rows() const { return rows_; }

 private:
  int num_backgrounds_;
  int window_;
  std::vector<double> rows_;
};

// 1 if frame n carries label t, else 0.
int indicator(const LabelSequence& x, int t, int n);

// Block-averages the indicator functions over non-overlapping windows of
// `window` frames. A trailing partial window is discarded, so the result
// has floor(N / window) rows. Windows are computed in parallel.
BackgroundTrack extract_track(const LabelSequence& x, int window);

// Repackages a track as a feature matrix (dims = T, or 3T with first and
// second derivatives appended). The output frame period is
// window * input_frame_period_ms.
FrameMatrix track_to_features(const BackgroundTrack& v, bool with_deltas,
                              double input_frame_period_ms);

// Reads a track back out of a feature matrix produced by track_to_features
// without deltas. The window is recorded as unknown (0).
BackgroundTrack track_from_features(const FrameMatrix& frames);

// Renders windows [start, start + count) as one stacked bar per window.
// Output is deterministic: identical input gives byte-identical SVG.
std::string render_track_svg(const BackgroundTrack& v, int start, int count);

}  // namespace bgt

#endif  // BGT_BGTRACK_HPP_
