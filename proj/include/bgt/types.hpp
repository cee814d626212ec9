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

#ifndef BGT_TYPES_HPP
#define BGT_TYPES_HPP

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "bgt/errors.hpp"

namespace bgt {

// A show's per-frame feature vectors: N rows of fixed dimension D, stored
// row-major, with the frame period in milliseconds. Rows are finite reals.
class FrameMatrix {
 public:
  FrameMatrix() = default;

  FrameMatrix(int dims, double frame_period_ms)
      : dims_(dims), frame_period_ms_(frame_period_ms) {
    if (dims <= 0) throw ValidationError("FrameMatrix: dims must be positive");
    if (!(frame_period_ms > 0.0))
      throw ValidationError("FrameMatrix: frame period must be positive");
  }

  FrameMatrix(int dims, double frame_period_ms, std::vector<double> data)
      : FrameMatrix(dims, frame_period_ms) {
    if (data.size() % static_cast<std::size_t>(dims) != 0)
      throw ValidationError("FrameMatrix: data size not a multiple of dims");
    data_ = std::move(data);
    for (double v : data_) {
      if (!std::isfinite(v))
        throw ValidationError("FrameMatrix: non-finite entry");
    }
  }

  int dims() const { return dims_; }
  int num_frames() const {
    return dims_ == 0 ? 0 : static_cast<int>(data_.size()) / dims_;
  }
  double frame_period_ms() const { return frame_period_ms_; }
  bool empty() const { return data_.empty(); }

  std::span<const double> frame(int n) const {
    return {data_.data() + static_cast<std::size_t>(n) * dims_,
            static_cast<std::size_t>(dims_)};
  }
  std::span<double> frame(int n) {
    return {data_.data() + static_cast<std::size_t>(n) * dims_,
            static_cast<std::size_t>(dims_)};
  }

  void append(std::span<const double> row) {
    if (static_cast<int>(row.size()) != dims_)
      throw ValidationError("FrameMatrix: row length does not match dims");
    data_.insert(data_.end(), row.begin(), row.end());
  }

  void reserve_frames(int n) {
    data_.reserve(static_cast<std::size_t>(n) * dims_);
  }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

 private:
  int dims_ = 0;
  double frame_period_ms_ = 0.0;
  std::vector<double> data_;
};

// Per-frame background indices x(n), each in [0, num_backgrounds).
struct LabelSequence {
  int num_backgrounds = 0;
  std::vector<int> labels;

  int num_frames() const { return static_cast<int>(labels.size()); }

  void validate() const {
    if (num_backgrounds <= 0)
      throw ValidationError("LabelSequence: num_backgrounds must be positive");
    for (int lab : labels) {
      if (lab < 0 || lab >= num_backgrounds)
        throw ValidationError("LabelSequence: label " + std::to_string(lab) +
                              " outside [0, " +
                              std::to_string(num_backgrounds) + ")");
    }
  }
};

}  // namespace bgt

#endif  // BGT_TYPES_HPP
