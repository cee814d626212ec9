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

#ifndef BGT_REFERENCE_HPP
#define BGT_REFERENCE_HPP

#include <vector>

#include "bgt/bgtrack.hpp"
#include "bgt/gmm.hpp"
#include "bgt/transforms.hpp"
#include "bgt/types.hpp"

// Single-threaded implementations of the parallel kernels. Reductions
// follow the same fixed chunk grouping the parallel versions use, so the
// two produce bit-identical results at any thread count. They exist to pin
// down the parallel versions in tests and benchmarks, not for production
// use.
namespace bgt::serial {

double score_show(const DiagonalGmm& gmm, const FrameMatrix& frames);

GmmStats accumulate_em_stats(const DiagonalGmm& gmm, const FrameMatrix& frames);

std::vector<double> bank_emission_matrix(const BackgroundBank& bank,
                                         const FrameMatrix& frames);

BackgroundTrack extract_track(const LabelSequence& x, int window);

}  // namespace bgt::serial

#endif  // BGT_REFERENCE_HPP
