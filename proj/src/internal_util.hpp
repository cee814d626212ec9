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

#ifndef BGT_INTERNAL_UTIL_HPP
#define BGT_INTERNAL_UTIL_HPP

#include <charconv>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

namespace bgt::internal {

// Shortest decimal representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

// Parses one double from a token; returns false on failure or trailing junk.
inline bool parse_double(std::string_view token, double& out) {
  const char* begin = token.data();
  const char* end = begin + token.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end;
}

inline bool parse_int(std::string_view token, int& out) {
  const char* begin = token.data();
  const char* end = begin + token.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end;
}

// Fixed chunking for parallel reductions. The chunk count is independent of
// the thread count and partial results are merged in chunk order, so reduced
// values are bit-identical for any schedule.
constexpr int kReductionChunks = 64;

struct ChunkRange {
  int begin;
  int end;
};

inline std::vector<ChunkRange> reduction_chunks(int n,
                                                int chunks = kReductionChunks) {
  std::vector<ChunkRange> out;
  if (n <= 0) return out;
  const int len = (n + chunks - 1) / chunks;
  for (int begin = 0; begin < n; begin += len)
    out.push_back({begin, std::min(begin + len, n)});
  return out;
}

}  // namespace bgt::internal

#endif  // BGT_INTERNAL_UTIL_HPP
