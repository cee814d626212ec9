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

#ifndef BGT_ERRORS_HPP
#define BGT_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace bgt {

// Base class of all toolkit errors. The CLI maps any Error to exit code 2.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed file contents: bad header, wrong row length, unparsable number.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Violated invariant or contract: bad dimensions, empty input, out-of-range
// argument, duplicate id, unknown genre.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Ill-conditioned or singular statistics encountered during estimation.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Filesystem failure: unreadable input, unwritable output.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace bgt

#endif  // BGT_ERRORS_HPP
