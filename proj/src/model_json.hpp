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
//
// Internal JSON conversions shared by the model file readers/writers.

#ifndef BGT_MODEL_JSON_HPP
#define BGT_MODEL_JSON_HPP

#include <filesystem>
#include <string>

#include <json.hpp>

#include "bgt/errors.hpp"
#include "bgt/gmm.hpp"
#include "bgt/hmm.hpp"

namespace bgt::internal {

nlohmann::json gmm_to_json(const DiagonalGmm& gmm);
DiagonalGmm gmm_from_json(const nlohmann::json& doc);

nlohmann::json hmm_to_json(const ErgodicHmm& h);
ErgodicHmm hmm_from_json(const nlohmann::json& doc);

nlohmann::json load_json_file(const std::filesystem::path& path);
void save_json_file(const std::filesystem::path& path,
                    const nlohmann::json& doc);

}  // namespace bgt::internal

#endif  // BGT_MODEL_JSON_HPP
