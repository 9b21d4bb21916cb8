// Copyright 2026 The latentfuzz Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Raw little-endian float32 blobs and small JSON helpers shared by the
// artifact readers and writers.

#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

namespace latentfuzz::io {

std::vector<float> read_f32_blob(const std::filesystem::path& path, std::size_t expected_bytes);
void write_f32_blob(const std::filesystem::path& path, std::span<const float> values);

nlohmann::json read_json(const std::filesystem::path& path);
// Writes `doc.dump(2)` plus a trailing newline.
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace latentfuzz::io
