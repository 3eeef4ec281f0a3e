// Copyright 2026 The PodForge Authors
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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "podforge/protocol.hpp"

namespace podforge {

/// Effective settings. Precedence is command-line flag, then config file,
/// then the defaults below.
struct AppConfig {
  int sample_rate = 16000;
  double chunk_s = 60.0;
  double min_segment_s = 5.0;
  double max_segment_s = 60.0;
  double mos_threshold_pipeline = 3.8;
  double mos_threshold_decoder = 4.5;
  std::size_t codebook_size = 1024;
  double token_rate = 25.0;
  std::size_t ngram_order = 3;
  double backoff_alpha = 0.4;
  std::size_t workers = 1;  // replaced by the CPU count in defaults()
  std::size_t generation_cap_tokens = 1500;
  std::string http_bind = "127.0.0.1:8080";
  std::size_t http_threads = 8;
  std::string backend;  // empty: built-in n-gram
  std::size_t backend_timeout_ms = 30000;
  std::uint64_t seed = 0;
  double temperature = 1.0;
  std::string sft_template{kDefaultSftTemplate};
  double speaker_max_distance = 0.35;
  std::size_t kmeans_iterations = 50;
  std::string scorer_command;       // empty: built-in SNR proxy
  std::string transcriber_command;  // empty: lookup from truth file
  std::string truth_path;

  static AppConfig defaults();

  /// Sets one key from its text form; unknown keys are InvalidArgument.
  void set(std::string_view key, std::string_view value);
  /// key=value lines in a fixed order. Parsing the result reproduces *this.
  std::string serialize() const;
  static AppConfig parse(std::string_view text, AppConfig base = defaults());
  static AppConfig load(const std::filesystem::path& path, AppConfig base = defaults());
  void validate() const;
  /// FNV-1a over serialize(), hex.
  std::string digest() const;

  static const std::vector<std::string>& keys();

  friend bool operator==(const AppConfig&, const AppConfig&) = default;
};

/// Loads `explicit_path` if given, else $PODFORGE_CONFIG if set, else
/// defaults; then applies `overrides` (key, value) pairs and validates.
AppConfig resolve_config(const std::optional<std::filesystem::path>& explicit_path,
                         const std::vector<std::pair<std::string, std::string>>& overrides = {});

}  // namespace podforge
