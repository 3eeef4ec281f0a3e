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
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "podforge/codec.hpp"
#include "podforge/config.hpp"
#include "podforge/stages.hpp"

namespace podforge {

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Strict RFC 4648 alphabet with padding; anything else is InvalidArgument.
std::vector<std::uint8_t> base64_decode(std::string_view text);

/// Synthesis over HTTP. Model and codec are loaded once and shared read-only
/// across request handlers; every request gets its own synthesis call.
class SynthesisService {
 public:
  struct Response {
    int status = 200;
    std::string body;
  };

  explicit SynthesisService(AppConfig cfg);
  ~SynthesisService();
  SynthesisService(const SynthesisService&) = delete;
  SynthesisService& operator=(const SynthesisService&) = delete;

  /// Must be called before the server starts.
  void load(const std::filesystem::path& model, const std::filesystem::path& codec);
  void set_artifacts(ModelBundle bundle, Codebook codec);

  bool model_loaded() const { return model_ != nullptr; }
  bool codec_loaded() const { return codec_.has_value(); }

  // Transport-free handlers.
  Response synthesize(std::string_view body) const;
  Response health() const;

  /// Binds to host:port (port 0 picks a free one); returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop(); returns false if the listener failed.
  bool run();
  void stop();

 private:
  AppConfig cfg_;
  std::optional<ModelBundle> bundle_;
  std::unique_ptr<SequenceModel> model_;
  std::optional<Codebook> codec_;
  struct Server;
  std::unique_ptr<Server> server_;
};

/// Splits "host:port"; a missing port is InvalidArgument.
std::pair<std::string, int> parse_bind(const std::string& bind);

}  // namespace podforge
