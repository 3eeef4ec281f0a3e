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

#include "podforge/service.hpp"

#include <openssl/evp.h>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "podforge/error.hpp"
#include "podforge/eval.hpp"

namespace podforge {
namespace {

using json = nlohmann::json;

SynthesisService::Response error_response(int status, std::string_view code, std::string_view msg) {
  nlohmann::ordered_json j;
  j["error"] = code;
  j["message"] = msg;
  return {status, j.dump()};
}

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kEmptyText:
      return 422;
    case ErrorCode::kBackendUnreachable:
    case ErrorCode::kTimeout:
      return 503;
    case ErrorCode::kInvalidBackendOutput:
      return 502;
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kPrecondition:
    case ErrorCode::kMalformedContainer:
    case ErrorCode::kUnsupportedEncoding:
    case ErrorCode::kUnsupported:
    case ErrorCode::kTooShort:
      return 400;
    default:
      return 500;
  }
}

}  // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw Error(ErrorCode::kInvalidArgument, "base64 length not a multiple of 4");
  std::size_t pad = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    const bool alpha = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
                       c == '+' || c == '/';
    if (c == '=' && i + 2 >= text.size()) {
      ++pad;
    } else if (!alpha || pad > 0) {
      throw Error(ErrorCode::kInvalidArgument, "invalid base64 character");
    }
  }
  std::vector<std::uint8_t> out(3 * text.size() / 4 + 1);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw Error(ErrorCode::kInvalidArgument, "invalid base64");
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

std::pair<std::string, int> parse_bind(const std::string& bind) {
  const auto colon = bind.rfind(':');
  if (colon == std::string::npos || colon == 0) {
    throw Error(ErrorCode::kInvalidArgument, "bind address must be host:port");
  }
  int port = -1;
  try {
    std::size_t used = 0;
    port = std::stoi(bind.substr(colon + 1), &used);
    if (used != bind.size() - colon - 1) port = -1;
  } catch (const std::exception&) {
    port = -1;
  }
  if (port < 0 || port > 65535) throw Error(ErrorCode::kInvalidArgument, "invalid port in " + bind);
  return {bind.substr(0, colon), port};
}

struct SynthesisService::Server {
  httplib::Server http;
};

SynthesisService::SynthesisService(AppConfig cfg) : cfg_(std::move(cfg)) {}

SynthesisService::~SynthesisService() { stop(); }

void SynthesisService::load(const std::filesystem::path& model, const std::filesystem::path& codec) {
  set_artifacts(ModelBundle::load(model), Codebook::load(codec));
}

void SynthesisService::set_artifacts(ModelBundle bundle, Codebook codec) {
  bundle_ = std::move(bundle);
  model_ = make_model(*bundle_, cfg_);
  codec_ = std::move(codec);
}

SynthesisService::Response SynthesisService::health() const {
  nlohmann::ordered_json j;
  j["status"] = "ok";
  j["model_loaded"] = model_loaded();
  j["codec_loaded"] = codec_loaded();
  return {200, j.dump()};
}

SynthesisService::Response SynthesisService::synthesize(std::string_view body) const {
  json req;
  try {
    req = json::parse(body);
  } catch (const json::exception&) {
    return error_response(400, "InvalidArgument", "body is not JSON");
  }
  if (!req.is_object()) return error_response(400, "InvalidArgument", "body must be an object");
  auto string_field = [&](const char* key, bool required) -> std::optional<std::string> {
    if (!req.contains(key)) {
      if (required) throw Error(ErrorCode::kInvalidArgument, std::string("missing ") + key);
      return std::nullopt;
    }
    if (!req[key].is_string()) throw Error(ErrorCode::kInvalidArgument, std::string(key) + " must be a string");
    return req[key].get<std::string>();
  };

  SynthesisRequest r;
  try {
    r.target_text = *string_field("text", true);
    const std::string mode = *string_field("mode", true);
    if (mode == "sft") r.mode = SynthesisMode::kSft;
    else if (mode == "zero_shot") r.mode = SynthesisMode::kZeroShot;
    else throw Error(ErrorCode::kInvalidArgument, "mode must be sft or zero_shot");
    const auto ref_text = string_field("ref_text", false);
    const auto ref_audio = string_field("ref_audio_b64", false);
    r.seed = cfg_.seed;
    if (req.contains("seed")) {
      if (!req["seed"].is_number_integer() || req["seed"].get<std::int64_t>() < 0) {
        throw Error(ErrorCode::kInvalidArgument, "seed must be a non-negative integer");
      }
      r.seed = req["seed"].get<std::uint64_t>();
    }
    if (r.mode == SynthesisMode::kZeroShot) {
      if (!ref_audio) throw Error(ErrorCode::kInvalidArgument, "zero_shot requires ref_audio_b64");
      if (!ref_text) throw Error(ErrorCode::kInvalidArgument, "zero_shot requires ref_text");
      r.ref_text = *ref_text;
      r.ref_audio = decode_wav(base64_decode(*ref_audio));
    }
  } catch (const Error& e) {
    return error_response(400, error_code_name(e.code()), e.what());
  }

  if (!model_loaded() || !codec_loaded()) {
    return error_response(503, "NotReady", "model or codec not loaded");
  }
  r.max_seconds_per_sentence = static_cast<double>(cfg_.generation_cap_tokens) / kTokenRate;
  try {
    const auto result = podforge::synthesize(r, *model_, bundle_->vocab, *codec_,
                                             synthesis_options(cfg_));
    const auto speed = speed_ratio(result.t_inf, result.t_syn);
    nlohmann::ordered_json j;
    j["audio_b64"] = base64_encode(encode_wav(result.audio));
    j["t_inf"] = speed.t_inf;
    j["t_syn"] = speed.t_syn;
    j["r"] = speed.r;
    j["truncated"] = result.truncated;
    if (!result.warnings.empty()) j["warnings"] = result.warnings;
    return {200, j.dump()};
  } catch (const Error& e) {
    return error_response(status_for(e.code()), error_code_name(e.code()), e.what());
  } catch (const std::exception& e) {
    return error_response(500, "Internal", e.what());
  }
}

int SynthesisService::bind(const std::string& host, int port) {
  if (!server_) {
    server_ = std::make_unique<Server>();
    auto& http = server_->http;
    const std::size_t threads = cfg_.http_threads;
    http.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
    http.Post("/synthesize", [this](const httplib::Request& req, httplib::Response& res) {
      const auto out = synthesize(req.body);
      res.status = out.status;
      res.set_content(out.body, "application/json");
    });
    http.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
      const auto out = health();
      res.status = out.status;
      res.set_content(out.body, "application/json");
    });
    auto not_allowed = [](const httplib::Request&, httplib::Response& res) {
      res.status = 405;
      res.set_header("Allow", "GET");
      res.set_content(error_response(405, "MethodNotAllowed", "use GET /health").body,
                      "application/json");
    };
    http.Post("/health", not_allowed);
    http.Put("/health", not_allowed);
    http.Delete("/health", not_allowed);
    http.Patch("/health", not_allowed);
    http.Get("/synthesize", [](const httplib::Request&, httplib::Response& res) {
      res.status = 405;
      res.set_header("Allow", "POST");
      res.set_content(error_response(405, "MethodNotAllowed", "use POST /synthesize").body,
                      "application/json");
    });
  }
  const int bound = port == 0 ? server_->http.bind_to_any_port(host)
                              : (server_->http.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error(ErrorCode::kIoFailure, "cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

bool SynthesisService::run() {
  if (!server_) throw Error(ErrorCode::kPrecondition, "bind before run");
  return server_->http.listen_after_bind();
}

void SynthesisService::stop() {
  if (server_) server_->http.stop();
}

}  // namespace podforge
