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

#include "podforge/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "podforge/error.hpp"
#include "podforge/parallel.hpp"

namespace podforge {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value) {
  throw Error(ErrorCode::kInvalidArgument,
              "invalid value '" + std::string(value) + "' for " + std::string(key));
}

double to_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out)) bad_value(key, v);
  return out;
}

std::uint64_t to_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v);
  return out;
}

// Shortest text that parses back to the same double.
std::string fmt(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

// Templates may contain characters that would break a one-line format.
std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '\\') out += "\\\\";
    else if (c == '\n') out += "\\n";
    else out += c;
  }
  return out;
}

std::string unescape(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size()) {
      ++i;
      out += s[i] == 'n' ? '\n' : s[i];
    } else {
      out += s[i];
    }
  }
  return out;
}

}  // namespace

AppConfig AppConfig::defaults() {
  AppConfig c;
  c.workers = default_workers();
  return c;
}

const std::vector<std::string>& AppConfig::keys() {
  static const std::vector<std::string> k = {
      "sample_rate",        "chunk_s",          "min_segment_s",
      "max_segment_s",      "mos_threshold_pipeline", "mos_threshold_decoder",
      "codebook_size",      "token_rate",       "ngram_order",
      "backoff_alpha",      "workers",          "generation_cap_tokens",
      "http_bind",          "http_threads",     "backend",
      "backend_timeout_ms", "seed",             "temperature",
      "sft_template",       "speaker_max_distance", "kmeans_iterations",
      "scorer_command",     "transcriber_command", "truth_path"};
  return k;
}

void AppConfig::set(std::string_view key, std::string_view raw) {
  const std::string_view v = trim(raw);
  if (key == "sample_rate") sample_rate = static_cast<int>(to_u64(key, v));
  else if (key == "chunk_s") chunk_s = to_double(key, v);
  else if (key == "min_segment_s") min_segment_s = to_double(key, v);
  else if (key == "max_segment_s") max_segment_s = to_double(key, v);
  else if (key == "mos_threshold_pipeline") mos_threshold_pipeline = to_double(key, v);
  else if (key == "mos_threshold_decoder") mos_threshold_decoder = to_double(key, v);
  else if (key == "codebook_size") codebook_size = to_u64(key, v);
  else if (key == "token_rate") token_rate = to_double(key, v);
  else if (key == "ngram_order") ngram_order = to_u64(key, v);
  else if (key == "backoff_alpha") backoff_alpha = to_double(key, v);
  else if (key == "workers") workers = to_u64(key, v);
  else if (key == "generation_cap_tokens") generation_cap_tokens = to_u64(key, v);
  else if (key == "http_bind") http_bind = std::string(v);
  else if (key == "http_threads") http_threads = to_u64(key, v);
  else if (key == "backend") backend = std::string(v);
  else if (key == "backend_timeout_ms") backend_timeout_ms = to_u64(key, v);
  else if (key == "seed") seed = to_u64(key, v);
  else if (key == "temperature") temperature = to_double(key, v);
  // Kept untrimmed: trailing spaces are significant in a template.
  else if (key == "sft_template") sft_template = unescape(raw);
  else if (key == "speaker_max_distance") speaker_max_distance = to_double(key, v);
  else if (key == "kmeans_iterations") kmeans_iterations = to_u64(key, v);
  else if (key == "scorer_command") scorer_command = std::string(v);
  else if (key == "transcriber_command") transcriber_command = std::string(v);
  else if (key == "truth_path") truth_path = std::string(v);
  else throw Error(ErrorCode::kInvalidArgument, "unknown config key '" + std::string(key) + "'");
}

std::string AppConfig::serialize() const {
  std::ostringstream o;
  o << "sample_rate=" << sample_rate << '\n'
    << "chunk_s=" << fmt(chunk_s) << '\n'
    << "min_segment_s=" << fmt(min_segment_s) << '\n'
    << "max_segment_s=" << fmt(max_segment_s) << '\n'
    << "mos_threshold_pipeline=" << fmt(mos_threshold_pipeline) << '\n'
    << "mos_threshold_decoder=" << fmt(mos_threshold_decoder) << '\n'
    << "codebook_size=" << codebook_size << '\n'
    << "token_rate=" << fmt(token_rate) << '\n'
    << "ngram_order=" << ngram_order << '\n'
    << "backoff_alpha=" << fmt(backoff_alpha) << '\n'
    << "workers=" << workers << '\n'
    << "generation_cap_tokens=" << generation_cap_tokens << '\n'
    << "http_bind=" << http_bind << '\n'
    << "http_threads=" << http_threads << '\n'
    << "backend=" << backend << '\n'
    << "backend_timeout_ms=" << backend_timeout_ms << '\n'
    << "seed=" << seed << '\n'
    << "temperature=" << fmt(temperature) << '\n'
    << "sft_template=" << escape(sft_template) << '\n'
    << "speaker_max_distance=" << fmt(speaker_max_distance) << '\n'
    << "kmeans_iterations=" << kmeans_iterations << '\n'
    << "scorer_command=" << scorer_command << '\n'
    << "transcriber_command=" << transcriber_command << '\n'
    << "truth_path=" << truth_path << '\n';
  return o.str();
}

AppConfig AppConfig::parse(std::string_view text, AppConfig base) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::kInvalidArgument,
                  "config line " + std::to_string(line_no) + " has no '='");
    }
    base.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return base;
}

AppConfig AppConfig::load(const std::filesystem::path& path, AppConfig base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), std::move(base));
}

void AppConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::kInvalidArgument, m); };
  if (sample_rate != 16000) fail("sample_rate is fixed at 16000");
  if (token_rate != 25.0) fail("token_rate is fixed at 25");
  for (double t : {mos_threshold_pipeline, mos_threshold_decoder}) {
    if (!(t >= 1.0 && t <= 5.0)) fail("mos thresholds must lie in [1, 5]");
  }
  if (codebook_size < 1 || codebook_size > kCodebookSize) fail("codebook_size must be in [1, 1024]");
  if (ngram_order < 1 || workers < 1 || generation_cap_tokens < 1 || http_threads < 1 ||
      kmeans_iterations < 1 || backend_timeout_ms < 1) {
    fail("counts must be >= 1");
  }
  if (!(chunk_s > 0.0) || !(min_segment_s >= 0.0) || !(max_segment_s > min_segment_s)) {
    fail("invalid chunk or segment lengths");
  }
  if (!(backoff_alpha > 0.0)) fail("backoff_alpha must be positive");
  if (!(temperature >= 0.0)) fail("temperature must be >= 0");
  if (!(speaker_max_distance >= 0.0 && speaker_max_distance <= 2.0)) {
    fail("speaker_max_distance must be in [0, 2]");
  }
  if (sft_template.find("{instruction}") == std::string::npos) {
    fail("sft_template must contain {instruction}");
  }
}

std::string AppConfig::digest() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : serialize()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

AppConfig resolve_config(const std::optional<std::filesystem::path>& explicit_path,
                         const std::vector<std::pair<std::string, std::string>>& overrides) {
  AppConfig c = AppConfig::defaults();
  if (explicit_path) {
    c = AppConfig::load(*explicit_path, c);
  } else if (const char* env = std::getenv("PODFORGE_CONFIG"); env != nullptr && *env != '\0') {
    c = AppConfig::load(env, c);
  }
  for (const auto& [k, v] : overrides) c.set(k, v);
  c.validate();
  return c;
}

}  // namespace podforge
