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

#include "podforge/protocol.hpp"

#include <cctype>
#include <charconv>
#include <fstream>

#include <nlohmann/json.hpp>

#include "podforge/error.hpp"

namespace podforge {
namespace {

constexpr std::string_view kAudioPrefix = "<|audio_token_";
constexpr std::string_view kLiteralSuffix = "|>";

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }

}  // namespace

std::string audio_literal(std::uint32_t codec_id) {
  return std::string(kAudioPrefix) + std::to_string(codec_id) + std::string(kLiteralSuffix);
}

std::optional<std::uint32_t> parse_audio_literal(std::string_view literal) {
  if (!literal.starts_with(kAudioPrefix) || !literal.ends_with(kLiteralSuffix)) {
    return std::nullopt;
  }
  const auto digits = literal.substr(kAudioPrefix.size(),
                                     literal.size() - kAudioPrefix.size() - kLiteralSuffix.size());
  if (digits.empty() || digits.size() > 4 || (digits.size() > 1 && digits[0] == '0')) {
    return std::nullopt;
  }
  std::uint32_t v = 0;
  const auto [end, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
  if (ec != std::errc() || end != digits.data() + digits.size() || v >= kCodebookSize) {
    return std::nullopt;
  }
  return v;
}

std::string audio_literal_string(std::span<const std::uint32_t> ids) {
  std::string out;
  out.reserve(ids.size() * 20 + kEndLiteral.size());
  for (auto id : ids) {
    if (id >= kCodebookSize) {
      throw Error(ErrorCode::kCodecMismatch, "audio token " + std::to_string(id) + " >= 1024");
    }
    out += audio_literal(id);
  }
  out += kEndLiteral;
  return out;
}

std::vector<std::string> tokenize_words(std::string_view text) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) out.push_back(std::move(word));
    word.clear();
  };
  for (char c : text) {
    if (is_space(c)) {
      flush();
    } else if (is_punct(c)) {
      flush();
      out.emplace_back(1, c);
    } else {
      word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  flush();
  return out;
}

MergedVocab::MergedVocab(std::vector<std::string> text) : text_(std::move(text)) {
  if (text_.empty() || text_[0] != kUnkLiteral) {
    throw Error(ErrorCode::kInvalidArgument, "text vocabulary must start with <unk>");
  }
  for (TokenId i = 0; i < text_.size(); ++i) {
    if (text_[i].empty() || parse_audio_literal(text_[i]) || text_[i] == kEndLiteral ||
        text_[i].find_first_of(" \t\r\n") != std::string::npos) {
      throw Error(ErrorCode::kInvalidArgument, "invalid text token '" + text_[i] + "'");
    }
    if (!index_.emplace(text_[i], i).second) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate text token '" + text_[i] + "'");
    }
  }
}

MergedVocab MergedVocab::build(std::span<const std::string> corpus) {
  if (corpus.empty()) throw Error(ErrorCode::kEmptyCorpus, "vocabulary corpus is empty");
  std::vector<std::string> tokens{std::string(kUnkLiteral)};
  std::unordered_map<std::string, bool> seen{{std::string(kUnkLiteral), true}};
  for (const auto& line : corpus) {
    for (auto& w : tokenize_words(line)) {
      if (seen.emplace(w, true).second) tokens.push_back(std::move(w));
    }
  }
  return MergedVocab(std::move(tokens));
}

MergedVocab MergedVocab::from_text_tokens(std::vector<std::string> text_tokens) {
  return MergedVocab(std::move(text_tokens));
}

TokenId MergedVocab::audio_id(std::uint32_t codec_id) const {
  if (codec_id >= kCodebookSize) {
    throw Error(ErrorCode::kCodecMismatch, "audio token " + std::to_string(codec_id) + " >= 1024");
  }
  return audio_base() + codec_id;
}

std::uint32_t MergedVocab::codec_id(TokenId id) const {
  if (!is_audio(id)) throw Error(ErrorCode::kInvalidToken, "id " + std::to_string(id) + " is not audio");
  return id - audio_base();
}

std::optional<TokenId> MergedVocab::id_of(std::string_view literal) const {
  if (literal == kEndLiteral) return end_token();
  if (literal.starts_with(kAudioPrefix)) {
    if (auto a = parse_audio_literal(literal)) return audio_base() + *a;
    return std::nullopt;
  }
  auto it = index_.find(std::string(literal));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::string MergedVocab::literal(TokenId id) const {
  if (is_text(id)) return text_[id];
  if (is_audio(id)) return audio_literal(id - audio_base());
  if (is_end(id)) return std::string(kEndLiteral);
  throw Error(ErrorCode::kInvalidToken, "id " + std::to_string(id) + " outside vocabulary");
}

TokenSequence MergedVocab::encode_text(std::string_view text) const {
  TokenSequence out;
  for (const auto& w : tokenize_words(text)) {
    auto it = index_.find(w);
    out.push_back(it == index_.end() ? unk() : it->second);
  }
  return out;
}

std::string MergedVocab::serialize(std::span<const TokenId> ids) const {
  std::string out;
  bool prev_audio = false;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const bool audio = !is_text(ids[i]);
    if (i > 0 && !(audio && prev_audio)) out.push_back(' ');
    out += literal(ids[i]);
    prev_audio = audio;
  }
  return out;
}

TokenSequence MergedVocab::parse(std::string_view s) const {
  TokenSequence out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (is_space(s[i])) {
      ++i;
      continue;
    }
    std::size_t end;
    if (s.substr(i).starts_with("<|")) {
      const auto close = s.find(kLiteralSuffix, i);
      if (close == std::string_view::npos) {
        throw Error(ErrorCode::kInvalidToken, "unterminated literal at offset " + std::to_string(i));
      }
      end = close + kLiteralSuffix.size();
      const auto lit = s.substr(i, end - i);
      auto id = id_of(lit);
      if (!id) throw Error(ErrorCode::kInvalidToken, "unknown literal " + std::string(lit));
      out.push_back(*id);
    } else {
      end = i;
      while (end < s.size() && !is_space(s[end]) && !s.substr(end).starts_with("<|")) ++end;
      const auto lit = s.substr(i, end - i);
      auto id = id_of(lit);
      out.push_back(id ? *id : unk());
    }
    i = end;
  }
  return out;
}

void MergedVocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot write " + path.string());
  for (TokenId id = 0; id < size(); ++id) out << literal(id) << '\n';
  if (!out) throw Error(ErrorCode::kIoFailure, "short write to " + path.string());
}

MergedVocab MergedVocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  if (lines.size() < kCodebookSize + 2) {
    throw Error(ErrorCode::kMalformedContainer, "vocabulary file too short");
  }
  const std::size_t text_count = lines.size() - kCodebookSize - 1;
  for (std::size_t a = 0; a < kCodebookSize; ++a) {
    if (lines[text_count + a] != audio_literal(static_cast<std::uint32_t>(a))) {
      throw Error(ErrorCode::kMalformedContainer, "audio literal block out of order at line " +
                                                      std::to_string(text_count + a));
    }
  }
  if (lines.back() != kEndLiteral) {
    throw Error(ErrorCode::kMalformedContainer, "vocabulary must end with the end literal");
  }
  lines.resize(text_count);
  return MergedVocab(std::move(lines));
}

std::vector<TokenId> map_audio(const MergedVocab& v, std::span<const std::uint32_t> audio) {
  std::vector<TokenId> out;
  out.reserve(audio.size());
  for (auto a : audio) out.push_back(v.audio_id(a));
  return out;
}

TokenSequence assemble_pretrain_line(const MergedVocab& v, std::string_view text,
                                     std::span<const std::uint32_t> audio) {
  if (audio.empty()) throw Error(ErrorCode::kEmptyAudio, "pretrain line needs audio tokens");
  TokenSequence out = v.encode_text(text);
  const auto mapped = map_audio(v, audio);
  out.insert(out.end(), mapped.begin(), mapped.end());
  out.push_back(v.end_token());
  return out;
}

TokenSequence assemble_zero_shot_prompt(const MergedVocab& v, std::string_view ref_text,
                                        std::string_view target_text,
                                        std::span<const std::uint32_t> ref_audio) {
  if (ref_audio.empty()) throw Error(ErrorCode::kEmptyAudio, "zero-shot prompt needs reference audio");
  TokenSequence out = v.encode_text(ref_text);
  const auto target = v.encode_text(target_text);
  out.insert(out.end(), target.begin(), target.end());
  const auto mapped = map_audio(v, ref_audio);
  out.insert(out.end(), mapped.begin(), mapped.end());
  return out;
}

std::string render_sft_text(std::string_view instruction, std::string_view tmpl) {
  constexpr std::string_view kSlot = "{instruction}";
  const auto at = tmpl.find(kSlot);
  if (at == std::string_view::npos) {
    throw Error(ErrorCode::kInvalidArgument, "SFT template lacks {instruction}");
  }
  std::string out(tmpl.substr(0, at));
  out += instruction;
  out += tmpl.substr(at + kSlot.size());
  return out;
}

TokenSequence render_sft_prompt(const MergedVocab& v, std::string_view instruction,
                                std::string_view tmpl) {
  return v.encode_text(render_sft_text(instruction, tmpl));
}

ParsedAudio parse_generated(const MergedVocab& v, std::span<const TokenId> ids) {
  ParsedAudio out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (v.is_end(ids[i])) return out;
    if (!v.is_audio(ids[i])) throw NonAudioTokenError(i);
    out.ids.push_back(v.codec_id(ids[i]));
  }
  out.truncated = true;
  return out;
}

std::string sft_record_json(const SftRecord& r) {
  nlohmann::ordered_json j;
  j["instruction"] = r.instruction;
  j["input"] = r.input;
  j["output"] = r.output;
  return j.dump();
}

SftRecord parse_sft_record(std::string_view json_line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_line);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kMalformedContainer, std::string("SFT record: ") + e.what());
  }
  if (!j.is_object() || j.size() != 3 || !j.contains("instruction") || !j.contains("input") ||
      !j.contains("output")) {
    throw Error(ErrorCode::kMalformedContainer, "SFT record needs exactly instruction/input/output");
  }
  SftRecord r{j["instruction"].get<std::string>(), j["input"].get<std::string>(),
              j["output"].get<std::string>()};
  if (!r.input.empty()) throw Error(ErrorCode::kMalformedContainer, "SFT input must be empty");
  return r;
}

AudioTokens parse_audio_literal_run(std::string_view s) {
  AudioTokens out;
  std::size_t i = 0;
  while (i < s.size()) {
    const auto close = s.find(kLiteralSuffix, i);
    if (close == std::string_view::npos) break;
    const auto lit = s.substr(i, close + kLiteralSuffix.size() - i);
    if (lit == kEndLiteral) {
      if (close + kLiteralSuffix.size() != s.size()) {
        throw Error(ErrorCode::kMalformedContainer, "text after the end literal");
      }
      return out;
    }
    auto id = parse_audio_literal(lit);
    if (!id) throw Error(ErrorCode::kCodecMismatch, "bad audio literal " + std::string(lit));
    out.push_back(*id);
    i = close + kLiteralSuffix.size();
  }
  throw Error(ErrorCode::kMalformedContainer, "audio literal run lacks the end literal");
}

PretrainLine parse_pretrain_line(std::string_view line) {
  while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.remove_suffix(1);
  const auto at = line.find(kAudioPrefix);
  if (at == std::string_view::npos) {
    throw Error(ErrorCode::kMalformedContainer, "pretrain line has no audio literals");
  }
  PretrainLine out;
  auto text = line.substr(0, at);
  if (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  out.text = std::string(text);
  out.audio = parse_audio_literal_run(line.substr(at));
  return out;
}

}  // namespace podforge
