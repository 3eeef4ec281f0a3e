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
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "podforge/codec.hpp"

namespace podforge {

using TokenId = std::uint32_t;
using TokenSequence = std::vector<TokenId>;

inline constexpr std::string_view kUnkLiteral = "<unk>";
inline constexpr std::string_view kEndLiteral = "<|audio_token_end|>";
// Default SFT prompt wrapper; {instruction} is replaced verbatim.
inline constexpr std::string_view kDefaultSftTemplate =
    "[SYS] You are a speech synthesizer. [USER] {instruction} [ASSISTANT] ";

std::string audio_literal(std::uint32_t codec_id);
/// Parses `<|audio_token_N|>` with N in [0, 1024); anything else is nullopt.
std::optional<std::uint32_t> parse_audio_literal(std::string_view literal);
/// Concatenated literals for `ids` followed by the end literal.
std::string audio_literal_string(std::span<const std::uint32_t> ids);

/// Lowercased words with each ASCII punctuation character as its own token.
std::vector<std::string> tokenize_words(std::string_view text);

/// Word-level text vocabulary followed by the 1024 audio tokens and the end
/// token: text ids [0, V), audio ids [V, V+1024), end id V+1024.
class MergedVocab {
 public:
  static MergedVocab build(std::span<const std::string> corpus);
  // text_tokens[0] must be "<unk>".
  static MergedVocab from_text_tokens(std::vector<std::string> text_tokens);

  std::size_t text_size() const { return text_.size(); }
  std::size_t size() const { return text_.size() + kCodebookSize + 1; }

  TokenId unk() const { return 0; }
  TokenId audio_base() const { return static_cast<TokenId>(text_.size()); }
  TokenId end_token() const { return static_cast<TokenId>(text_.size() + kCodebookSize); }
  TokenId audio_id(std::uint32_t codec_id) const;

  bool is_text(TokenId id) const { return id < audio_base(); }
  bool is_audio(TokenId id) const { return id >= audio_base() && id < end_token(); }
  bool is_end(TokenId id) const { return id == end_token(); }
  bool valid(TokenId id) const { return id <= end_token(); }
  std::uint32_t codec_id(TokenId id) const;

  std::optional<TokenId> id_of(std::string_view literal) const;
  std::string literal(TokenId id) const;

  TokenSequence encode_text(std::string_view text) const;

  // Text tokens are space-separated, consecutive audio/end literals are
  // concatenated, and one space separates the two modalities.
  std::string serialize(std::span<const TokenId> ids) const;
  TokenSequence parse(std::string_view serialized) const;

  // UTF-8, one literal per line, line number = id.
  void save(const std::filesystem::path& path) const;
  static MergedVocab load(const std::filesystem::path& path);

  const std::vector<std::string>& text_tokens() const { return text_; }

 private:
  explicit MergedVocab(std::vector<std::string> text);

  std::vector<std::string> text_;
  std::unordered_map<std::string, TokenId> index_;
};

std::vector<TokenId> map_audio(const MergedVocab& v, std::span<const std::uint32_t> audio);

/// text ++ audio ++ END, with no separator between modalities.
TokenSequence assemble_pretrain_line(const MergedVocab& v, std::string_view text,
                                     std::span<const std::uint32_t> audio);

/// ref text ++ target text ++ ref audio; no wrapper and no END.
TokenSequence assemble_zero_shot_prompt(const MergedVocab& v, std::string_view ref_text,
                                        std::string_view target_text,
                                        std::span<const std::uint32_t> ref_audio);

std::string render_sft_text(std::string_view instruction,
                            std::string_view tmpl = kDefaultSftTemplate);
TokenSequence render_sft_prompt(const MergedVocab& v, std::string_view instruction,
                                std::string_view tmpl = kDefaultSftTemplate);

struct ParsedAudio {
  AudioTokens ids;
  bool truncated = false;  // no END seen
};

/// Reads audio ids up to END. Throws NonAudioTokenError on a text id.
ParsedAudio parse_generated(const MergedVocab& v, std::span<const TokenId> ids);

struct SftRecord {
  std::string instruction;
  std::string input;
  std::string output;
};

/// One JSONL line with keys instruction, input, output in that order.
std::string sft_record_json(const SftRecord& r);
SftRecord parse_sft_record(std::string_view json_line);

/// Splits a pretrain corpus line into transcript and audio ids.
struct PretrainLine {
  std::string text;
  AudioTokens audio;
};
PretrainLine parse_pretrain_line(std::string_view line);
/// Parses a run of audio literals that must end with the end literal.
AudioTokens parse_audio_literal_run(std::string_view literals);

}  // namespace podforge
