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

#include "podforge/fixtures.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include <nlohmann/json.hpp>

#include "podforge/error.hpp"

namespace podforge {
namespace {

constexpr double kFs = kCanonicalRate;

// Base formants (Hz) for five vowels of an adult vocal tract.
constexpr std::array<std::array<double, 3>, 5> kVowels = {{
    {730, 1090, 2440},  // a
    {270, 2290, 3010},  // i
    {300, 870, 2240},   // u
    {530, 1840, 2480},  // e
    {570, 840, 2410},   // o
}};
constexpr std::array<double, 3> kBandwidths = {80, 110, 160};

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(std::tolower(static_cast<unsigned char>(c)));
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Two-pole resonator with unity gain at DC.
struct Resonator {
  double a = 1, b = 0, c = 0, y1 = 0, y2 = 0;

  void tune(double freq, double bw) {
    freq = std::min(freq, 0.45 * kFs);
    c = -std::exp(-2.0 * std::numbers::pi * bw / kFs);
    b = 2.0 * std::exp(-std::numbers::pi * bw / kFs) * std::cos(2.0 * std::numbers::pi * freq / kFs);
    a = 1.0 - b - c;
  }
  double step(double x) {
    const double y = a * x + b * y1 + c * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

struct Syllable {
  std::size_t vowel;
  int consonant;  // 0 none, 1 fricative, 2 plosive
  double vowel_s;
};

std::vector<Syllable> syllables_of(std::string_view word) {
  const std::uint64_t h = fnv1a(word);
  const std::size_t count = 1 + std::min<std::size_t>(2, word.size() / 4);
  std::vector<Syllable> out;
  for (std::size_t s = 0; s < count; ++s) {
    const std::uint64_t m = splitmix(h + s);
    out.push_back({static_cast<std::size_t>(m % kVowels.size()), static_cast<int>((m >> 8) % 3),
                   0.11 + static_cast<double>((m >> 16) % 90) / 1000.0});
  }
  return out;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u) || c == '\'') {
      cur.push_back(static_cast<char>(std::tolower(u)));
    } else if (std::isspace(u) && !cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

void append_silence(std::vector<double>& out, double seconds) {
  out.resize(out.size() + static_cast<std::size_t>(std::llround(seconds * kFs)), 0.0);
}

std::string three_digits(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03zu", i);
  return buf;
}

double frame_rms_p90(const Waveform& w) {
  auto rms = rms_energy(w);
  std::sort(rms.begin(), rms.end());
  return rms.empty() ? 0.0 : rms[static_cast<std::size_t>(0.9 * static_cast<double>(rms.size() - 1))];
}

}  // namespace

const std::vector<VoiceProfile>& fixture_voices() {
  static const std::vector<VoiceProfile> voices = {
      {"low-dark", 95.0, 0.88, 0.97, 0.02, 0},
      {"high-bright", 250.0, 1.40, -0.60, 0.40, 3},
      {"mid-warm", 140.0, 1.02, 0.85, 0.06, 0},
      {"mid-breathy", 185.0, 1.20, -0.20, 0.30, 1},
      {"tenor", 120.0, 0.95, 0.40, 0.10, 0},
      {"alto", 210.0, 1.28, 0.92, 0.04, 2},
  };
  return voices;
}

Waveform synthesize_voice(const VoiceProfile& voice, std::string_view text, std::uint64_t seed,
                          const SpeechOptions& options) {
  const auto words = split_words(text);
  if (words.empty()) throw Error(ErrorCode::kEmptyText, "nothing to render");
  Rng rng(seed);
  std::vector<double> out;
  append_silence(out, options.lead_s);

  std::array<Resonator, 3> formants;
  Resonator fricative, burst;
  fricative.tune(4200.0 * voice.tract_scale, 1800.0);
  burst.tune(2500.0 * voice.tract_scale, 2000.0);
  double phase = 0.0;
  double source = 0.0;
  const double ramp = 0.02 * kFs;
  // Emphasis, then a fixed RMS per piece so vowels dominate whatever the
  // source tilt, then the envelope.
  auto emit = [&](std::vector<double>& piece, double rms, auto envelope) {
    for (int k = 0; k < voice.emphasis; ++k) {
      double prev = 0.0;
      for (auto& v : piece) {
        const double cur = v;
        v = cur - 0.97 * prev;
        prev = cur;
      }
    }
    double e = 0.0;
    for (double v : piece) e += v * v;
    const double g = e > 0.0 ? rms / std::sqrt(e / static_cast<double>(piece.size())) : 0.0;
    for (std::size_t i = 0; i < piece.size(); ++i) out.push_back(g * envelope(i) * piece[i]);
  };

  for (std::size_t w = 0; w < words.size(); ++w) {
    const double word_pitch = 1.0 + 0.06 * (rng.uniform() - 0.5);
    for (const auto& syl : syllables_of(words[w])) {
      if (syl.consonant == 1) {
        std::vector<double> piece(static_cast<std::size_t>(0.05 * kFs));
        for (auto& v : piece) v = fricative.step(rng.normal());
        emit(piece, 0.35, [n = piece.size()](std::size_t i) {
          return std::sin(std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
        });
      } else if (syl.consonant == 2) {
        append_silence(out, 0.02);
        std::vector<double> piece(static_cast<std::size_t>(0.015 * kFs));
        for (auto& v : piece) v = burst.step(rng.normal());
        emit(piece, 0.6, [n = piece.size()](std::size_t i) {
          return 1.0 - static_cast<double>(i) / static_cast<double>(n);
        });
      }
      for (std::size_t k = 0; k < 3; ++k) {
        formants[k].tune(kVowels[syl.vowel][k] * voice.tract_scale,
                         kBandwidths[k] * voice.tract_scale);
      }
      std::vector<double> piece(static_cast<std::size_t>(syl.vowel_s * kFs));
      const auto n = piece.size();
      for (std::size_t i = 0; i < n; ++i) {
        const double pos = static_cast<double>(i) / static_cast<double>(n);
        const double f0 = voice.f0 * word_pitch * (1.0 + 0.05 * std::sin(std::numbers::pi * pos));
        phase += f0 / kFs;
        double pulse = 0.0;
        if (phase >= 1.0) {
          phase -= 1.0;
          pulse = 1.0;
        }
        const double excitation = pulse + voice.breath * 0.3 * rng.normal();
        source = (1.0 - voice.tilt) * excitation + voice.tilt * source;
        double y = source;
        for (auto& f : formants) y = f.step(y);
        piece[i] = y;
      }
      emit(piece, 1.0, [n, ramp](std::size_t i) {
        return std::min({1.0, static_cast<double>(i) / ramp, static_cast<double>(n - i) / ramp});
      });
    }
    if (w + 1 < words.size()) {
      append_silence(out, rng.uniform(options.word_gap_min_s, options.word_gap_max_s));
    }
  }
  append_silence(out, options.lead_s);

  Waveform wave;
  wave.sample_rate = kCanonicalRate;
  wave.samples.assign(out.begin(), out.end());
  const double loud = frame_rms_p90(wave);
  const double gain = loud > 0.0 ? options.level / loud : 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    // Soft limiter keeps the pulse peaks inside full scale.
    const double y = 0.95 * std::tanh(out[i] * gain / 0.95);
    wave.samples[i] = static_cast<float>(y + options.noise_rms * rng.normal());
  }
  return wave;
}

const std::vector<std::string>& fixture_words() {
  static const std::vector<std::string> words = {
      "river", "mountain", "coffee", "window", "garden", "silver", "morning", "picture",
      "station", "candle", "engine", "forest", "harbor", "island", "jacket", "kitchen",
      "ladder", "market", "needle", "orange", "pencil", "rabbit", "saddle", "ticket",
      "valley", "wallet", "yellow", "basket", "cotton", "dinner", "feather", "guitar",
      "hammer", "lemon", "marble", "nickel", "pepper", "rocket", "summer", "tunnel",
      "velvet", "winter", "anchor", "bridge", "castle", "desert", "empire", "falcon",
      "glacier", "helmet", "insect", "jungle", "kettle", "lantern", "meadow", "napkin",
      "oyster", "pillow", "quarter", "ribbon", "salmon", "thunder", "umbrella", "violin",
      "walnut", "zebra", "apple", "blanket", "cabin", "dragon", "eagle", "fabric",
      "goose", "honey", "iron", "jelly", "kingdom", "lizard", "mirror", "noodle",
      "ocean", "parrot", "quilt", "robin", "spider", "tiger", "unicorn", "vessel",
      "whistle", "yogurt", "acorn", "bottle", "carpet", "dolphin", "elbow", "finger",
      "ginger", "hollow", "igloo", "journal", "koala", "lobster", "muffin", "nectar",
      "otter", "puzzle", "radish", "sparrow", "tomato", "usher", "vapor", "waffle",
      "arrow", "bubble", "cherry", "daisy", "echo", "fiddle", "gravel", "hazel",
      "ivory", "jigsaw", "kernel", "lily", "maple", "nutmeg", "olive", "pebble",
      "raven", "saffron", "tulip", "uncle", "village", "willow", "badger", "compass",
      "dentist", "ember", "flannel", "goblet", "hornet", "index", "juniper", "kayak",
      "lagoon", "mango", "nomad", "orbit", "pirate", "quiver", "rumble", "shadow",
      "timber", "upper", "vortex", "wizard", "atlas", "beacon", "canyon", "domino",
      "fossil", "gadget", "hermit", "iceberg", "jasmine", "kitten", "legend", "magnet",
      "nozzle", "outpost", "paddle", "riddle", "sketch", "turtle", "utensil", "walrus",
      "bamboo", "cactus", "dune", "festival", "gazelle", "horizon", "jewel", "ketchup",
      "lullaby", "mosaic", "nebula", "opera", "pretzel", "raisin", "sonnet", "trumpet",
      "velcro", "wharf", "almond", "biscuit", "cobalt", "drizzle", "feline", "granite",
      "harvest", "inkwell", "jester", "kiosk", "lettuce", "minnow", "noble", "onion",
      "pumpkin", "rooster", "sequin", "thimble", "voyage", "wombat", "beetle", "cedar",
  };
  return words;
}

std::string random_sentence(Rng& rng, std::size_t words) {
  const auto& list = fixture_words();
  std::string s;
  for (std::size_t i = 0; i < words; ++i) {
    if (i > 0) s += ' ';
    s += list[rng.index(list.size())];
  }
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s + ".";
}

std::vector<std::string> distinct_sentences(std::size_t n, std::size_t words_each,
                                            std::uint64_t seed) {
  std::vector<std::string> pool = fixture_words();
  if (n * words_each > pool.size()) {
    throw Error(ErrorCode::kInvalidArgument, "not enough distinct words for the request");
  }
  Rng rng(seed);
  for (std::size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[rng.index(i)]);
  std::vector<std::string> out;
  for (std::size_t k = 0; k < n; ++k) {
    std::string s;
    for (std::size_t i = 0; i < words_each; ++i) {
      if (i > 0) s += ' ';
      s += pool[k * words_each + i];
    }
    s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    out.push_back(s + ".");
  }
  return out;
}

VoicedText speech_at_least(const VoiceProfile& voice, double min_s, std::uint64_t seed,
                           const SpeechOptions& options) {
  Rng rng(seed ^ 0x5151'7e47ULL);
  VoicedText v;
  while (v.audio.duration_s() < min_s) {
    if (!v.text.empty()) v.text += ' ';
    v.text += random_sentence(rng, 6);
    v.audio = synthesize_voice(voice, v.text, seed, options);
  }
  return v;
}

FixtureTree write_fixture_tree(const std::filesystem::path& dir, const CorpusSpec& spec) {
  const auto& voices = fixture_voices();
  if (spec.voice >= voices.size()) throw Error(ErrorCode::kInvalidArgument, "unknown voice index");
  std::filesystem::create_directories(dir / "sources");
  FixtureTree tree;
  tree.truth = dir / "truth.jsonl";
  std::ofstream truth(tree.truth, std::ios::binary | std::ios::trunc);
  Rng noise(spec.seed);
  std::size_t global = 0;
  for (std::size_t s = 0; s < spec.sources; ++s) {
    const std::string rel = "sources/src_" + three_digits(s) + ".wav";
    std::vector<float> buf;
    auto pause = [&] {
      const auto n = static_cast<std::size_t>(std::llround(spec.pause_s * kFs));
      for (std::size_t i = 0; i < n; ++i) buf.push_back(static_cast<float>(3e-4 * noise.normal()));
    };
    pause();
    for (std::size_t u = 0; u < spec.utterances_per_source; ++u, ++global) {
      VoicedText v = speech_at_least(voices[spec.voice], spec.utterance_s,
                                     spec.seed * 1000003ULL + global);
      const bool noisy = std::find(spec.noisy_residues.begin(), spec.noisy_residues.end(),
                                   global % 10) != spec.noisy_residues.end();
      if (noisy) {
        // About 20 dB below the loud frames: scores near 3 on the proxy.
        const double level = frame_rms_p90(v.audio) / 10.0;
        for (auto& x : v.audio.samples) x += static_cast<float>(level * noise.normal());
      }
      FixtureUtterance fu;
      fu.source = rel;
      fu.text = v.text;
      fu.start_s = static_cast<double>(buf.size()) / kFs;
      buf.insert(buf.end(), v.audio.samples.begin(), v.audio.samples.end());
      fu.end_s = static_cast<double>(buf.size()) / kFs;
      fu.noisy = noisy;
      nlohmann::ordered_json j;
      j["source_path"] = rel;
      j["start_s"] = fu.start_s;
      j["end_s"] = fu.end_s;
      j["text"] = fu.text;
      truth << j.dump() << '\n';
      tree.utterances.push_back(std::move(fu));
      pause();
    }
    Waveform w;
    w.samples = std::move(buf);
    normalize_samples(w);
    save_wav(w, dir / rel);
    tree.sources.push_back(dir / rel);
  }
  if (!truth) throw Error(ErrorCode::kIoFailure, "cannot write " + tree.truth.string());
  return tree;
}

}  // namespace podforge
