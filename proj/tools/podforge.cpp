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

// podforge command line. Talks to the library only through the C API.

#include <pthread.h>
#include <signal.h>

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "podforge/podforge.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

constexpr const char* kSynopsis =
    "usage: podforge [--config FILE] [--seed N] [--workers N] [--set KEY=VALUE]... <command> "
    "[options]\n"
    "commands: ingest clean segment score filter-speaker transcribe format-pretrain\n"
    "          format-sft train-codec train-lm synth eval serve pipeline gen-fixtures\n"
    "run 'podforge <command> --help' for command options\n";

// Raised for a failing library call; carries the message already formatted.
struct Failure {
  std::string message;
};

void check(pf_status s, const std::string& what) {
  if (s != PF_OK) {
    std::string msg = pf_last_error();
    if (msg.empty()) msg = pf_status_name(s);
    throw Failure{what + ": " + msg};
  }
}

struct ConfigHandle {
  pf_config* ptr = nullptr;
  ~ConfigHandle() { pf_config_free(ptr); }
};

std::string config_value(const pf_config* cfg, const std::string& key) {
  char* v = nullptr;
  check(pf_config_get(cfg, key.c_str(), &v), "config");
  std::string out(v);
  pf_free(v);
  return out;
}

void print_summary(const char* stage, const pf_stage_summary& s) {
  std::printf("%s: input=%zu output=%zu dropped=%zu\n", stage, s.input, s.output, s.dropped);
}

std::vector<const char*> c_strings(const std::vector<std::string>& v) {
  std::vector<const char*> out;
  out.reserve(v.size());
  for (const auto& s : v) out.push_back(s.c_str());
  return out;
}

const char* opt(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

int serve(const pf_config* cfg, const std::string& model, const std::string& codec,
          const std::string& bind) {
  const auto colon = bind.rfind(':');
  if (colon == std::string::npos) throw Failure{"serve: --bind must be host:port"};
  const std::string host = bind.substr(0, colon);
  const int port = std::atoi(bind.c_str() + colon + 1);

  // Signals are handled on a dedicated thread so the server shuts down cleanly.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  pf_server* server = nullptr;
  check(pf_server_create(cfg, opt(model), opt(codec), &server), "serve");
  int bound = 0;
  if (pf_status s = pf_server_bind(server, host.c_str(), port, &bound); s != PF_OK) {
    pf_server_free(server);
    check(s, "serve");
  }
  std::printf("listening on %s:%d\n", host.c_str(), bound);
  std::fflush(stdout);

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&set, &sig);
    pf_server_stop(server);
  });
  const pf_status s = pf_server_run(server);
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  pf_server_free(server);
  check(s, "serve");
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PodForge speech corpus, codec, synthesis and evaluation tool", "podforge"};
  app.fallthrough();
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::vector<std::string> sets;
  app.add_option("--config", config_path, "Config file (falls back to $PODFORGE_CONFIG)");
  app.add_option("--seed", seed, "Random seed");
  app.add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--set", sets, "Override a config key, KEY=VALUE");

  std::string manifest, out, mode = "sft", speaker, truth, codec, model, text, ref_text,
                            ref_audio, pretrain, sft, bind, model_name;
  std::optional<double> threshold;
  std::vector<std::string> inputs;
  std::size_t sources = 0, utterances = 0;

  auto* ingest = app.add_subcommand("ingest", "Register audio files as a manifest");
  ingest->add_option("inputs", inputs, "WAV files")->required()->check(CLI::ExistingFile);
  ingest->add_option("--out", out, "Output manifest")->required();
  ingest->add_option("--speaker", speaker, "Speaker id recorded on every file");

  auto manifest_stage = [&](const char* name, const char* help) {
    auto* sc = app.add_subcommand(name, help);
    sc->add_option("--manifest", manifest, "Input manifest")->required();
    sc->add_option("--out", out, "Output manifest")->required();
    return sc;
  };
  auto* clean = manifest_stage("clean", "Highpass and spectral-gate every record");
  auto* segment = manifest_stage("segment", "Split cleaned audio into utterances");
  auto* score = manifest_stage("score", "Score quality and keep records above the threshold");
  score->add_option("--threshold", threshold, "MOS threshold (default from config)");
  auto* filter = manifest_stage("filter-speaker", "Keep single-speaker segments");
  auto* transcribe = manifest_stage("transcribe", "Attach transcripts");
  transcribe->add_option("--truth", truth, "Ground-truth JSONL for the lookup transcriber");

  auto format_stage = [&](const char* name, const char* help) {
    auto* sc = app.add_subcommand(name, help);
    sc->add_option("--manifest", manifest, "Transcribed manifest")->required();
    sc->add_option("--codec", codec, "Codebook file")->required();
    sc->add_option("--out", out, "Output corpus")->required();
    return sc;
  };
  auto* fmt_pre = format_stage("format-pretrain", "Write the pretraining text corpus");
  auto* fmt_sft = format_stage("format-sft", "Write the instruction JSONL corpus");

  auto* train_codec = manifest_stage("train-codec", "Train the codebook on records above 4.5");
  auto* train_lm = app.add_subcommand("train-lm", "Train the n-gram model");
  train_lm->add_option("--pretrain", pretrain, "Pretraining corpus");
  train_lm->add_option("--sft", sft, "Instruction corpus");
  train_lm->add_option("--out", out, "Model file")->required();

  const auto modes = CLI::IsMember({"sft", "zero_shot"});
  auto* synth = app.add_subcommand("synth", "Synthesize speech for a text");
  synth->add_option("--text", text, "Text to speak")->required();
  synth->add_option("--mode", mode, "sft or zero_shot")->check(modes);
  synth->add_option("--ref-text", ref_text, "Reference transcript (zero_shot)");
  synth->add_option("--ref-audio", ref_audio, "Reference WAV (zero_shot)");
  synth->add_option("--model", model, "Model file")->required();
  synth->add_option("--codec", codec, "Codebook file")->required();
  synth->add_option("--out", out, "Output WAV")->required();

  auto* eval = app.add_subcommand("eval", "Evaluate a model on a manifest");
  eval->add_option("--manifest", manifest, "Evaluation manifest")->required();
  eval->add_option("--model", model, "Model file")->required();
  eval->add_option("--codec", codec, "Codebook file")->required();
  eval->add_option("--mode", mode, "sft or zero_shot")->check(modes);
  eval->add_option("--out", out, "Report JSON")->required();
  eval->add_option("--model-name", model_name, "Model label in the tables");
  eval->add_option("--truth", truth, "Ground-truth JSONL for the lookup transcriber");

  auto* srv = app.add_subcommand("serve", "Run the HTTP synthesis service");
  srv->add_option("--model", model, "Model file");
  srv->add_option("--codec", codec, "Codebook file");
  srv->add_option("--bind", bind, "host:port (default from config)");

  auto* pipeline = app.add_subcommand("pipeline", "Run every corpus stage into a work directory");
  pipeline->add_option("inputs", inputs, "WAV files")->required()->check(CLI::ExistingFile);
  pipeline->add_option("--out", out, "Work directory")->required();
  pipeline->add_option("--speaker", speaker, "Speaker id recorded on every file");
  pipeline->add_option("--truth", truth, "Ground-truth JSONL for the lookup transcriber");

  auto* gen = app.add_subcommand("gen-fixtures", "Write the synthetic demo corpus");
  gen->add_option("--out", out, "Output directory")->required();
  gen->add_option("--sources", sources, "Source recordings");
  gen->add_option("--utterances", utterances, "Utterances per source");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    // A stray first word is an unknown command, not a missing one.
    const bool unknown = argc > 1 && argv[1][0] != '-' && app.get_subcommands().empty();
    if (unknown) std::cerr << "podforge: unknown command '" << argv[1] << "'\n" << kSynopsis;
    else std::cerr << "podforge: " << e.what() << "\n" << kSynopsis;
    return kExitUsage;
  }

  try {
    ConfigHandle cfg;
    check(pf_config_create(opt(config_path), &cfg.ptr), "config");
    if (seed) check(pf_config_set(cfg.ptr, "seed", std::to_string(*seed).c_str()), "--seed");
    if (workers) {
      check(pf_config_set(cfg.ptr, "workers", std::to_string(*workers).c_str()), "--workers");
    }
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) {
        std::cerr << "podforge: --set expects KEY=VALUE\n" << kSynopsis;
        return kExitUsage;
      }
      check(pf_config_set(cfg.ptr, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()), "--set");
    }
    if (!truth.empty()) check(pf_config_set(cfg.ptr, "truth_path", truth.c_str()), "--truth");

    pf_stage_summary summary{};
    if (*ingest) {
      const auto in = c_strings(inputs);
      check(pf_ingest(cfg.ptr, in.data(), in.size(), out.c_str(), opt(speaker), &summary),
            "ingest");
      print_summary("ingest", summary);
    } else if (*clean) {
      check(pf_clean(cfg.ptr, manifest.c_str(), out.c_str(), &summary), "clean");
      print_summary("clean", summary);
    } else if (*segment) {
      check(pf_segment(cfg.ptr, manifest.c_str(), out.c_str(), &summary), "segment");
      print_summary("segment", summary);
    } else if (*score) {
      const double t = threshold ? *threshold
                                 : std::stod(config_value(cfg.ptr, "mos_threshold_pipeline"));
      check(pf_score(cfg.ptr, manifest.c_str(), out.c_str(), t, &summary), "score");
      print_summary("score", summary);
    } else if (*filter) {
      check(pf_filter_speaker(cfg.ptr, manifest.c_str(), out.c_str(), &summary),
            "filter-speaker");
      print_summary("filter-speaker", summary);
    } else if (*transcribe) {
      check(pf_transcribe(cfg.ptr, manifest.c_str(), out.c_str(), &summary), "transcribe");
      print_summary("transcribe", summary);
    } else if (*fmt_pre) {
      check(pf_format_pretrain(manifest.c_str(), codec.c_str(), out.c_str(), &summary),
            "format-pretrain");
      print_summary("format-pretrain", summary);
    } else if (*fmt_sft) {
      check(pf_format_sft(manifest.c_str(), codec.c_str(), out.c_str(), &summary), "format-sft");
      print_summary("format-sft", summary);
    } else if (*train_codec) {
      check(pf_train_codec(cfg.ptr, manifest.c_str(), out.c_str(), &summary), "train-codec");
      print_summary("train-codec", summary);
    } else if (*train_lm) {
      if (pretrain.empty() && sft.empty()) {
        std::cerr << "podforge: train-lm needs --pretrain or --sft\n" << kSynopsis;
        return kExitUsage;
      }
      check(pf_train_lm(cfg.ptr, opt(pretrain), opt(sft), out.c_str(), &summary), "train-lm");
      print_summary("train-lm", summary);
    } else if (*synth) {
      pf_synth_result r{};
      check(pf_synth_file(cfg.ptr, model.c_str(), codec.c_str(), text.c_str(), mode.c_str(),
                          opt(ref_text), opt(ref_audio), out.c_str(), &r),
            "synth");
      std::printf("synth: t_inf=%.3f t_syn=%.3f r=%.3f sentences=%zu%s%s\n", r.t_inf, r.t_syn,
                  r.r, r.sentences, r.truncated ? " truncated" : "", r.degraded ? " degraded" : "");
    } else if (*eval) {
      char* table = nullptr;
      check(pf_eval(cfg.ptr, manifest.c_str(), model.c_str(), codec.c_str(), mode.c_str(),
                    opt(model_name), out.c_str(), &table),
            "eval");
      std::fputs(table, stdout);
      pf_free(table);
    } else if (*srv) {
      return serve(cfg.ptr, model, codec, bind.empty() ? config_value(cfg.ptr, "http_bind") : bind);
    } else if (*pipeline) {
      const auto in = c_strings(inputs);
      check(pf_pipeline(cfg.ptr, in.data(), in.size(), out.c_str(), opt(speaker), &summary),
            "pipeline");
      print_summary("pipeline", summary);
    } else if (*gen) {
      const std::uint64_t s = seed ? *seed : 7;
      check(pf_gen_fixtures(out.c_str(), s, sources, utterances), "gen-fixtures");
      std::printf("gen-fixtures: wrote %s\n", out.c_str());
    }
  } catch (const Failure& f) {
    std::cerr << "podforge: " << f.message << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "podforge: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
