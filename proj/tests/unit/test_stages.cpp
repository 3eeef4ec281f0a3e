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

#include "doctest.h"
#include "podforge/config.hpp"
#include "podforge/fixtures.hpp"
#include "podforge/stages.hpp"
#include "test_util.hpp"

using namespace podforge;
namespace fs = std::filesystem;

namespace {

AppConfig small_config(const FixtureTree& tree) {
  auto c = AppConfig::defaults();
  c.truth_path = tree.truth.string();
  c.codebook_size = 64;
  c.kmeans_iterations = 15;
  c.workers = 1;
  c.seed = 3;
  return c;
}

const std::vector<std::string>& artifact_files() {
  static const std::vector<std::string> files = {
      "chunked/manifest.jsonl",     "cleaned/manifest.jsonl",
      "segmented/manifest.jsonl",   "scored/manifest.jsonl",
      "scored/dropped.jsonl",       "speaker_filtered/manifest.jsonl",
      "transcribed/manifest.jsonl", "codec.bin",
      "pretrain.txt",               "sft.jsonl"};
  return files;
}

struct Fixture {
  testutil::TempDir dir;
  FixtureTree tree;
  Fixture() {
    CorpusSpec spec;
    spec.sources = 2;
    spec.utterances_per_source = 5;
    tree = write_fixture_tree(dir / "fixture", spec);
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

}  // namespace

TEST_CASE("pipeline is deterministic across runs and worker counts") {
  auto& f = fixture();
  auto cfg = small_config(f.tree);
  const auto a = stage_pipeline(f.tree.sources, f.dir / "run_a", cfg, "host");
  cfg.workers = 3;
  const auto b = stage_pipeline(f.tree.sources, f.dir / "run_b", cfg, "host");
  CHECK(a.input == 2);
  CHECK(a.output == 7);
  CHECK(a.output == b.output);
  for (const auto& name : artifact_files()) {
    INFO(name);
    const auto x = testutil::read_file(f.dir / "run_a" / name);
    CHECK_FALSE(x.empty());
    CHECK(x == testutil::read_file(f.dir / "run_b" / name));
  }
  const auto kept = read_manifest(f.dir / "run_a" / "transcribed" / "manifest.jsonl");
  for (const auto& r : kept) {
    CHECK(r.stage == Stage::kTranscribed);
    CHECK(*r.mos > 3.8);
    CHECK(r.text);
    CHECK(fs::exists(audio_path(f.dir / "run_a" / "transcribed" / "manifest.jsonl", r.id)));
  }
}

TEST_CASE("separate stages equal the combined pipeline") {
  auto& f = fixture();
  const auto cfg = small_config(f.tree);
  const auto w = f.dir / "staged";
  stage_pipeline(f.tree.sources, f.dir / "combined", cfg, "host");
  stage_ingest(f.tree.sources, w / "1.jsonl", cfg, "host");
  stage_clean(w / "1.jsonl", w / "2.jsonl", cfg);
  stage_segment(w / "2.jsonl", w / "3.jsonl", cfg);
  const auto scored = stage_score(w / "3.jsonl", w / "4.jsonl", cfg, cfg.mos_threshold_pipeline);
  CHECK(scored.dropped == 3);
  stage_filter_speaker(w / "4.jsonl", w / "5.jsonl", cfg);
  stage_transcribe(w / "5.jsonl", w / "6.jsonl", cfg);
  stage_train_codec(w / "6.jsonl", w / "codec.bin", cfg);
  stage_format_pretrain(w / "6.jsonl", w / "codec.bin", w / "pretrain.txt");
  stage_format_sft(w / "6.jsonl", w / "codec.bin", w / "sft.jsonl");
  for (const char* name : {"codec.bin", "pretrain.txt", "sft.jsonl"}) {
    INFO(name);
    CHECK(testutil::read_file(w / name) == testutil::read_file(f.dir / "combined" / name));
  }
}

TEST_CASE("train-codec refuses a manifest without decoder-quality audio") {
  testutil::TempDir dir;
  std::vector<ManifestRecord> rs;
  fs::create_directories(dir / "audio");
  for (int i = 0; i < 3; ++i) {
    ManifestRecord r;
    r.id = "u" + std::to_string(i);
    r.source_path = "s.wav";
    r.end_s = r.duration_s = 1.0;
    r.mos = 4.5 - 0.5 * i;
    r.stage = Stage::kScored;
    rs.push_back(r);
    save_wav(testutil::sine(300 + 100 * i, 1.0), audio_path(dir / "m.jsonl", r.id));
  }
  write_manifest(dir / "m.jsonl", rs);
  CHECK_ERROR_CODE(stage_train_codec(dir / "m.jsonl", dir / "c.bin", AppConfig::defaults()),
                   ErrorCode::kInsufficientData);
  CHECK_FALSE(fs::exists(dir / "c.bin"));
}

TEST_CASE("model bundle, synthesis and closed-loop evaluation from files") {
  auto& f = fixture();
  auto cfg = small_config(f.tree);
  cfg.ngram_order = 12;
  cfg.temperature = 0.0;
  const auto run = f.dir / "bundle_run";
  stage_pipeline(f.tree.sources, run, cfg, "host");
  const auto lm = stage_train_lm(run / "pretrain.txt", run / "sft.jsonl", run / "model.bin", cfg);
  CHECK(lm.output > 0);

  const auto bundle = ModelBundle::load(run / "model.bin");
  CHECK(bundle.model.order() == 12);
  CHECK(ModelBundle::deserialize(bundle.serialize()).serialize() == bundle.serialize());
  auto bytes = bundle.serialize();
  bytes[0] ^= 0xff;
  CHECK_ERROR_CODE(ModelBundle::deserialize(bytes), ErrorCode::kMalformedContainer);
  CHECK_ERROR_CODE(stage_train_lm(std::nullopt, std::nullopt, run / "x.bin", cfg),
                   ErrorCode::kInvalidArgument);

  SynthRequestFiles req;
  req.text = "Hello there.";
  req.model = run / "model.bin";
  req.codec = run / "codec.bin";
  req.out = run / "hello.wav";
  const auto result = stage_synth(req, cfg);
  CHECK(result.t_syn > 0.0);
  CHECK(load_wav(req.out).samples.size() == result.audio.samples.size());

  EvalFiles ef;
  ef.manifest = run / "transcribed" / "manifest.jsonl";
  ef.model = run / "model.bin";
  ef.codec = run / "codec.bin";
  ef.out = run / "report.json";
  const auto report = stage_eval(ef, cfg);
  CHECK(report.metadata.records_total == 7);
  CHECK(report.metadata.records_failed == 0);
  REQUIRE(report.rows.size() == 1);
  CHECK(report.rows[0].wer_pct == 0.0);
  CHECK(report.rows[0].dataset_name == "transcribed");
  CHECK(report.metadata.config_digest == cfg.digest());
  CHECK(without_timing(load_report(ef.out)) == without_timing(report));
}
