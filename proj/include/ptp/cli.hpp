// Copyright (c) 2026 ptp contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ptp/corpus.hpp"

namespace ptp {

/// Options shared by every subcommand. `deterministic` pins single-worker
/// execution and zeroes wall-clock fields so reruns of the same config and
/// seed byte-reproduce their reports.
struct CommonArgs {
  std::uint64_t seed = 0;
  int workers = 0;  // 0 = hardware default
  bool deterministic = false;
  std::string out_dir;  // prefix for relative output paths; env PTP_OUT_DIR

  int effective_workers() const;
  std::string resolve(const std::string& path) const;
};

struct GenArgs : CommonArgs {
  int count = 1000;
  int vocab_size = 64;
  ShapeRange shape;
  int max_cells = kDefaultMaxCells;
  std::string out = "corpus.tsv";
  std::string probe_out;  // empty = no probe file
  double probe_rate = 0.25;
  std::string probe_kinds = "both";  // both | delete | substitute
};

struct TrainArgs : CommonArgs {
  std::string corpus;
  std::string checkpoint_out = "model.ckpt";
  std::string trajectory_out;
  int steps = 0;
  int epochs = 1;
  int batch_size = 32;
  double lr = 3e-4;
  double alpha = 0.5;
  int n = 2;
  std::string layout = "continuous";          // continuous | interleaved
  std::string embedding_mode = "shared";      // shared | distinct
  int vocab_size = 64;
  int d_model = 128;
  int n_layers = 4;
  int n_heads = 4;
  int d_ff = 512;
  int max_position = 512;
  int checkpoint_every = 0;
};

struct DecodeArgs : CommonArgs {
  std::string checkpoint;
  std::string corpus;
  std::string out = "decode.jsonl";
  std::string mode = "ntp";  // ntp | ptp | ptp-spec
  int n = 0;
  std::string cache_policy = "replace";  // replace | keep
  int max_new_tokens = 256;
  int limit = 0;  // 0 = whole corpus
};

struct BenchArgs : CommonArgs {
  std::string checkpoint;
  std::string corpus;
  std::string out = "bench.json";
  std::string csv_out;  // optional per-example rows
  std::string modes = "ntp,ptp-1,ptp-spec-1";
  std::string cache_policy = "replace";
  int max_new_tokens = 256;
  int limit = 0;
};

struct ProbeArgs : CommonArgs {
  std::string checkpoint;
  std::string probes;
  std::string out = "probe.json";
  std::string mode = "ntp";
  int n = 0;
  int max_new_tokens = 256;
  int limit = 0;
};

struct GradcheckArgs : CommonArgs {
  int samples = 200;
  double eps = 1e-5;
  double alpha = 0.5;
  int n = 2;
  int batch = 4;
  std::string out;  // optional report path
};

/// Replaces a `--config FILE` argument with the file's key=value pairs,
/// injected right after the subcommand so explicit flags override file
/// values. Lines starting with '#' and blank lines are skipped.
std::vector<std::string> expand_config_args(std::vector<std::string> args);

// Each command returns 0 on success and throws on failure; the CLI wrapper
// turns exceptions into machine-readable error JSON and a nonzero exit.
int cmd_gen(const GenArgs& args);
int cmd_train(const TrainArgs& args);
int cmd_decode(const DecodeArgs& args);
int cmd_bench(const BenchArgs& args);
int cmd_probe(const ProbeArgs& args);
int cmd_gradcheck(const GradcheckArgs& args);

}  // namespace ptp
