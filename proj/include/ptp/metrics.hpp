// Copyright (c) 2026 ptp contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "ptp/corpus.hpp"
#include "ptp/inference.hpp"

namespace ptp {

/// Levenshtein distance (insertions, deletions, substitutions) over token
/// ids.
int edit_distance(std::span<const int> ref, std::span<const int> hyp);
int edit_distance(std::string_view ref, std::string_view hyp);

struct ExampleScore {
  int distance = 0;
  double normalized = 0.0;  // distance / max(|ref|, |hyp|, 1)
  bool exact = false;
  int ref_len = 0;
  int hyp_len = 0;
};

struct AccuracyReport {
  std::vector<ExampleScore> per_example;
  double mean_distance = 0.0;
  double mean_normalized = 0.0;
  double exact_match_rate = 0.0;
};

AccuracyReport score_pairs(std::span<const std::vector<int>> refs,
                           std::span<const std::vector<int>> hyps);

/// Decoder under test: prompt tokens in, committed tokens out. Trailing EOS
/// is stripped from both sides before scoring so distances measure content.
using DecodeFn = std::function<std::vector<int>(std::span<const int> prompt)>;

AccuracyReport evaluate(const DecodeFn& decode,
                        std::span<const TranscriptionExample> split);

/// Paired clean/corrupted evaluation. The corrupted side scores against the
/// transcription of the corrupted prompt: copying the corruption is correct,
/// reverting it to the clean text counts as hallucination.
struct ProbeReport {
  AccuracyReport clean;
  AccuracyReport corrupted;
};

ProbeReport probe_eval(const DecodeFn& decode,
                       std::span<const ProbeExample> probes);

/// Aggregated timing over decode traces. Each step's latency is attributed
/// to the first token it emits (later tokens of the same step have zero
/// inter-token gap), which keeps TPOT == mean(ITL) definitionally.
struct EfficiencyReport {
  long total_tokens = 0;
  long total_steps = 0;
  double total_latency_us = 0.0;
  double tpot_us = 0.0;
  std::vector<double> itl_us;
  double throughput_tps = 0.0;  // output tokens per second
  double mean_latency_per_request_us = 0.0;
  long drafts_proposed = 0;
  long drafts_accepted = 0;
  double acceptance_rate = 0.0;
};

EfficiencyReport efficiency(std::span<const DecodeTrace> traces);

std::vector<int> strip_eos(std::span<const int> tokens);

}  // namespace ptp
