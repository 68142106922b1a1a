// Copyright (c) 2026 ptp contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <vector>

#include "ptp/vocab.hpp"

namespace ptp {

/// Thrown when a requested grid exceeds the configured sequence budget.
struct BudgetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A synthetic transcription task: the prompt is a symbol grid serialized
/// row-major with a SEP after every row plus one trailing SEP; the answer is
/// the grid's symbols in reading order terminated by EOS. The answer is a
/// pure function of the prompt, which is what makes the task a
/// high-certainty transcription.
struct TranscriptionExample {
  std::vector<int> prompt_tokens;
  std::vector<int> answer_tokens;
  std::uint64_t seed = 0;
};

enum class CorruptionKind { kDelete, kSubstitute };

struct CorruptionOp {
  int position = 0;  // index into the clean prompt
  CorruptionKind kind = CorruptionKind::kSubstitute;
  int replacement = -1;  // -1 for deletions
};

/// A hallucination probe: the ground truth for the corrupted prompt is the
/// transcription of the corruption itself. A model that "fixes" the
/// corruption back to the clean text is hallucinating.
struct ProbeExample {
  TranscriptionExample clean;
  std::vector<int> corrupted_prompt;
  std::vector<int> corrupted_answer;
  std::vector<CorruptionOp> ops;
};

struct ShapeRange {
  int rows_min = 1;
  int rows_max = 2;
  int cols_min = 2;
  int cols_max = 4;
};

inline constexpr int kDefaultMaxCells = 4096;

/// Pure symbol extraction: grid symbols in prompt order with SEPs dropped,
/// terminated by EOS. Defined for any prompt-shaped sequence, which is what
/// lets probe ground truth be recomputed from a corrupted prompt.
std::vector<int> transcribe(std::span<const int> prompt, const Vocab& vocab);

TranscriptionExample gen_example(std::uint64_t seed, int rows, int cols,
                                 const Vocab& vocab,
                                 int max_cells = kDefaultMaxCells);

/// count examples seeded base_seed + i, shapes drawn per-example.
std::vector<TranscriptionExample> gen_corpus(int count, const ShapeRange& shape,
                                             std::uint64_t base_seed,
                                             const Vocab& vocab,
                                             int max_cells = kDefaultMaxCells);

enum class CorruptionMenu { kBoth, kDeleteOnly, kSubstituteOnly };

/// Corrupts symbol positions of the prompt at the given expected rate.
/// SEP positions are never touched (and EOS never occurs in prompts), so the
/// grid structure of the probe stays parseable.
ProbeExample corrupt(const TranscriptionExample& example, double rate,
                     std::uint64_t seed, const Vocab& vocab,
                     CorruptionMenu menu = CorruptionMenu::kBoth);

/// Single-pass application of ops (positions refer to the clean prompt).
std::vector<int> apply_corruption(std::span<const int> clean_prompt,
                                  std::span<const CorruptionOp> ops);

/// One example per line, fields tab-separated, token ids space-separated
/// decimal. Probe files carry a third column of `pos:kind:replacement`
/// triples (kind `s` with the replacement id, or `d:-` for deletions); the
/// corrupted prompt and its ground truth are reconstructed on load.
void save_corpus(std::span<const TranscriptionExample> corpus, std::ostream& os);
std::vector<TranscriptionExample> load_corpus(std::istream& is, const Vocab& vocab);
void save_probes(std::span<const ProbeExample> probes, std::ostream& os);
std::vector<ProbeExample> load_probes(std::istream& is, const Vocab& vocab);

void save_corpus_file(std::span<const TranscriptionExample> corpus, const std::string& path);
std::vector<TranscriptionExample> load_corpus_file(const std::string& path, const Vocab& vocab);
void save_probes_file(std::span<const ProbeExample> probes, const std::string& path);
std::vector<ProbeExample> load_probes_file(const std::string& path, const Vocab& vocab);

}  // namespace ptp
