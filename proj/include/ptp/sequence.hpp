// Copyright (c) 2026 ptp contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "ptp/corpus.hpp"
#include "ptp/vocab.hpp"

namespace ptp {

enum class RegisterLayout { kContinuous, kInterleaved };
enum class RegisterEmbedding { kShared, kDistinct };

/// How register slots are injected into training sequences. n is the group
/// size for the continuous layout; the interleaved layout places a single
/// register per gap and cycles its offset round-robin over [1, n].
struct RegisterConfig {
  static constexpr int kMaxN = 4;

  int n = 2;
  RegisterLayout layout = RegisterLayout::kContinuous;
  RegisterEmbedding embedding = RegisterEmbedding::kShared;

  void validate() const;
};

enum class SlotRole : std::uint8_t { kPrompt, kRegular, kRegister, kPad };
enum class LossKind : std::uint8_t { kNone, kNtp, kReg };

inline constexpr int kIgnoreTarget = -1;

char role_char(SlotRole role);

/// A training sequence with register slots injected. Parallel arrays, one
/// entry per slot. Register slots carry their group (the index of the answer
/// token they follow, 1-based) and offset j in [1, n]; both are 0 elsewhere.
struct AugmentedSequence {
  std::vector<int> token_ids;
  std::vector<SlotRole> roles;
  std::vector<int> groups;
  std::vector<int> offsets;
  std::vector<int> position_ids;
  std::vector<int> target_ids;
  std::vector<LossKind> loss_kinds;
  int prompt_len = 0;
  int answer_len = 0;

  int size() const { return static_cast<int>(token_ids.size()); }
};

/// Boolean attendance matrix: allowed(q, k) iff query slot q may attend key
/// slot k. Never allows attending forward of q; the diagonal is allowed for
/// every non-pad slot.
struct AttentionMask {
  int n = 0;
  std::vector<std::uint8_t> bits;  // row-major n*n

  AttentionMask() = default;
  explicit AttentionMask(int size) : n(size), bits(static_cast<size_t>(size) * size, 0) {}

  bool allowed(int q, int k) const {
    return bits[static_cast<size_t>(q) * n + k] != 0;
  }
  void set(int q, int k, bool v) {
    bits[static_cast<size_t>(q) * n + k] = v ? 1 : 0;
  }
};

AttentionMask causal_mask(int size);

/// Inserts n register slots after each answer token except the last and
/// assigns roles and position ids. Prompt slots get positions 1..prompt_len
/// and placeholder PAD token ids until attach_prompt supplies the real ones;
/// answer token x_i sits at position prompt_len + i and the j-th register
/// after it at prompt_len + i + j.
AugmentedSequence interleave(std::span<const int> answer,
                             const RegisterConfig& cfg, int prompt_len);

/// Single register per gap, offset cycling round-robin over [1, n].
AugmentedSequence build_interleaved(std::span<const int> answer, int n,
                                    int prompt_len);

void attach_prompt(AugmentedSequence& aug, std::span<const int> prompt);

/// Fills targets and loss kinds: answer slot x_i trains on x_{i+1}; the
/// register at offset j after x_i trains on x_{i+j+1} clamped to the final
/// answer token; the final answer slot and all prompt slots except the last
/// (which trains on x_1) are ignored.
void build_targets(AugmentedSequence& aug, std::span<const int> answer);

/// The modified causal mask: regular (and prompt) queries attend only
/// regular/prompt keys; register queries additionally attend registers of
/// their own group; distinct groups never interact. Pad slots attend nothing
/// and are attended by nothing.
AttentionMask build_mask(const AugmentedSequence& aug);

AugmentedSequence build_training_sequence(const TranscriptionExample& example,
                                          const RegisterConfig& cfg);

/// A batch padded to a common length. Pad slots carry PAD tokens, ignored
/// targets, position 0 and attend-nothing mask rows.
struct TrainingBatch {
  std::vector<AugmentedSequence> rows;
  std::vector<AttentionMask> masks;
  std::vector<int> lengths;
  std::vector<int> skipped;  // indices of examples longer than max_len
  int max_len = 0;

  int size() const { return static_cast<int>(rows.size()); }
};

TrainingBatch pack_batch(std::span<const TranscriptionExample> examples,
                         const RegisterConfig& cfg, int max_len);

/// Golden-file text format: per-slot rows `index role token target position`
/// followed by the mask as row-major 0/1 lines.
void dump_sequence(const AugmentedSequence& aug, const AttentionMask& mask,
                   std::ostream& os);
void dump_batch(const TrainingBatch& batch, std::ostream& os);

}  // namespace ptp
