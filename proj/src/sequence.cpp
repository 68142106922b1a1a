// Copyright (c) 2026 ptp contributors
// SPDX-License-Identifier: Apache-2.0

#include "ptp/sequence.hpp"

#include <algorithm>
#include <ostream>
#include <stdexcept>

namespace ptp {

void RegisterConfig::validate() const {
  if (n < 0 || n > kMaxN) {
    throw std::invalid_argument("register count n must lie in [0, " +
                                std::to_string(kMaxN) + "]");
  }
}

char role_char(SlotRole role) {
  switch (role) {
    case SlotRole::kPrompt:
      return 'P';
    case SlotRole::kRegular:
      return 'T';
    case SlotRole::kRegister:
      return 'R';
    case SlotRole::kPad:
      return '-';
  }
  return '?';
}

AttentionMask causal_mask(int size) {
  AttentionMask mask(size);
  for (int q = 0; q < size; ++q) {
    for (int k = 0; k <= q; ++k) mask.set(q, k, true);
  }
  return mask;
}

namespace {

void validate_answer(std::span<const int> answer) {
  if (answer.empty() || answer.back() != Vocab::kEos) {
    throw std::invalid_argument("answer must be nonempty and end with EOS");
  }
  for (size_t i = 0; i + 1 < answer.size(); ++i) {
    if (answer[i] == Vocab::kEos) {
      throw std::invalid_argument("answer must contain exactly one EOS");
    }
  }
}

AugmentedSequence make_base(std::span<const int> answer, int prompt_len) {
  if (prompt_len < 0) throw std::invalid_argument("prompt_len must be >= 0");
  validate_answer(answer);
  AugmentedSequence aug;
  aug.prompt_len = prompt_len;
  aug.answer_len = static_cast<int>(answer.size());
  for (int p = 0; p < prompt_len; ++p) {
    aug.token_ids.push_back(Vocab::kPad);  // placeholder until attach_prompt
    aug.roles.push_back(SlotRole::kPrompt);
    aug.groups.push_back(0);
    aug.offsets.push_back(0);
    aug.position_ids.push_back(p + 1);
  }
  return aug;
}

void push_regular(AugmentedSequence& aug, int token, int answer_index) {
  aug.token_ids.push_back(token);
  aug.roles.push_back(SlotRole::kRegular);
  aug.groups.push_back(0);
  aug.offsets.push_back(0);
  aug.position_ids.push_back(aug.prompt_len + answer_index);
}

void push_register(AugmentedSequence& aug, int group, int offset) {
  aug.token_ids.push_back(Vocab::kRegister);
  aug.roles.push_back(SlotRole::kRegister);
  aug.groups.push_back(group);
  aug.offsets.push_back(offset);
  aug.position_ids.push_back(aug.prompt_len + group + offset);
}

}  // namespace

AugmentedSequence interleave(std::span<const int> answer,
                             const RegisterConfig& cfg, int prompt_len) {
  cfg.validate();
  if (cfg.layout == RegisterLayout::kInterleaved) {
    return build_interleaved(answer, cfg.n, prompt_len);
  }
  AugmentedSequence aug = make_base(answer, prompt_len);
  const int l = aug.answer_len;
  for (int i = 1; i <= l; ++i) {
    push_regular(aug, answer[i - 1], i);
    if (i == l) break;  // no registers after the final token
    for (int j = 1; j <= cfg.n; ++j) push_register(aug, i, j);
  }
  return aug;
}

AugmentedSequence build_interleaved(std::span<const int> answer, int n,
                                    int prompt_len) {
  if (n < 0 || n > RegisterConfig::kMaxN) {
    throw std::invalid_argument("register count n out of range");
  }
  AugmentedSequence aug = make_base(answer, prompt_len);
  const int l = aug.answer_len;
  for (int i = 1; i <= l; ++i) {
    push_regular(aug, answer[i - 1], i);
    if (i == l || n == 0) continue;
    const int offset = (i - 1) % n + 1;  // round-robin over [1, n]
    push_register(aug, i, offset);
  }
  return aug;
}

void attach_prompt(AugmentedSequence& aug, std::span<const int> prompt) {
  if (static_cast<int>(prompt.size()) != aug.prompt_len) {
    throw std::invalid_argument("prompt length does not match prompt_len");
  }
  for (int p = 0; p < aug.prompt_len; ++p) aug.token_ids[p] = prompt[p];
}

void build_targets(AugmentedSequence& aug, std::span<const int> answer) {
  validate_answer(answer);
  if (static_cast<int>(answer.size()) != aug.answer_len) {
    throw std::invalid_argument("answer length does not match the sequence");
  }
  const int l = aug.answer_len;
  const int total = aug.size();
  aug.target_ids.assign(total, kIgnoreTarget);
  aug.loss_kinds.assign(total, LossKind::kNone);

  int answer_index = 0;  // 1-based index of the regular slot most recently seen
  for (int s = 0; s < total; ++s) {
    switch (aug.roles[s]) {
      case SlotRole::kPrompt:
        // only the final prompt slot trains (on the first answer token)
        if (s == aug.prompt_len - 1) {
          aug.target_ids[s] = answer[0];
          aug.loss_kinds[s] = LossKind::kNtp;
        }
        break;
      case SlotRole::kRegular:
        ++answer_index;
        if (answer_index < l) {
          aug.target_ids[s] = answer[answer_index];  // x_{i+1}
          aug.loss_kinds[s] = LossKind::kNtp;
        }
        break;
      case SlotRole::kRegister: {
        const int i = aug.groups[s];
        const int j = aug.offsets[s];
        const int t = std::min(i + j + 1, l);  // clamp to the final token
        aug.target_ids[s] = answer[t - 1];
        aug.loss_kinds[s] = LossKind::kReg;
        break;
      }
      case SlotRole::kPad:
        break;
    }
  }
}

AttentionMask build_mask(const AugmentedSequence& aug) {
  const int total = aug.size();
  AttentionMask mask(total);
  for (int q = 0; q < total; ++q) {
    if (aug.roles[q] == SlotRole::kPad) continue;  // attend nothing
    for (int k = 0; k <= q; ++k) {
      switch (aug.roles[k]) {
        case SlotRole::kPrompt:
        case SlotRole::kRegular:
          mask.set(q, k, true);
          break;
        case SlotRole::kRegister:
          mask.set(q, k, aug.roles[q] == SlotRole::kRegister &&
                             aug.groups[q] == aug.groups[k]);
          break;
        case SlotRole::kPad:
          break;
      }
    }
  }
  return mask;
}

AugmentedSequence build_training_sequence(const TranscriptionExample& example,
                                          const RegisterConfig& cfg) {
  AugmentedSequence aug =
      interleave(example.answer_tokens, cfg,
                 static_cast<int>(example.prompt_tokens.size()));
  attach_prompt(aug, example.prompt_tokens);
  build_targets(aug, example.answer_tokens);
  return aug;
}

TrainingBatch pack_batch(std::span<const TranscriptionExample> examples,
                         const RegisterConfig& cfg, int max_len) {
  TrainingBatch batch;
  batch.max_len = max_len;
  for (size_t i = 0; i < examples.size(); ++i) {
    AugmentedSequence aug = build_training_sequence(examples[i], cfg);
    if (aug.size() > max_len) {
      batch.skipped.push_back(static_cast<int>(i));
      continue;
    }
    batch.lengths.push_back(aug.size());
    AttentionMask mask = build_mask(aug);
    // pad in place: PAD token, ignored target, position 0, attend-nothing
    AttentionMask padded(max_len);
    for (int q = 0; q < aug.size(); ++q) {
      for (int k = 0; k <= q; ++k) padded.set(q, k, mask.allowed(q, k));
    }
    while (aug.size() < max_len) {
      aug.token_ids.push_back(Vocab::kPad);
      aug.roles.push_back(SlotRole::kPad);
      aug.groups.push_back(0);
      aug.offsets.push_back(0);
      aug.position_ids.push_back(0);
      aug.target_ids.push_back(kIgnoreTarget);
      aug.loss_kinds.push_back(LossKind::kNone);
    }
    batch.rows.push_back(std::move(aug));
    batch.masks.push_back(std::move(padded));
  }
  return batch;
}

void dump_sequence(const AugmentedSequence& aug, const AttentionMask& mask,
                   std::ostream& os) {
  for (int s = 0; s < aug.size(); ++s) {
    os << s << ' ' << role_char(aug.roles[s]) << ' ' << aug.token_ids[s] << ' '
       << (aug.target_ids.empty() ? kIgnoreTarget : aug.target_ids[s]) << ' '
       << aug.position_ids[s] << '\n';
  }
  for (int q = 0; q < mask.n; ++q) {
    for (int k = 0; k < mask.n; ++k) os << (mask.allowed(q, k) ? '1' : '0');
    os << '\n';
  }
}

void dump_batch(const TrainingBatch& batch, std::ostream& os) {
  for (int r = 0; r < batch.size(); ++r) {
    os << "example " << r << " len " << batch.lengths[r] << '\n';
    dump_sequence(batch.rows[r], batch.masks[r], os);
  }
  if (!batch.skipped.empty()) {
    os << "skipped";
    for (int idx : batch.skipped) os << ' ' << idx;
    os << '\n';
  }
}

}  // namespace ptp
