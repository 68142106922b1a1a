// Copyright (c) 2026 ptp contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <span>
#include <vector>

#include "ptp/model.hpp"
#include "ptp/vocab.hpp"

namespace ptp {

enum class DecodeMode { kNtp, kPtp, kPtpSpec };

/// kReplace evicts register cache entries after every step and rebuilds them
/// from the committed tokens; kKeep leaves the register entries in place as
/// stand-ins (the quality ablation).
enum class CachePolicy { kReplace, kKeep };

struct DecodeConfig {
  DecodeMode mode = DecodeMode::kNtp;
  int n = 0;  // registers appended per step
  int max_new_tokens = 256;
  CachePolicy cache_policy = CachePolicy::kReplace;
  bool collect_timing = true;

  void validate() const;  // ntp forces n == 0; parallel modes need n >= 1
};

struct DecodeTrace {
  std::vector<int> tokens;  // committed output; includes EOS when reached
  int step_count = 0;
  std::vector<int> committed_per_step;
  std::vector<double> step_latency_us;
  long drafts_proposed = 0;
  long drafts_accepted = 0;
  int eviction_events = 0;
  bool hit_eos = false;

  double total_latency_us() const;
  double acceptance_rate() const;  // 0 when nothing was proposed
};

/// Minimal surface the decode loops need. The production implementation
/// wraps ModelParams + KVCache; tests drive the same loops with scripted
/// logits.
class DecodeBackend {
 public:
  virtual ~DecodeBackend() = default;
  /// One forward pass over the new slots; returns logits, one row per slot.
  virtual Eigen::MatrixXd forward_chunk(std::span<const int> token_ids,
                                        std::span<const int> position_ids) = 0;
  /// Removes the trailing `count` context entries.
  virtual void drop_tail(int count) = 0;
  virtual int context_size() const = 0;
};

class ModelBackend final : public DecodeBackend {
 public:
  explicit ModelBackend(const ModelParams& params) : params_(&params) {}
  Eigen::MatrixXd forward_chunk(std::span<const int> token_ids,
                                std::span<const int> position_ids) override;
  void drop_tail(int count) override;
  int context_size() const override { return cache_.size(); }
  const KVCache& cache() const { return cache_; }

 private:
  const ModelParams* params_;
  KVCache cache_;
};

/// Fires after each step's cache cleanup; `cache` is null for non-model
/// backends.
using DecodeStepHook = std::function<void(
    int step, std::span<const int> committed, const KVCache* cache)>;

/// Greedy argmax restricted to emittable ids (PAD/BOS/REGISTER are
/// structural and never committed).
int greedy_pick(const Eigen::MatrixXd& logits, int row, const Vocab& vocab);

// Core loops over an abstract backend.
DecodeTrace run_ntp(DecodeBackend& backend, const Vocab& vocab,
                    std::span<const int> prompt, const DecodeConfig& cfg,
                    const DecodeStepHook& hook = {});
DecodeTrace run_ptp(DecodeBackend& backend, const Vocab& vocab,
                    std::span<const int> prompt, const DecodeConfig& cfg,
                    const DecodeStepHook& hook = {});
DecodeTrace run_ptp_spec(DecodeBackend& backend, const Vocab& vocab,
                         std::span<const int> prompt, const DecodeConfig& cfg,
                         const DecodeStepHook& hook = {});

// Model-level entry points.
DecodeTrace decode_ntp(const ModelParams& params, std::span<const int> prompt,
                       const DecodeConfig& cfg, const Vocab& vocab,
                       const DecodeStepHook& hook = {});
DecodeTrace decode_ptp(const ModelParams& params, std::span<const int> prompt,
                       const DecodeConfig& cfg, const Vocab& vocab,
                       const DecodeStepHook& hook = {});
DecodeTrace decode_ptp_spec(const ModelParams& params,
                            std::span<const int> prompt,
                            const DecodeConfig& cfg, const Vocab& vocab,
                            const DecodeStepHook& hook = {});
/// Dispatch on cfg.mode.
DecodeTrace decode(const ModelParams& params, std::span<const int> prompt,
                   const DecodeConfig& cfg, const Vocab& vocab,
                   const DecodeStepHook& hook = {});

struct SpeedupReport {
  double step_ratio = 0.0;       // ntp steps / parallel steps
  double wallclock_ratio = 0.0;  // ntp latency / parallel latency
  bool valid = false;            // false when a trace has zero steps
};

SpeedupReport speedup(const DecodeTrace& parallel, const DecodeTrace& ntp);

}  // namespace ptp
