// Copyright (c) 2026 ptp contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "ptp/model.hpp"
#include "ptp/sequence.hpp"

namespace ptp {

struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Per-step loss decomposition. total == alpha*ntp + (1-alpha)*reg always;
/// a term with no contributing slots is reported as 0 with its flag cleared.
struct LossBreakdown {
  double ntp = 0.0;
  double reg = 0.0;
  double total = 0.0;
  long ntp_slots = 0;
  long reg_slots = 0;
  bool has_ntp = false;
  bool has_reg = false;
};

struct TrainConfig {
  double alpha = 0.5;  // relative weight of the two loss terms
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int epochs = 1;
  int steps = 0;  // > 0 overrides epochs
  int batch_size = 32;
  std::uint64_t seed = 0;
  RegisterConfig registers;
  int workers = 1;
  int checkpoint_every = 0;  // 0 disables the checkpoint hook

  /// alpha must lie in (0,1); alpha == 1 is the NTP-only baseline and
  /// disables the register term.
  void validate() const;
};

using BatchLogits = std::vector<Eigen::MatrixXd>;  // one slots×vocab block per row

BatchLogits forward_batch(const ModelParams& params, const TrainingBatch& batch,
                          int workers = 1);

/// Mean negative log-likelihood over slots of the given kind; ignored slots
/// never contribute. Zero contributing slots yields 0 with *has == false.
double ntp_loss(const BatchLogits& logits, const TrainingBatch& batch,
                long* slots = nullptr, bool* has = nullptr);
double reg_loss(const BatchLogits& logits, const TrainingBatch& batch,
                long* slots = nullptr, bool* has = nullptr);
double ptp_loss(double ntp, double reg, double alpha);

LossBreakdown loss_breakdown(const BatchLogits& logits,
                             const TrainingBatch& batch, double alpha);
LossBreakdown evaluate_loss(const ModelParams& params,
                            const TrainingBatch& batch, double alpha,
                            int workers = 1);

/// One forward/backward over the batch. Gradients of the composite loss are
/// written into `grads` (zeroed first). Worker reduction is ordered, so the
/// result is reproducible for a fixed worker count.
LossBreakdown compute_gradients(const ModelParams& params,
                                const TrainingBatch& batch, double alpha,
                                int workers, ModelParams& grads);

class AdamOptimizer {
 public:
  AdamOptimizer(const ModelParams& params, double beta1, double beta2,
                double eps);
  void step(ModelParams& params, const ModelParams& grads, double lr);
  long steps_taken() const { return t_; }

 private:
  ModelParams m_, v_;
  double beta1_, beta2_, eps_;
  long t_ = 0;
};

struct TrainHooks {
  std::function<void(int step, const ModelParams& params)> on_checkpoint;
};

struct TrainResult {
  std::vector<LossBreakdown> trajectory;  // one entry per optimizer step
};

/// Optimizes params in place over the corpus. Batches are length-bucketed
/// (deterministic) and their order reshuffled each epoch from the config
/// seed. Aborts with TrainingError on a non-finite loss. The trajectory log,
/// when given, receives one `step ntp reg total lr` line per step.
TrainResult train(ModelParams& params,
                  std::span<const TranscriptionExample> corpus,
                  const TrainConfig& cfg, std::ostream* trajectory_log = nullptr,
                  const TrainHooks& hooks = {});

struct GradCheckResult {
  double max_rel_err = 0.0;
  int samples = 0;
};

/// Central-difference check of the analytic gradient on randomly sampled
/// parameter coordinates. Relative error uses a small floor so coordinates
/// with near-zero gradient do not amplify finite-difference noise.
GradCheckResult grad_check(const ModelParams& params, const TrainingBatch& batch,
                           double alpha, int samples = 200, double eps = 1e-5,
                           std::uint64_t seed = 0);

}  // namespace ptp
