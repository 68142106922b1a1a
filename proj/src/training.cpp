// Copyright (c) 2026 ptp contributors
// SPDX-License-Identifier: Apache-2.0

#include "ptp/training.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>

#include "ptp/parallel.hpp"
#include "ptp/rng.hpp"

namespace ptp {

namespace {

struct SlotCounts {
  long ntp = 0;
  long reg = 0;
};

SlotCounts count_slots(const TrainingBatch& batch) {
  SlotCounts counts;
  for (const auto& row : batch.rows) {
    for (LossKind kind : row.loss_kinds) {
      if (kind == LossKind::kNtp) ++counts.ntp;
      if (kind == LossKind::kReg) ++counts.reg;
    }
  }
  return counts;
}

double slot_nll(const Eigen::MatrixXd& logits, int slot, int target) {
  const auto row = logits.row(slot);
  const double mx = row.maxCoeff();
  const double lse = mx + std::log((row.array() - mx).exp().sum());
  return lse - row(target);
}

double kind_loss(const BatchLogits& logits, const TrainingBatch& batch,
                 LossKind kind, long* slots, bool* has) {
  if (static_cast<int>(logits.size()) != batch.size()) {
    throw std::invalid_argument("logits/batch row count mismatch");
  }
  double sum = 0.0;
  long count = 0;
  for (int r = 0; r < batch.size(); ++r) {
    const auto& row = batch.rows[r];
    for (int s = 0; s < row.size(); ++s) {
      if (row.loss_kinds[s] != kind) continue;
      sum += slot_nll(logits[r], s, row.target_ids[s]);
      ++count;
    }
  }
  if (slots) *slots = count;
  if (has) *has = count > 0;
  return count > 0 ? sum / static_cast<double>(count) : 0.0;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("alpha must lie in (0,1], 1 = NTP baseline");
  }
  if (lr <= 0.0) throw std::invalid_argument("learning rate must be positive");
  if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (steps < 0 || epochs < 0 || (steps == 0 && epochs == 0)) {
    throw std::invalid_argument("need a positive step or epoch budget");
  }
  registers.validate();
}

BatchLogits forward_batch(const ModelParams& params, const TrainingBatch& batch,
                          int workers) {
  BatchLogits logits(batch.size());
  parallel_slices(batch.size(), workers, [&](int, int begin, int end) {
    for (int r = begin; r < end; ++r) {
      logits[r] = forward(params, batch.rows[r].token_ids,
                          batch.rows[r].position_ids, batch.masks[r]);
    }
  });
  return logits;
}

double ntp_loss(const BatchLogits& logits, const TrainingBatch& batch,
                long* slots, bool* has) {
  return kind_loss(logits, batch, LossKind::kNtp, slots, has);
}

double reg_loss(const BatchLogits& logits, const TrainingBatch& batch,
                long* slots, bool* has) {
  return kind_loss(logits, batch, LossKind::kReg, slots, has);
}

double ptp_loss(double ntp, double reg, double alpha) {
  return alpha * ntp + (1.0 - alpha) * reg;
}

LossBreakdown loss_breakdown(const BatchLogits& logits,
                             const TrainingBatch& batch, double alpha) {
  LossBreakdown out;
  out.ntp = ntp_loss(logits, batch, &out.ntp_slots, &out.has_ntp);
  out.reg = reg_loss(logits, batch, &out.reg_slots, &out.has_reg);
  out.total = ptp_loss(out.ntp, out.reg, alpha);
  return out;
}

LossBreakdown evaluate_loss(const ModelParams& params,
                            const TrainingBatch& batch, double alpha,
                            int workers) {
  return loss_breakdown(forward_batch(params, batch, workers), batch, alpha);
}

LossBreakdown compute_gradients(const ModelParams& params,
                                const TrainingBatch& batch, double alpha,
                                int workers, ModelParams& grads) {
  const SlotCounts counts = count_slots(batch);
  const double ntp_w = counts.ntp > 0 ? alpha / counts.ntp : 0.0;
  const double reg_w = counts.reg > 0 ? (1.0 - alpha) / counts.reg : 0.0;

  workers = std::max(1, std::min(workers, batch.size()));
  std::vector<ModelParams> worker_grads;
  std::vector<double> worker_ntp(workers, 0.0), worker_reg(workers, 0.0);
  worker_grads.reserve(workers);
  for (int w = 0; w < workers; ++w) worker_grads.push_back(zeros_like(params));

  parallel_slices(batch.size(), workers, [&](int w, int begin, int end) {
    Activations acts;
    for (int r = begin; r < end; ++r) {
      const AugmentedSequence& row = batch.rows[r];
      const Eigen::MatrixXd logits =
          forward(params, row.token_ids, row.position_ids, batch.masks[r], &acts);
      Eigen::MatrixXd dlogits =
          Eigen::MatrixXd::Zero(logits.rows(), logits.cols());
      for (int s = 0; s < row.size(); ++s) {
        const LossKind kind = row.loss_kinds[s];
        if (kind == LossKind::kNone) continue;
        const int target = row.target_ids[s];
        const auto lrow = logits.row(s);
        const double mx = lrow.maxCoeff();
        Eigen::ArrayXd probs = (lrow.array() - mx).exp();
        probs /= probs.sum();
        const double nll = -std::log(probs(target));
        const double w_slot = kind == LossKind::kNtp ? ntp_w : reg_w;
        (kind == LossKind::kNtp ? worker_ntp : worker_reg)[w] += nll;
        if (w_slot != 0.0) {
          dlogits.row(s) = (w_slot * probs).matrix().transpose();
          dlogits(s, target) -= w_slot;
        }
      }
      backward(params, acts, dlogits, worker_grads[w]);
    }
  });

  // ordered reduction over worker accumulators
  grads = std::move(worker_grads[0]);
  std::vector<std::pair<double*, size_t>> dst;
  visit_tensors(grads,
                [&dst](const std::string&, double* data, int rows, int cols) {
                  dst.emplace_back(data, static_cast<size_t>(rows) * cols);
                });
  for (int w = 1; w < workers; ++w) {
    size_t idx = 0;
    visit_tensors(worker_grads[w], [&dst, &idx](const std::string&,
                                                double* data, int rows,
                                                int cols) {
      const size_t n = static_cast<size_t>(rows) * cols;
      for (size_t i = 0; i < n; ++i) dst[idx].first[i] += data[i];
      ++idx;
    });
  }

  LossBreakdown out;
  double ntp_sum = 0.0, reg_sum = 0.0;
  for (int w = 0; w < workers; ++w) {
    ntp_sum += worker_ntp[w];
    reg_sum += worker_reg[w];
  }
  out.ntp_slots = counts.ntp;
  out.reg_slots = counts.reg;
  out.has_ntp = counts.ntp > 0;
  out.has_reg = counts.reg > 0;
  out.ntp = counts.ntp > 0 ? ntp_sum / counts.ntp : 0.0;
  out.reg = counts.reg > 0 ? reg_sum / counts.reg : 0.0;
  out.total = ptp_loss(out.ntp, out.reg, alpha);
  return out;
}

AdamOptimizer::AdamOptimizer(const ModelParams& params, double beta1,
                             double beta2, double eps)
    : m_(zeros_like(params)), v_(zeros_like(params)), beta1_(beta1),
      beta2_(beta2), eps_(eps) {}

void AdamOptimizer::step(ModelParams& params, const ModelParams& grads,
                         double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));

  std::vector<std::pair<double*, size_t>> p, m, v;
  std::vector<std::pair<const double*, size_t>> g;
  visit_tensors(params, [&p](const std::string&, double* d, int r, int c) {
    p.emplace_back(d, static_cast<size_t>(r) * c);
  });
  visit_tensors(m_, [&m](const std::string&, double* d, int r, int c) {
    m.emplace_back(d, static_cast<size_t>(r) * c);
  });
  visit_tensors(v_, [&v](const std::string&, double* d, int r, int c) {
    v.emplace_back(d, static_cast<size_t>(r) * c);
  });
  visit_tensors(grads,
                [&g](const std::string&, const double* d, int r, int c) {
                  g.emplace_back(d, static_cast<size_t>(r) * c);
                });

  for (size_t t = 0; t < p.size(); ++t) {
    double* pd = p[t].first;
    double* md = m[t].first;
    double* vd = v[t].first;
    const double* gd = g[t].first;
    const size_t n = p[t].second;
    for (size_t i = 0; i < n; ++i) {
      md[i] = beta1_ * md[i] + (1.0 - beta1_) * gd[i];
      vd[i] = beta2_ * vd[i] + (1.0 - beta2_) * gd[i] * gd[i];
      const double mhat = md[i] / bc1;
      const double vhat = vd[i] / bc2;
      pd[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

TrainResult train(ModelParams& params,
                  std::span<const TranscriptionExample> corpus,
                  const TrainConfig& cfg, std::ostream* trajectory_log,
                  const TrainHooks& hooks) {
  cfg.validate();
  if (corpus.empty()) throw std::invalid_argument("corpus must be nonempty");

  // Length-bucketed batches: indices sorted by augmented length so padding
  // inside a batch stays small; batch order is reshuffled every epoch.
  const int n = static_cast<int>(corpus.size());
  const int reg_per_gap =
      cfg.registers.layout == RegisterLayout::kInterleaved ? 1 : cfg.registers.n;
  auto aug_len = [&](int i) {
    const int prompt = static_cast<int>(corpus[i].prompt_tokens.size());
    const int l = static_cast<int>(corpus[i].answer_tokens.size());
    return prompt + l + reg_per_gap * (l - 1);
  };
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const int la = aug_len(a), lb = aug_len(b);
    return la != lb ? la < lb : a < b;
  });
  std::vector<std::pair<int, int>> buckets;  // [begin, end) into `order`
  for (int begin = 0; begin < n; begin += cfg.batch_size) {
    buckets.emplace_back(begin, std::min(n, begin + cfg.batch_size));
  }

  const int steps_per_epoch = static_cast<int>(buckets.size());
  const int total_steps =
      cfg.steps > 0 ? cfg.steps : cfg.epochs * steps_per_epoch;

  auto rng = make_rng(cfg.seed, "train.shuffle");
  std::vector<int> bucket_order(buckets.size());
  std::iota(bucket_order.begin(), bucket_order.end(), 0);

  AdamOptimizer adam(params, cfg.beta1, cfg.beta2, cfg.adam_eps);
  TrainResult result;
  result.trajectory.reserve(total_steps);
  ModelParams grads = zeros_like(params);

  int in_epoch = steps_per_epoch;  // force a shuffle before the first step
  for (int step = 0; step < total_steps; ++step) {
    if (in_epoch == steps_per_epoch) {
      std::shuffle(bucket_order.begin(), bucket_order.end(), rng);
      in_epoch = 0;
    }
    const auto [begin, end] = buckets[bucket_order[in_epoch++]];
    std::vector<TranscriptionExample> members;
    members.reserve(end - begin);
    int max_len = 0;
    for (int i = begin; i < end; ++i) {
      members.push_back(corpus[order[i]]);
      max_len = std::max(max_len, aug_len(order[i]));
    }
    const TrainingBatch batch = pack_batch(members, cfg.registers, max_len);
    if (!batch.skipped.empty()) {
      throw TrainingError("batch packing unexpectedly skipped examples");
    }

    const LossBreakdown loss =
        compute_gradients(params, batch, cfg.alpha, cfg.workers, grads);
    if (!std::isfinite(loss.total) || !std::isfinite(loss.ntp) ||
        !std::isfinite(loss.reg)) {
      std::ostringstream diag;
      diag << "non-finite loss at step " << step << ": ntp=" << loss.ntp
           << " reg=" << loss.reg << " total=" << loss.total;
      throw TrainingError(diag.str());
    }
    adam.step(params, grads, cfg.lr);
    result.trajectory.push_back(loss);
    if (trajectory_log) {
      (*trajectory_log) << step << ' ' << loss.ntp << ' ' << loss.reg << ' '
                        << loss.total << ' ' << cfg.lr << '\n';
    }
    if (hooks.on_checkpoint && cfg.checkpoint_every > 0 &&
        (step + 1) % cfg.checkpoint_every == 0) {
      hooks.on_checkpoint(step + 1, params);
    }
  }
  return result;
}

GradCheckResult grad_check(const ModelParams& params, const TrainingBatch& batch,
                           double alpha, int samples, double eps,
                           std::uint64_t seed) {
  ModelParams h = params;  // mutable copy for the ±eps probes
  ModelParams analytic = zeros_like(params);
  compute_gradients(params, batch, alpha, 1, analytic);

  std::vector<std::pair<double*, size_t>> views;
  visit_tensors(h, [&views](const std::string&, double* d, int r, int c) {
    views.emplace_back(d, static_cast<size_t>(r) * c);
  });
  std::vector<std::pair<const double*, size_t>> grad_views;
  visit_tensors(analytic,
                [&grad_views](const std::string&, const double* d, int r, int c) {
                  grad_views.emplace_back(d, static_cast<size_t>(r) * c);
                });
  size_t total = 0;
  for (const auto& [ptr, len] : views) total += len;

  auto rng = make_rng(seed, "gradcheck.sample");
  std::uniform_int_distribution<size_t> pick(0, total - 1);

  GradCheckResult result;
  result.samples = samples;
  for (int s = 0; s < samples; ++s) {
    size_t flat = pick(rng);
    size_t tensor = 0;
    while (flat >= views[tensor].second) {
      flat -= views[tensor].second;
      ++tensor;
    }
    double* coord = views[tensor].first + flat;
    const double saved = *coord;
    *coord = saved + eps;
    const double up = evaluate_loss(h, batch, alpha, 1).total;
    *coord = saved - eps;
    const double down = evaluate_loss(h, batch, alpha, 1).total;
    *coord = saved;

    const double numeric = (up - down) / (2.0 * eps);
    const double exact = grad_views[tensor].first[flat];
    const double denom =
        std::max({std::abs(numeric), std::abs(exact), 1e-6});
    result.max_rel_err =
        std::max(result.max_rel_err, std::abs(numeric - exact) / denom);
  }
  return result;
}

}  // namespace ptp
