// Copyright (c) 2026 ptp contributors
// SPDX-License-Identifier: Apache-2.0

#include "ptp/inference.hpp"

#include <chrono>
#include <numeric>
#include <stdexcept>

namespace ptp {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_us(Clock::time_point t0, Clock::time_point t1) {
  return std::chrono::duration<double, std::micro>(t1 - t0).count();
}

std::vector<int> iota_positions(int first, int count) {
  std::vector<int> pos(count);
  std::iota(pos.begin(), pos.end(), first);
  return pos;
}

void record_step(DecodeTrace& trace, int committed, double latency_us,
                 bool timing) {
  ++trace.step_count;
  trace.committed_per_step.push_back(committed);
  trace.step_latency_us.push_back(timing ? latency_us : 0.0);
}

}  // namespace

void DecodeConfig::validate() const {
  if (max_new_tokens < 1) {
    throw std::invalid_argument("max_new_tokens must be >= 1");
  }
  if (mode == DecodeMode::kNtp) {
    if (n != 0) throw std::invalid_argument("ntp mode forces n = 0");
  } else {
    if (n < 1) throw std::invalid_argument("parallel modes need n >= 1");
  }
}

double DecodeTrace::total_latency_us() const {
  return std::accumulate(step_latency_us.begin(), step_latency_us.end(), 0.0);
}

double DecodeTrace::acceptance_rate() const {
  return drafts_proposed > 0
             ? static_cast<double>(drafts_accepted) / drafts_proposed
             : 0.0;
}

Eigen::MatrixXd ModelBackend::forward_chunk(std::span<const int> token_ids,
                                            std::span<const int> position_ids) {
  return forward(*params_, token_ids, position_ids, cache_);
}

void ModelBackend::drop_tail(int count) { ptp::drop_tail(cache_, count); }

int greedy_pick(const Eigen::MatrixXd& logits, int row, const Vocab& vocab) {
  int best = -1;
  double best_val = 0.0;
  for (int id = 0; id < vocab.size; ++id) {
    if (id == Vocab::kPad || id == Vocab::kBos || id == Vocab::kRegister) {
      continue;
    }
    const double v = logits(row, id);
    if (best < 0 || v > best_val) {
      best = id;
      best_val = v;
    }
  }
  return best;
}

DecodeTrace run_ntp(DecodeBackend& backend, const Vocab& vocab,
                    std::span<const int> prompt, const DecodeConfig& cfg,
                    const DecodeStepHook& hook) {
  cfg.validate();
  if (prompt.empty()) throw std::invalid_argument("prompt must be nonempty");
  DecodeTrace trace;
  std::vector<int> feed(prompt.begin(), prompt.end());
  int feed_pos0 = 1;

  while (static_cast<int>(trace.tokens.size()) < cfg.max_new_tokens) {
    const auto positions =
        iota_positions(feed_pos0, static_cast<int>(feed.size()));
    const auto t0 = Clock::now();
    const Eigen::MatrixXd logits = backend.forward_chunk(feed, positions);
    const auto t1 = Clock::now();

    const int token =
        greedy_pick(logits, static_cast<int>(feed.size()) - 1, vocab);
    trace.tokens.push_back(token);
    record_step(trace, 1, elapsed_us(t0, t1), cfg.collect_timing);
    if (hook) hook(trace.step_count, trace.tokens, nullptr);
    if (token == Vocab::kEos) {
      trace.hit_eos = true;
      break;
    }
    feed_pos0 += static_cast<int>(feed.size());
    feed.assign(1, token);
  }
  return trace;
}

DecodeTrace run_ptp(DecodeBackend& backend, const Vocab& vocab,
                    std::span<const int> prompt, const DecodeConfig& cfg,
                    const DecodeStepHook& hook) {
  cfg.validate();
  if (cfg.mode == DecodeMode::kNtp) {
    throw std::invalid_argument("run_ptp needs a parallel mode config");
  }
  if (prompt.empty()) throw std::invalid_argument("prompt must be nonempty");
  const int n = cfg.n;
  DecodeTrace trace;
  std::vector<int> feed(prompt.begin(), prompt.end());
  int feed_pos0 = 1;

  while (static_cast<int>(trace.tokens.size()) < cfg.max_new_tokens) {
    const int feed_len = static_cast<int>(feed.size());
    const int base_pos = feed_pos0 + feed_len - 1;  // last feed slot position
    std::vector<int> ids = feed;
    ids.insert(ids.end(), n, Vocab::kRegister);
    const auto positions = iota_positions(feed_pos0, feed_len + n);

    const auto t0 = Clock::now();
    const Eigen::MatrixXd logits = backend.forward_chunk(ids, positions);
    const auto t1 = Clock::now();

    // one regular prediction plus n register predictions, in slot order
    const int remaining = cfg.max_new_tokens - static_cast<int>(trace.tokens.size());
    const int take = std::min(n + 1, remaining);
    std::vector<int> step_tokens;
    for (int i = 0; i < take; ++i) {
      const int token = greedy_pick(logits, feed_len - 1 + i, vocab);
      step_tokens.push_back(token);
      if (token == Vocab::kEos) {
        trace.hit_eos = true;
        break;
      }
    }
    trace.tokens.insert(trace.tokens.end(), step_tokens.begin(),
                        step_tokens.end());

    if (cfg.cache_policy == CachePolicy::kReplace) {
      // register entries are speculative; real tokens rebuild them next step
      backend.drop_tail(n);
      ++trace.eviction_events;
      feed = step_tokens;
      feed_pos0 = base_pos + 1;
    } else {
      // register entries stay as stand-ins for all but the last commit
      feed.assign(1, step_tokens.back());
      feed_pos0 = base_pos + static_cast<int>(step_tokens.size());
    }

    record_step(trace, static_cast<int>(step_tokens.size()),
                elapsed_us(t0, t1), cfg.collect_timing);
    if (hook) {
      const auto* model = dynamic_cast<ModelBackend*>(&backend);
      hook(trace.step_count, trace.tokens, model ? &model->cache() : nullptr);
    }
    if (trace.hit_eos) break;
  }
  return trace;
}

DecodeTrace run_ptp_spec(DecodeBackend& backend, const Vocab& vocab,
                         std::span<const int> prompt, const DecodeConfig& cfg,
                         const DecodeStepHook& hook) {
  cfg.validate();
  if (cfg.mode != DecodeMode::kPtpSpec) {
    throw std::invalid_argument("run_ptp_spec needs mode = ptp_spec");
  }
  if (prompt.empty()) throw std::invalid_argument("prompt must be nonempty");
  const int n = cfg.n;
  DecodeTrace trace;
  std::vector<int> feed(prompt.begin(), prompt.end());
  std::vector<int> drafts;
  int feed_pos0 = 1;

  while (static_cast<int>(trace.tokens.size()) < cfg.max_new_tokens) {
    const int feed_len = static_cast<int>(feed.size());
    const int nd = static_cast<int>(drafts.size());
    const int base_pos = feed_pos0 + feed_len - 1;

    std::vector<int> ids = feed;
    ids.insert(ids.end(), drafts.begin(), drafts.end());
    ids.insert(ids.end(), n, Vocab::kRegister);
    const auto positions = iota_positions(feed_pos0, feed_len + nd + n);

    const auto t0 = Clock::now();
    const Eigen::MatrixXd logits = backend.forward_chunk(ids, positions);
    const auto t1 = Clock::now();

    // Walk drafts left to right against the greedy chain. Each slot's greedy
    // prediction is the true next token only while every token before it is
    // verified, so the walk stops at the first mismatch.
    std::vector<int> step_tokens;
    int accepted = 0;
    int cur = greedy_pick(logits, feed_len - 1, vocab);
    bool eos_in_chain = (cur == Vocab::kEos);
    while (!eos_in_chain && accepted < nd && drafts[accepted] == cur) {
      step_tokens.push_back(cur);
      cur = greedy_pick(logits, feed_len + accepted, vocab);
      ++accepted;
      eos_in_chain = (cur == Vocab::kEos);
    }
    step_tokens.push_back(cur);  // accepted prefix plus the first correction
    trace.drafts_proposed += nd;
    trace.drafts_accepted += accepted;
    const bool full_accept = (accepted == nd);

    // budget + EOS truncation
    const int remaining = cfg.max_new_tokens - static_cast<int>(trace.tokens.size());
    if (static_cast<int>(step_tokens.size()) > remaining) {
      step_tokens.resize(remaining);
    }
    for (size_t i = 0; i < step_tokens.size(); ++i) {
      if (step_tokens[i] == Vocab::kEos) {
        step_tokens.resize(i + 1);
        trace.hit_eos = true;
        break;
      }
    }
    trace.tokens.insert(trace.tokens.end(), step_tokens.begin(),
                        step_tokens.end());

    // Next drafts come from the registers, usable only when their whole
    // context was verified; otherwise their outputs are discarded unseen.
    std::vector<int> new_drafts;
    if (full_accept && !trace.hit_eos) {
      for (int j = 1; j <= n; ++j) {
        new_drafts.push_back(greedy_pick(logits, feed_len - 1 + nd + j, vocab));
      }
    }

    // Drop rejected draft entries and all register entries; accepted draft
    // entries are real tokens with verified context and stay.
    backend.drop_tail(nd - accepted + n);
    ++trace.eviction_events;

    record_step(trace, static_cast<int>(step_tokens.size()),
                elapsed_us(t0, t1), cfg.collect_timing);
    if (hook) {
      const auto* model = dynamic_cast<ModelBackend*>(&backend);
      hook(trace.step_count, trace.tokens, model ? &model->cache() : nullptr);
    }
    if (trace.hit_eos) break;

    feed.assign(1, step_tokens.back());
    feed_pos0 = base_pos + accepted + 1;
    drafts = std::move(new_drafts);
  }
  return trace;
}

DecodeTrace decode_ntp(const ModelParams& params, std::span<const int> prompt,
                       const DecodeConfig& cfg, const Vocab& vocab,
                       const DecodeStepHook& hook) {
  ModelBackend backend(params);
  return run_ntp(backend, vocab, prompt, cfg, hook);
}

DecodeTrace decode_ptp(const ModelParams& params, std::span<const int> prompt,
                       const DecodeConfig& cfg, const Vocab& vocab,
                       const DecodeStepHook& hook) {
  ModelBackend backend(params);
  return run_ptp(backend, vocab, prompt, cfg, hook);
}

DecodeTrace decode_ptp_spec(const ModelParams& params,
                            std::span<const int> prompt,
                            const DecodeConfig& cfg, const Vocab& vocab,
                            const DecodeStepHook& hook) {
  ModelBackend backend(params);
  return run_ptp_spec(backend, vocab, prompt, cfg, hook);
}

DecodeTrace decode(const ModelParams& params, std::span<const int> prompt,
                   const DecodeConfig& cfg, const Vocab& vocab,
                   const DecodeStepHook& hook) {
  switch (cfg.mode) {
    case DecodeMode::kNtp:
      return decode_ntp(params, prompt, cfg, vocab, hook);
    case DecodeMode::kPtp:
      return decode_ptp(params, prompt, cfg, vocab, hook);
    case DecodeMode::kPtpSpec:
      return decode_ptp_spec(params, prompt, cfg, vocab, hook);
  }
  throw std::invalid_argument("unknown decode mode");
}

SpeedupReport speedup(const DecodeTrace& parallel, const DecodeTrace& ntp) {
  SpeedupReport report;
  if (parallel.step_count == 0 || ntp.step_count == 0) return report;
  report.valid = true;
  report.step_ratio =
      static_cast<double>(ntp.step_count) / parallel.step_count;
  const double pt = parallel.total_latency_us();
  report.wallclock_ratio = pt > 0.0 ? ntp.total_latency_us() / pt : 0.0;
  return report;
}

}  // namespace ptp
