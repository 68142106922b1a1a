// Copyright (c) 2026 ptp contributors
// SPDX-License-Identifier: Apache-2.0

#include "ptp/metrics.hpp"

#include <algorithm>
#include <numeric>

namespace ptp {

int edit_distance(std::span<const int> ref, std::span<const int> hyp) {
  const size_t n = ref.size();
  const size_t m = hyp.size();
  if (n == 0) return static_cast<int>(m);
  if (m == 0) return static_cast<int>(n);
  std::vector<int> prev(m + 1), cur(m + 1);
  std::iota(prev.begin(), prev.end(), 0);
  for (size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<int>(i);
    for (size_t j = 1; j <= m; ++j) {
      const int sub = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

int edit_distance(std::string_view ref, std::string_view hyp) {
  std::vector<int> a(ref.begin(), ref.end());
  std::vector<int> b(hyp.begin(), hyp.end());
  return edit_distance(a, b);
}

std::vector<int> strip_eos(std::span<const int> tokens) {
  std::vector<int> out(tokens.begin(), tokens.end());
  if (!out.empty() && out.back() == Vocab::kEos) out.pop_back();
  return out;
}

AccuracyReport score_pairs(std::span<const std::vector<int>> refs,
                           std::span<const std::vector<int>> hyps) {
  if (refs.size() != hyps.size()) {
    throw std::invalid_argument("reference/hypothesis count mismatch");
  }
  AccuracyReport report;
  report.per_example.reserve(refs.size());
  double dist_sum = 0.0, norm_sum = 0.0;
  long exact = 0;
  for (size_t i = 0; i < refs.size(); ++i) {
    ExampleScore score;
    score.ref_len = static_cast<int>(refs[i].size());
    score.hyp_len = static_cast<int>(hyps[i].size());
    score.distance = edit_distance(refs[i], hyps[i]);
    const int denom = std::max({score.ref_len, score.hyp_len, 1});
    score.normalized = static_cast<double>(score.distance) / denom;
    score.exact = score.distance == 0;
    dist_sum += score.distance;
    norm_sum += score.normalized;
    exact += score.exact ? 1 : 0;
    report.per_example.push_back(score);
  }
  const double n = refs.empty() ? 1.0 : static_cast<double>(refs.size());
  report.mean_distance = dist_sum / n;
  report.mean_normalized = norm_sum / n;
  report.exact_match_rate = exact / n;
  return report;
}

AccuracyReport evaluate(const DecodeFn& decode,
                        std::span<const TranscriptionExample> split) {
  std::vector<std::vector<int>> refs, hyps;
  refs.reserve(split.size());
  hyps.reserve(split.size());
  for (const auto& example : split) {
    refs.push_back(strip_eos(example.answer_tokens));
    hyps.push_back(strip_eos(decode(example.prompt_tokens)));
  }
  return score_pairs(refs, hyps);
}

ProbeReport probe_eval(const DecodeFn& decode,
                       std::span<const ProbeExample> probes) {
  std::vector<std::vector<int>> clean_refs, clean_hyps, cor_refs, cor_hyps;
  for (const auto& probe : probes) {
    clean_refs.push_back(strip_eos(probe.clean.answer_tokens));
    clean_hyps.push_back(strip_eos(decode(probe.clean.prompt_tokens)));
    cor_refs.push_back(strip_eos(probe.corrupted_answer));
    cor_hyps.push_back(strip_eos(decode(probe.corrupted_prompt)));
  }
  ProbeReport report;
  report.clean = score_pairs(clean_refs, clean_hyps);
  report.corrupted = score_pairs(cor_refs, cor_hyps);
  return report;
}

EfficiencyReport efficiency(std::span<const DecodeTrace> traces) {
  EfficiencyReport report;
  double latency_sum_requests = 0.0;
  for (const auto& trace : traces) {
    report.total_tokens += static_cast<long>(trace.tokens.size());
    report.total_steps += trace.step_count;
    const double request_latency = trace.total_latency_us();
    report.total_latency_us += request_latency;
    latency_sum_requests += request_latency;
    for (int s = 0; s < trace.step_count; ++s) {
      report.itl_us.push_back(trace.step_latency_us[s]);
      for (int extra = 1; extra < trace.committed_per_step[s]; ++extra) {
        report.itl_us.push_back(0.0);
      }
    }
    report.drafts_proposed += trace.drafts_proposed;
    report.drafts_accepted += trace.drafts_accepted;
  }
  if (!report.itl_us.empty()) {
    report.tpot_us =
        std::accumulate(report.itl_us.begin(), report.itl_us.end(), 0.0) /
        static_cast<double>(report.itl_us.size());
  }
  if (report.total_latency_us > 0.0) {
    report.throughput_tps =
        report.total_tokens / (report.total_latency_us * 1e-6);
  }
  if (!traces.empty()) {
    report.mean_latency_per_request_us =
        latency_sum_requests / static_cast<double>(traces.size());
  }
  if (report.drafts_proposed > 0) {
    report.acceptance_rate = static_cast<double>(report.drafts_accepted) /
                             static_cast<double>(report.drafts_proposed);
  }
  return report;
}

}  // namespace ptp
