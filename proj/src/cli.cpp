// Copyright (c) 2026 ptp contributors
// SPDX-License-Identifier: Apache-2.0

#include "ptp/cli.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "ptp/checkpoint.hpp"
#include "ptp/inference.hpp"
#include "ptp/metrics.hpp"
#include "ptp/parallel.hpp"
#include "ptp/rng.hpp"
#include "ptp/training.hpp"

namespace ptp {

namespace {

using nlohmann::json;

RegisterLayout layout_from_string(const std::string& s) {
  if (s == "continuous") return RegisterLayout::kContinuous;
  if (s == "interleaved") return RegisterLayout::kInterleaved;
  throw std::invalid_argument("unknown layout: " + s);
}

RegisterEmbedding embedding_from_string(const std::string& s) {
  if (s == "shared") return RegisterEmbedding::kShared;
  if (s == "distinct") return RegisterEmbedding::kDistinct;
  throw std::invalid_argument("unknown embedding mode: " + s);
}

CachePolicy cache_policy_from_string(const std::string& s) {
  if (s == "replace") return CachePolicy::kReplace;
  if (s == "keep") return CachePolicy::kKeep;
  throw std::invalid_argument("unknown cache policy: " + s);
}

CorruptionMenu menu_from_string(const std::string& s) {
  if (s == "both") return CorruptionMenu::kBoth;
  if (s == "delete") return CorruptionMenu::kDeleteOnly;
  if (s == "substitute") return CorruptionMenu::kSubstituteOnly;
  throw std::invalid_argument("unknown probe kinds: " + s);
}

// "ntp", "ptp", "ptp-spec", optionally suffixed "-<n>" for the parallel modes
DecodeConfig parse_mode(const std::string& mode, int n_flag, int max_new,
                        CachePolicy policy, bool timing) {
  DecodeConfig cfg;
  cfg.max_new_tokens = max_new;
  cfg.cache_policy = policy;
  cfg.collect_timing = timing;
  std::string base = mode;
  int n = n_flag;
  const size_t dash = mode.find_last_of('-');
  if (dash != std::string::npos && dash + 1 < mode.size() &&
      std::isdigit(static_cast<unsigned char>(mode[dash + 1]))) {
    base = mode.substr(0, dash);
    n = std::stoi(mode.substr(dash + 1));
  }
  if (base == "ntp") {
    cfg.mode = DecodeMode::kNtp;
    cfg.n = 0;
  } else if (base == "ptp") {
    cfg.mode = DecodeMode::kPtp;
    cfg.n = n > 0 ? n : 1;
  } else if (base == "ptp-spec" || base == "ptp_spec") {
    cfg.mode = DecodeMode::kPtpSpec;
    cfg.n = n > 0 ? n : 1;
  } else {
    throw std::invalid_argument("unknown decode mode: " + mode);
  }
  cfg.validate();
  return cfg;
}

json common_json(const CommonArgs& args) {
  return json{{"seed", args.seed},
              {"workers", args.workers},
              {"deterministic", args.deterministic},
              {"out_dir", args.out_dir}};
}

json accuracy_json(const AccuracyReport& report) {
  return json{{"count", report.per_example.size()},
              {"mean_distance", report.mean_distance},
              {"mean_normalized", report.mean_normalized},
              {"exact_match_rate", report.exact_match_rate}};
}

json efficiency_json(const EfficiencyReport& report) {
  return json{{"total_tokens", report.total_tokens},
              {"total_steps", report.total_steps},
              {"total_latency_us", report.total_latency_us},
              {"tpot_us", report.tpot_us},
              {"throughput_tps", report.throughput_tps},
              {"mean_latency_per_request_us", report.mean_latency_per_request_us},
              {"drafts_proposed", report.drafts_proposed},
              {"drafts_accepted", report.drafts_accepted},
              {"acceptance_rate", report.acceptance_rate}};
}

void write_json_file(const json& doc, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os << doc.dump(2) << '\n';
}

struct CorpusRun {
  std::vector<std::vector<int>> outputs;
  std::vector<DecodeTrace> traces;
};

CorpusRun decode_corpus(const ModelParams& params, const Vocab& vocab,
                        std::span<const TranscriptionExample> split,
                        const DecodeConfig& cfg, int workers) {
  CorpusRun run;
  run.outputs.resize(split.size());
  run.traces.resize(split.size());
  parallel_slices(static_cast<int>(split.size()), workers,
                  [&](int, int begin, int end) {
                    for (int i = begin; i < end; ++i) {
                      DecodeTrace trace =
                          decode(params, split[i].prompt_tokens, cfg, vocab);
                      run.outputs[i] = trace.tokens;
                      run.traces[i] = std::move(trace);
                    }
                  });
  return run;
}

std::vector<TranscriptionExample> load_limited(const std::string& path,
                                               const Vocab& vocab, int limit) {
  auto corpus = load_corpus_file(path, vocab);
  if (limit > 0 && static_cast<int>(corpus.size()) > limit) {
    corpus.resize(limit);
  }
  return corpus;
}

}  // namespace

int CommonArgs::effective_workers() const {
  if (deterministic) return 1;
  return workers > 0 ? workers : default_workers();
}

std::string CommonArgs::resolve(const std::string& path) const {
  if (path.empty() || out_dir.empty() || path.front() == '/') return path;
  return out_dir + "/" + path;
}

int cmd_gen(const GenArgs& args) {
  const Vocab vocab(args.vocab_size);
  const auto corpus =
      gen_corpus(args.count, args.shape, args.seed, vocab, args.max_cells);
  save_corpus_file(corpus, args.resolve(args.out));

  json summary{{"command", "gen"},
               {"config",
                json{{"common", common_json(args)},
                     {"count", args.count},
                     {"vocab_size", args.vocab_size},
                     {"rows", json::array({args.shape.rows_min, args.shape.rows_max})},
                     {"cols", json::array({args.shape.cols_min, args.shape.cols_max})},
                     {"max_cells", args.max_cells},
                     {"out", args.out},
                     {"probe_out", args.probe_out},
                     {"probe_rate", args.probe_rate},
                     {"probe_kinds", args.probe_kinds}}},
               {"examples", corpus.size()}};

  if (!args.probe_out.empty()) {
    const CorruptionMenu menu = menu_from_string(args.probe_kinds);
    std::vector<ProbeExample> probes;
    probes.reserve(corpus.size());
    const std::uint64_t probe_seed = derive_seed(args.seed, "probe");
    for (size_t i = 0; i < corpus.size(); ++i) {
      probes.push_back(
          corrupt(corpus[i], args.probe_rate, probe_seed + i, vocab, menu));
    }
    save_probes_file(probes, args.resolve(args.probe_out));
    summary["probes"] = probes.size();
  }
  std::cout << summary.dump(2) << '\n';
  return 0;
}

int cmd_train(const TrainArgs& args) {
  const Vocab vocab(args.vocab_size);
  const auto corpus = load_corpus_file(args.corpus, vocab);

  ModelConfig config;
  config.vocab_size = args.vocab_size;
  config.d_model = args.d_model;
  config.n_layers = args.n_layers;
  config.n_heads = args.n_heads;
  config.d_ff = args.d_ff;
  config.max_position = args.max_position;
  config.register_embedding = embedding_from_string(args.embedding_mode);
  config.register_max_offset =
      config.register_embedding == RegisterEmbedding::kDistinct
          ? std::max(1, args.n)
          : 1;

  TrainConfig cfg;
  cfg.alpha = args.alpha;
  cfg.lr = args.lr;
  cfg.epochs = args.epochs;
  cfg.steps = args.steps;
  cfg.batch_size = args.batch_size;
  cfg.seed = args.seed;
  cfg.registers.n = args.n;
  cfg.registers.layout = layout_from_string(args.layout);
  cfg.registers.embedding = config.register_embedding;
  cfg.workers = args.effective_workers();
  cfg.checkpoint_every = args.checkpoint_every;

  ModelParams params = init_params(config, args.seed);

  std::ofstream traj;
  std::ostream* traj_os = nullptr;
  if (!args.trajectory_out.empty()) {
    traj.open(args.resolve(args.trajectory_out));
    if (!traj) throw std::runtime_error("cannot open trajectory log");
    traj_os = &traj;
  }
  TrainHooks hooks;
  const std::string ckpt_path = args.resolve(args.checkpoint_out);
  if (cfg.checkpoint_every > 0) {
    hooks.on_checkpoint = [&ckpt_path](int step, const ModelParams& p) {
      save_checkpoint_file(p, ckpt_path + ".step" + std::to_string(step));
    };
  }

  const TrainResult result = train(params, corpus, cfg, traj_os, hooks);
  save_checkpoint_file(params, ckpt_path);

  const LossBreakdown& last = result.trajectory.back();
  json summary{{"command", "train"},
               {"config",
                json{{"common", common_json(args)},
                     {"corpus", args.corpus},
                     {"checkpoint_out", args.checkpoint_out},
                     {"steps", args.steps},
                     {"epochs", args.epochs},
                     {"batch_size", args.batch_size},
                     {"lr", args.lr},
                     {"alpha", args.alpha},
                     {"n", args.n},
                     {"layout", args.layout},
                     {"embedding_mode", args.embedding_mode},
                     {"vocab_size", args.vocab_size},
                     {"d_model", args.d_model},
                     {"n_layers", args.n_layers},
                     {"n_heads", args.n_heads},
                     {"d_ff", args.d_ff},
                     {"max_position", args.max_position}}},
               {"steps_run", result.trajectory.size()},
               {"final", json{{"ntp", last.ntp},
                              {"reg", last.reg},
                              {"total", last.total}}}};
  std::cout << summary.dump(2) << '\n';
  return 0;
}

int cmd_decode(const DecodeArgs& args) {
  const ModelParams params = load_checkpoint_file(args.checkpoint);
  const Vocab vocab(params.config.vocab_size);
  const auto corpus = load_limited(args.corpus, vocab, args.limit);
  const DecodeConfig cfg =
      parse_mode(args.mode, args.n, args.max_new_tokens,
                 cache_policy_from_string(args.cache_policy),
                 !args.deterministic);
  const CorpusRun run =
      decode_corpus(params, vocab, corpus, cfg, args.effective_workers());

  std::ofstream os(args.resolve(args.out));
  if (!os) throw std::runtime_error("cannot open " + args.out + " for writing");
  const json header{{"config", json{{"common", common_json(args)},
                                    {"checkpoint", args.checkpoint},
                                    {"corpus", args.corpus},
                                    {"mode", args.mode},
                                    {"n", cfg.n},
                                    {"cache_policy", args.cache_policy},
                                    {"max_new_tokens", args.max_new_tokens},
                                    {"limit", args.limit}}}};
  os << header.dump() << '\n';
  for (const auto& trace : run.traces) {
    const json obj{{"tokens", trace.tokens},
                   {"text", vocab.render(trace.tokens)},
                   {"steps", trace.step_count},
                   {"committed_per_step", trace.committed_per_step},
                   {"latencies_us", trace.step_latency_us},
                   {"drafts_proposed", trace.drafts_proposed},
                   {"drafts_accepted", trace.drafts_accepted}};
    os << obj.dump() << '\n';
  }
  return 0;
}

int cmd_bench(const BenchArgs& args) {
  const ModelParams params = load_checkpoint_file(args.checkpoint);
  const Vocab vocab(params.config.vocab_size);
  const auto corpus = load_limited(args.corpus, vocab, args.limit);
  const CachePolicy policy = cache_policy_from_string(args.cache_policy);

  std::vector<std::vector<int>> refs;
  refs.reserve(corpus.size());
  for (const auto& ex : corpus) refs.push_back(strip_eos(ex.answer_tokens));

  std::vector<std::string> modes;
  {
    std::istringstream ss(args.modes);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (!tok.empty()) modes.push_back(tok);
    }
  }
  if (modes.empty()) throw std::invalid_argument("no bench modes given");

  std::ofstream csv;
  if (!args.csv_out.empty()) {
    csv.open(args.resolve(args.csv_out));
    if (!csv) throw std::runtime_error("cannot open csv output");
    csv << "mode,index,ref_len,hyp_len,distance,normalized,exact,steps,"
           "latency_us\n";
  }

  json report{{"command", "bench"},
              {"config", json{{"common", common_json(args)},
                              {"checkpoint", args.checkpoint},
                              {"corpus", args.corpus},
                              {"modes", args.modes},
                              {"cache_policy", args.cache_policy},
                              {"max_new_tokens", args.max_new_tokens},
                              {"limit", args.limit}}},
              {"modes", json::object()}};

  long ntp_steps = 0;
  double ntp_latency = 0.0;
  bool have_ntp = false;

  for (const std::string& mode : modes) {
    const DecodeConfig cfg = parse_mode(mode, 0, args.max_new_tokens, policy,
                                        !args.deterministic);
    const CorpusRun run =
        decode_corpus(params, vocab, corpus, cfg, args.effective_workers());
    std::vector<std::vector<int>> hyps;
    hyps.reserve(run.outputs.size());
    for (const auto& out : run.outputs) hyps.push_back(strip_eos(out));
    const AccuracyReport accuracy = score_pairs(refs, hyps);
    const EfficiencyReport eff = efficiency(run.traces);

    json entry{{"accuracy", accuracy_json(accuracy)},
               {"efficiency", efficiency_json(eff)}};
    if (cfg.mode == DecodeMode::kNtp) {
      ntp_steps = eff.total_steps;
      ntp_latency = eff.total_latency_us;
      have_ntp = true;
    } else if (have_ntp && eff.total_steps > 0) {
      json sp{{"step_ratio",
               static_cast<double>(ntp_steps) / eff.total_steps}};
      if (eff.total_latency_us > 0.0) {
        sp["wallclock_ratio"] = ntp_latency / eff.total_latency_us;
      }
      entry["speedup_vs_ntp"] = sp;
    }
    report["modes"][mode] = entry;

    if (csv.is_open()) {
      for (size_t i = 0; i < accuracy.per_example.size(); ++i) {
        const auto& s = accuracy.per_example[i];
        csv << mode << ',' << i << ',' << s.ref_len << ',' << s.hyp_len << ','
            << s.distance << ',' << s.normalized << ',' << (s.exact ? 1 : 0)
            << ',' << run.traces[i].step_count << ','
            << run.traces[i].total_latency_us() << '\n';
      }
    }
  }

  write_json_file(report, args.resolve(args.out));
  std::cout << report.dump(2) << '\n';
  return 0;
}

int cmd_probe(const ProbeArgs& args) {
  const ModelParams params = load_checkpoint_file(args.checkpoint);
  const Vocab vocab(params.config.vocab_size);
  auto probes = load_probes_file(args.probes, vocab);
  if (args.limit > 0 && static_cast<int>(probes.size()) > args.limit) {
    probes.resize(args.limit);
  }
  const DecodeConfig cfg =
      parse_mode(args.mode, args.n, args.max_new_tokens, CachePolicy::kReplace,
                 !args.deterministic);
  const DecodeFn fn = [&](std::span<const int> prompt) {
    return decode(params, prompt, cfg, vocab).tokens;
  };
  const ProbeReport report = probe_eval(fn, probes);

  const json doc{{"command", "probe"},
                 {"config", json{{"common", common_json(args)},
                                 {"checkpoint", args.checkpoint},
                                 {"probes", args.probes},
                                 {"mode", args.mode},
                                 {"n", cfg.n},
                                 {"max_new_tokens", args.max_new_tokens},
                                 {"limit", args.limit}}},
                 {"clean", accuracy_json(report.clean)},
                 {"corrupted", accuracy_json(report.corrupted)}};
  write_json_file(doc, args.resolve(args.out));
  std::cout << doc.dump(2) << '\n';
  return 0;
}

int cmd_gradcheck(const GradcheckArgs& args) {
  const ModelConfig config = ModelConfig::tiny();
  const Vocab vocab(config.vocab_size);
  const ModelParams params = init_params(config, args.seed);

  ShapeRange shape;
  shape.rows_min = 1;
  shape.rows_max = 2;
  shape.cols_min = 2;
  shape.cols_max = 3;
  const auto corpus = gen_corpus(std::max(1, args.batch), shape,
                                 derive_seed(args.seed, "gradcheck"), vocab);
  RegisterConfig reg;
  reg.n = args.n;
  int max_len = 0;
  for (const auto& ex : corpus) {
    const int l = static_cast<int>(ex.answer_tokens.size());
    max_len = std::max(
        max_len, static_cast<int>(ex.prompt_tokens.size()) + l + reg.n * (l - 1));
  }
  const TrainingBatch batch = pack_batch(corpus, reg, max_len);
  const GradCheckResult result =
      grad_check(params, batch, args.alpha, args.samples, args.eps, args.seed);

  const json doc{{"command", "gradcheck"},
                 {"config", json{{"common", common_json(args)},
                                 {"samples", args.samples},
                                 {"eps", args.eps},
                                 {"alpha", args.alpha},
                                 {"n", args.n},
                                 {"batch", args.batch}}},
                 {"max_rel_err", result.max_rel_err},
                 {"samples", result.samples}};
  if (!args.out.empty()) write_json_file(doc, args.resolve(args.out));
  std::cout << doc.dump(2) << '\n';
  return 0;
}

}  // namespace ptp
