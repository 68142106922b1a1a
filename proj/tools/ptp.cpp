// Copyright (c) 2026 ptp contributors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line entry point: corpus generation, training, decoding,
// benchmarking, hallucination probing and gradient checking, all driven by
// one global seed. Flags may come from a flat key=value file via --config;
// explicit flags override file values.

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "ptp/cli.hpp"

namespace {

// Replaces `--config FILE` with the file's key=value pairs, injected before
// the user's own flags so the command line wins on conflicts.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::string path;
  size_t at = args.size(), span = 0;
  for (size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      at = i;
      span = 2;
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      at = i;
      span = 1;
      break;
    }
  }
  if (path.empty()) return args;
  args.erase(args.begin() + at, args.begin() + at + span);

  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config file " + path);
  std::vector<std::string> injected;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("config line is not key=value: " + line);
    }
    injected.push_back("--" + line.substr(0, eq) + "=" + line.substr(eq + 1));
  }
  if (args.empty()) throw std::runtime_error("missing subcommand");
  args.insert(args.begin() + 1, injected.begin(), injected.end());
  return args;
}

void add_common(CLI::App* cmd, ptp::CommonArgs& args) {
  cmd->add_option("--seed", args.seed, "global seed");
  cmd->add_option("--workers", args.workers, "worker threads (0 = hardware)");
  cmd->add_flag("--deterministic", args.deterministic,
                "single worker, zeroed wall-clock fields");
  cmd->add_option("--out-dir", args.out_dir, "prefix for relative output paths")
      ->envname("PTP_OUT_DIR");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"parallel-token transcription workbench"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.footer("Any subcommand accepts --config FILE with flat key=value lines; "
             "explicit flags override file values.");

  ptp::GenArgs gen;
  ptp::TrainArgs train;
  ptp::DecodeArgs decode;
  ptp::BenchArgs bench;
  ptp::ProbeArgs probe;
  ptp::GradcheckArgs gradcheck;

  CLI::App* c_gen = app.add_subcommand("gen", "generate a synthetic corpus");
  add_common(c_gen, gen);
  c_gen->add_option("--count", gen.count, "number of examples");
  c_gen->add_option("--vocab-size", gen.vocab_size);
  c_gen->add_option("--rows-min", gen.shape.rows_min);
  c_gen->add_option("--rows-max", gen.shape.rows_max);
  c_gen->add_option("--cols-min", gen.shape.cols_min);
  c_gen->add_option("--cols-max", gen.shape.cols_max);
  c_gen->add_option("--max-cells", gen.max_cells);
  c_gen->add_option("--out", gen.out, "corpus output path");
  c_gen->add_option("--probe-out", gen.probe_out,
                    "also write a corrupted probe file");
  c_gen->add_option("--rate", gen.probe_rate, "probe corruption rate");
  c_gen->add_option("--probe-kinds", gen.probe_kinds,
                    "both | delete | substitute");

  CLI::App* c_train = app.add_subcommand("train", "train a model");
  add_common(c_train, train);
  c_train->add_option("--corpus", train.corpus)->required();
  c_train->add_option("--out", train.checkpoint_out, "checkpoint path");
  c_train->add_option("--trajectory", train.trajectory_out,
                      "per-step loss log path");
  c_train->add_option("--steps", train.steps, "step budget (overrides epochs)");
  c_train->add_option("--epochs", train.epochs);
  c_train->add_option("--batch", train.batch_size);
  c_train->add_option("--lr", train.lr);
  c_train->add_option("--alpha", train.alpha, "loss mix (1 = NTP baseline)");
  c_train->add_option("--n", train.n, "registers per group");
  c_train->add_option("--layout", train.layout, "continuous | interleaved");
  c_train->add_option("--embedding-mode", train.embedding_mode,
                      "shared | distinct");
  c_train->add_option("--vocab-size", train.vocab_size);
  c_train->add_option("--d-model", train.d_model);
  c_train->add_option("--layers", train.n_layers);
  c_train->add_option("--heads", train.n_heads);
  c_train->add_option("--d-ff", train.d_ff);
  c_train->add_option("--max-position", train.max_position);
  c_train->add_option("--checkpoint-every", train.checkpoint_every);

  CLI::App* c_decode = app.add_subcommand("decode", "decode a corpus");
  add_common(c_decode, decode);
  c_decode->add_option("--ckpt", decode.checkpoint)->required();
  c_decode->add_option("--corpus", decode.corpus)->required();
  c_decode->add_option("--out", decode.out, "JSONL output path");
  c_decode->add_option("--mode", decode.mode, "ntp | ptp | ptp-spec");
  c_decode->add_option("--n", decode.n, "registers per step");
  c_decode->add_option("--cache-policy", decode.cache_policy,
                       "replace | keep");
  c_decode->add_option("--max-new", decode.max_new_tokens);
  c_decode->add_option("--limit", decode.limit, "0 = whole corpus");

  CLI::App* c_bench = app.add_subcommand("bench", "compare decode modes");
  add_common(c_bench, bench);
  c_bench->add_option("--ckpt", bench.checkpoint)->required();
  c_bench->add_option("--corpus", bench.corpus)->required();
  c_bench->add_option("--out", bench.out, "report path");
  c_bench->add_option("--csv", bench.csv_out, "optional per-example CSV");
  c_bench->add_option("--modes", bench.modes,
                      "comma list, e.g. ntp,ptp-1,ptp-spec-1");
  c_bench->add_option("--cache-policy", bench.cache_policy);
  c_bench->add_option("--max-new", bench.max_new_tokens);
  c_bench->add_option("--limit", bench.limit);

  CLI::App* c_probe = app.add_subcommand("probe", "paired clean/corrupted eval");
  add_common(c_probe, probe);
  c_probe->add_option("--ckpt", probe.checkpoint)->required();
  c_probe->add_option("--probes", probe.probes)->required();
  c_probe->add_option("--out", probe.out, "report path");
  c_probe->add_option("--mode", probe.mode);
  c_probe->add_option("--n", probe.n);
  c_probe->add_option("--max-new", probe.max_new_tokens);
  c_probe->add_option("--limit", probe.limit);

  CLI::App* c_grad = app.add_subcommand(
      "gradcheck", "finite-difference check on the tiny config");
  add_common(c_grad, gradcheck);
  c_grad->add_option("--samples", gradcheck.samples);
  c_grad->add_option("--eps", gradcheck.eps);
  c_grad->add_option("--alpha", gradcheck.alpha);
  c_grad->add_option("--n", gradcheck.n);
  c_grad->add_option("--batch", gradcheck.batch);
  c_grad->add_option("--out", gradcheck.out, "optional report path");

  try {
    const std::vector<std::string> raw = expand_config(argc, argv);
    std::vector<const char*> cargs;
    cargs.push_back(argv[0]);
    for (const auto& a : raw) cargs.push_back(a.c_str());
    app.parse(static_cast<int>(cargs.size()), cargs.data());

    if (c_gen->parsed()) return ptp::cmd_gen(gen);
    if (c_train->parsed()) return ptp::cmd_train(train);
    if (c_decode->parsed()) return ptp::cmd_decode(decode);
    if (c_bench->parsed()) return ptp::cmd_bench(bench);
    if (c_probe->parsed()) return ptp::cmd_probe(probe);
    if (c_grad->parsed()) return ptp::cmd_gradcheck(gradcheck);
    return 1;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << nlohmann::json{{"error", e.what()}}.dump() << '\n';
    return e.get_exit_code() == 0 ? 1 : e.get_exit_code();
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", e.what()}}.dump() << '\n';
    return 1;
  }
}
