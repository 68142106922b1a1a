// Copyright (c) 2026 ptp contributors
// SPDX-License-Identifier: Apache-2.0

#include "ptp/corpus.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "ptp/rng.hpp"

namespace ptp {

namespace {

std::uniform_int_distribution<int> symbol_dist(const Vocab& vocab) {
  return std::uniform_int_distribution<int>(Vocab::kFirstSymbol, vocab.size - 1);
}

void write_tokens(std::ostream& os, std::span<const int> tokens) {
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i) os << ' ';
    os << tokens[i];
  }
}

std::vector<int> parse_tokens(const std::string& field, const Vocab& vocab,
                              int line_no) {
  std::vector<int> out;
  std::istringstream iss(field);
  long long id = 0;
  while (iss >> id) {
    if (id < 0 || id >= vocab.size) {
      throw std::runtime_error("corpus line " + std::to_string(line_no) +
                               ": token id " + std::to_string(id) +
                               " out of vocab range");
    }
    out.push_back(static_cast<int>(id));
  }
  if (!iss.eof()) {
    throw std::runtime_error("corpus line " + std::to_string(line_no) +
                             ": malformed token field");
  }
  return out;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  size_t start = 0;
  while (true) {
    const size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return fields;
}

}  // namespace

std::vector<int> transcribe(std::span<const int> prompt, const Vocab& vocab) {
  std::vector<int> answer;
  answer.reserve(prompt.size() + 1);
  for (int id : prompt) {
    if (vocab.is_symbol(id)) answer.push_back(id);
  }
  answer.push_back(Vocab::kEos);
  return answer;
}

TranscriptionExample gen_example(std::uint64_t seed, int rows, int cols,
                                 const Vocab& vocab, int max_cells) {
  if (rows < 1 || cols < 1) {
    throw std::invalid_argument("grid must have at least one row and column");
  }
  if (static_cast<long long>(rows) * cols > max_cells) {
    throw BudgetError("grid of " + std::to_string(rows) + "x" +
                      std::to_string(cols) + " exceeds the sequence budget of " +
                      std::to_string(max_cells) + " cells");
  }
  auto rng = make_rng(seed, "corpus.example");
  auto dist = symbol_dist(vocab);

  TranscriptionExample ex;
  ex.seed = seed;
  ex.prompt_tokens.reserve(static_cast<size_t>(rows) * (cols + 1) + 1);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) ex.prompt_tokens.push_back(dist(rng));
    ex.prompt_tokens.push_back(Vocab::kSep);
  }
  ex.prompt_tokens.push_back(Vocab::kSep);
  ex.answer_tokens = transcribe(ex.prompt_tokens, vocab);
  return ex;
}

std::vector<TranscriptionExample> gen_corpus(int count, const ShapeRange& shape,
                                             std::uint64_t base_seed,
                                             const Vocab& vocab, int max_cells) {
  if (count < 1) throw std::invalid_argument("corpus count must be >= 1");
  if (shape.rows_min < 1 || shape.cols_min < 1 ||
      shape.rows_max < shape.rows_min || shape.cols_max < shape.cols_min) {
    throw std::invalid_argument("invalid shape range");
  }
  std::vector<TranscriptionExample> corpus;
  corpus.reserve(count);
  for (int i = 0; i < count; ++i) {
    const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(i);
    auto shape_rng = make_rng(seed, "corpus.shape");
    std::uniform_int_distribution<int> rows_d(shape.rows_min, shape.rows_max);
    std::uniform_int_distribution<int> cols_d(shape.cols_min, shape.cols_max);
    const int rows = rows_d(shape_rng);
    const int cols = cols_d(shape_rng);
    corpus.push_back(gen_example(seed, rows, cols, vocab, max_cells));
  }
  return corpus;
}

ProbeExample corrupt(const TranscriptionExample& example, double rate,
                     std::uint64_t seed, const Vocab& vocab,
                     CorruptionMenu menu) {
  if (rate < 0.0 || rate > 1.0) {
    throw std::invalid_argument("corruption rate must lie in [0,1]");
  }
  auto rng = make_rng(seed, "corpus.corrupt");
  std::uniform_real_distribution<double> coin(0.0, 1.0);

  ProbeExample probe;
  probe.clean = example;
  for (size_t pos = 0; pos < example.prompt_tokens.size(); ++pos) {
    const int id = example.prompt_tokens[pos];
    if (!vocab.is_symbol(id)) continue;  // SEP structure is preserved
    if (coin(rng) >= rate) continue;
    CorruptionOp op;
    op.position = static_cast<int>(pos);
    bool do_delete = false;
    switch (menu) {
      case CorruptionMenu::kDeleteOnly:
        do_delete = true;
        break;
      case CorruptionMenu::kSubstituteOnly:
        do_delete = false;
        break;
      case CorruptionMenu::kBoth:
        do_delete = coin(rng) < 0.5;
        break;
    }
    if (do_delete) {
      op.kind = CorruptionKind::kDelete;
      op.replacement = -1;
    } else {
      op.kind = CorruptionKind::kSubstitute;
      // shift by a nonzero amount so the replacement always differs
      std::uniform_int_distribution<int> shift(1, vocab.n_symbols() - 1);
      const int base = id - Vocab::kFirstSymbol;
      op.replacement =
          Vocab::kFirstSymbol + (base + shift(rng)) % vocab.n_symbols();
    }
    probe.ops.push_back(op);
  }
  probe.corrupted_prompt = apply_corruption(example.prompt_tokens, probe.ops);
  probe.corrupted_answer = transcribe(probe.corrupted_prompt, vocab);
  return probe;
}

std::vector<int> apply_corruption(std::span<const int> clean_prompt,
                                  std::span<const CorruptionOp> ops) {
  std::vector<int> out;
  out.reserve(clean_prompt.size());
  size_t next_op = 0;
  for (size_t pos = 0; pos < clean_prompt.size(); ++pos) {
    if (next_op < ops.size() &&
        ops[next_op].position == static_cast<int>(pos)) {
      const CorruptionOp& op = ops[next_op++];
      if (op.kind == CorruptionKind::kSubstitute) out.push_back(op.replacement);
      // deletions emit nothing
      continue;
    }
    out.push_back(clean_prompt[pos]);
  }
  if (next_op != ops.size()) {
    throw std::invalid_argument("corruption ops out of order or out of range");
  }
  return out;
}

void save_corpus(std::span<const TranscriptionExample> corpus, std::ostream& os) {
  for (const auto& ex : corpus) {
    write_tokens(os, ex.prompt_tokens);
    os << '\t';
    write_tokens(os, ex.answer_tokens);
    os << '\n';
  }
}

std::vector<TranscriptionExample> load_corpus(std::istream& is,
                                              const Vocab& vocab) {
  std::vector<TranscriptionExample> corpus;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != 2) {
      throw std::runtime_error("corpus line " + std::to_string(line_no) +
                               ": expected 2 tab-separated fields, got " +
                               std::to_string(fields.size()));
    }
    TranscriptionExample ex;
    ex.prompt_tokens = parse_tokens(fields[0], vocab, line_no);
    ex.answer_tokens = parse_tokens(fields[1], vocab, line_no);
    if (ex.answer_tokens.empty() || ex.answer_tokens.back() != Vocab::kEos) {
      throw std::runtime_error("corpus line " + std::to_string(line_no) +
                               ": answer must end with EOS");
    }
    corpus.push_back(std::move(ex));
  }
  return corpus;
}

void save_probes(std::span<const ProbeExample> probes, std::ostream& os) {
  for (const auto& probe : probes) {
    write_tokens(os, probe.clean.prompt_tokens);
    os << '\t';
    write_tokens(os, probe.clean.answer_tokens);
    os << '\t';
    for (size_t i = 0; i < probe.ops.size(); ++i) {
      const auto& op = probe.ops[i];
      if (i) os << ' ';
      os << op.position << ':'
         << (op.kind == CorruptionKind::kDelete ? 'd' : 's') << ':';
      if (op.kind == CorruptionKind::kDelete) {
        os << '-';
      } else {
        os << op.replacement;
      }
    }
    os << '\n';
  }
}

std::vector<ProbeExample> load_probes(std::istream& is, const Vocab& vocab) {
  std::vector<ProbeExample> probes;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != 3) {
      throw std::runtime_error("probe line " + std::to_string(line_no) +
                               ": expected 3 tab-separated fields, got " +
                               std::to_string(fields.size()));
    }
    ProbeExample probe;
    probe.clean.prompt_tokens = parse_tokens(fields[0], vocab, line_no);
    probe.clean.answer_tokens = parse_tokens(fields[1], vocab, line_no);
    std::istringstream ops(fields[2]);
    std::string triple;
    while (ops >> triple) {
      const size_t c1 = triple.find(':');
      const size_t c2 = triple.find(':', c1 + 1);
      if (c1 == std::string::npos || c2 == std::string::npos) {
        throw std::runtime_error("probe line " + std::to_string(line_no) +
                                 ": malformed op '" + triple + "'");
      }
      CorruptionOp op;
      op.position = std::stoi(triple.substr(0, c1));
      const std::string kind = triple.substr(c1 + 1, c2 - c1 - 1);
      const std::string repl = triple.substr(c2 + 1);
      if (kind == "d") {
        op.kind = CorruptionKind::kDelete;
        op.replacement = -1;
      } else if (kind == "s") {
        op.kind = CorruptionKind::kSubstitute;
        op.replacement = std::stoi(repl);
        if (!vocab.is_symbol(op.replacement)) {
          throw std::runtime_error("probe line " + std::to_string(line_no) +
                                   ": replacement is not a symbol id");
        }
      } else {
        throw std::runtime_error("probe line " + std::to_string(line_no) +
                                 ": unknown op kind '" + kind + "'");
      }
      probe.ops.push_back(op);
    }
    probe.corrupted_prompt =
        apply_corruption(probe.clean.prompt_tokens, probe.ops);
    probe.corrupted_answer = transcribe(probe.corrupted_prompt, vocab);
    probes.push_back(std::move(probe));
  }
  return probes;
}

void save_corpus_file(std::span<const TranscriptionExample> corpus,
                      const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  save_corpus(corpus, os);
}

std::vector<TranscriptionExample> load_corpus_file(const std::string& path,
                                                   const Vocab& vocab) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open corpus file " + path);
  return load_corpus(is, vocab);
}

void save_probes_file(std::span<const ProbeExample> probes,
                      const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  save_probes(probes, os);
}

std::vector<ProbeExample> load_probes_file(const std::string& path,
                                           const Vocab& vocab) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open probe file " + path);
  return load_probes(is, vocab);
}

}  // namespace ptp
