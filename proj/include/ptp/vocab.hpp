// Copyright (c) 2026 ptp contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <stdexcept>
#include <string>

namespace ptp {

/// Fixed token-id layout: a handful of reserved ids followed by printable
/// symbol ids. REGISTER is the single id shared by every register slot; it
/// never occurs in corpus sequences.
struct Vocab {
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kSep = 3;
  static constexpr int kRegister = 4;
  static constexpr int kFirstSymbol = 5;
  static constexpr int kMinSize = 16;

  int size = 64;

  Vocab() = default;
  explicit Vocab(int size_in) : size(size_in) {
    if (size < kMinSize) {
      throw std::invalid_argument("vocab size must be at least 16");
    }
  }

  int n_symbols() const { return size - kFirstSymbol; }
  bool is_symbol(int id) const { return id >= kFirstSymbol && id < size; }
  bool is_reserved(int id) const { return id >= 0 && id < kFirstSymbol; }
  bool in_range(int id) const { return id >= 0 && id < size; }

  /// Printable rendering for reports and the decode CLI. Symbols map onto a
  /// 62-char alphabet (wrapping for very large vocabularies), SEP renders as
  /// '|', other reserved ids as distinct sigils.
  char token_char(int id) const;
  std::string render(std::span<const int> tokens) const;
};

}  // namespace ptp
