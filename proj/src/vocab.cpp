// Copyright (c) 2026 ptp contributors
// SPDX-License-Identifier: Apache-2.0

#include "ptp/vocab.hpp"

namespace ptp {

namespace {
constexpr char kAlphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789";
constexpr int kAlphabetLen = 62;
}  // namespace

char Vocab::token_char(int id) const {
  switch (id) {
    case kPad:
      return '_';
    case kBos:
      return '^';
    case kEos:
      return '$';
    case kSep:
      return '|';
    case kRegister:
      return '#';
    default:
      break;
  }
  if (!is_symbol(id)) return '?';
  return kAlphabet[(id - kFirstSymbol) % kAlphabetLen];
}

std::string Vocab::render(std::span<const int> tokens) const {
  std::string out;
  out.reserve(tokens.size());
  for (int id : tokens) out.push_back(token_char(id));
  return out;
}

}  // namespace ptp
