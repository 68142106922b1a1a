// Copyright (c) 2026 ptp contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>

#include "ptp/model.hpp"

namespace ptp {

/// Self-describing container: a text header carrying the config and a
/// `tensor <name> <rows> <cols> f32` line per tensor, then raw little-endian
/// 32-bit floats, row-major, in header order.
void save_checkpoint(const ModelParams& params, std::ostream& os);
ModelParams load_checkpoint(std::istream& is);

void save_checkpoint_file(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint_file(const std::string& path);

}  // namespace ptp
