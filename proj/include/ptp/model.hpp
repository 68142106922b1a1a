// Copyright (c) 2026 ptp contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ptp/sequence.hpp"

namespace ptp {

struct ModelConfig {
  int vocab_size = 64;
  int d_model = 128;
  int n_layers = 4;
  int n_heads = 4;
  int d_ff = 512;
  int max_position = 512;
  RegisterEmbedding register_embedding = RegisterEmbedding::kShared;
  int register_max_offset = 1;  // rows of the register table in distinct mode

  void validate() const;
  int head_dim() const { return d_model / n_heads; }

  /// vocab 64, d_model 128, 4 layers, 4 heads, d_ff 512 — small enough for
  /// CPU minutes, deep enough to learn the transcription task.
  static ModelConfig desk();
  /// 1 layer, d_model 16ize — the finite-difference check configuration.
  static ModelConfig tiny();
};

struct LayerParams {
  Eigen::MatrixXd wq, wk, wv, wo;  // d_model×d_model, out = x * W + b
  Eigen::VectorXd bq, bk, bv, bo;
  Eigen::VectorXd ln1_gain, ln1_bias;
  Eigen::VectorXd ln2_gain, ln2_bias;
  Eigen::MatrixXd w_ff1;  // d_model×d_ff
  Eigen::MatrixXd w_ff2;  // d_ff×d_model
  Eigen::VectorXd b_ff1, b_ff2;
};

/// All learnable state. The token embedding doubles as the tied output head.
/// Register slots embed through reg_embedding (1×d shared, max_offset×d
/// distinct) instead of the token table.
struct ModelParams {
  ModelConfig config;
  Eigen::MatrixXd tok_embedding;  // vocab×d
  Eigen::MatrixXd pos_embedding;  // max_position×d, indexed by position id
  Eigen::MatrixXd reg_embedding;
  std::vector<LayerParams> layers;
  Eigen::VectorXd lnf_gain, lnf_bias;
};

ModelParams init_params(const ModelConfig& config, std::uint64_t seed);
ModelParams zeros_like(const ModelParams& params);

/// Visits every parameter tensor in a fixed order (the checkpoint order).
/// Vectors are reported as n×1.
using TensorVisitor =
    std::function<void(const std::string& name, double* data, int rows, int cols)>;
using ConstTensorVisitor = std::function<void(const std::string& name,
                                              const double* data, int rows,
                                              int cols)>;
void visit_tensors(ModelParams& params, const TensorVisitor& fn);
void visit_tensors(const ModelParams& params, const ConstTensorVisitor& fn);
std::size_t parameter_count(const ModelParams& params);

/// Per-layer key/value rows plus per-slot role metadata. One cache belongs
/// to exactly one decode session.
struct KVCache {
  struct LayerKV {
    Eigen::MatrixXd k, v;  // slots×d_model
  };
  struct SlotMeta {
    SlotRole role = SlotRole::kRegular;
    int offset = 0;  // register offset, 0 for regular slots
    int position = 0;
  };

  std::vector<LayerKV> layers;
  std::vector<SlotMeta> slots;

  int size() const { return static_cast<int>(slots.size()); }
  bool empty() const { return slots.empty(); }
};

/// Removes every slot matching the predicate across all layers, preserving
/// the order of survivors.
KVCache evict(const KVCache& cache,
              const std::function<bool(const KVCache::SlotMeta&)>& remove);
/// Drops the trailing `count` slots in place.
void drop_tail(KVCache& cache, int count);

/// Forward activations captured for the backward pass.
struct LayerActivations {
  Eigen::MatrixXd x_in;      // block input
  Eigen::MatrixXd ln1_xhat;
  Eigen::VectorXd ln1_rstd;
  Eigen::MatrixXd q, k, v;
  std::vector<Eigen::MatrixXd> att;  // per head, T×T row-stochastic (0 rows for pads)
  Eigen::MatrixXd ctx;       // concatenated head outputs, pre out-projection
  Eigen::MatrixXd h_mid;     // after the attention residual
  Eigen::MatrixXd ln2_xhat;
  Eigen::VectorXd ln2_rstd;
  Eigen::MatrixXd ff_pre;    // pre-activation
  Eigen::MatrixXd ff_act;    // post-GELU
};

struct Activations {
  std::vector<int> token_ids;
  std::vector<int> position_ids;
  std::vector<int> embed_source;  // 0 = token table, j>=1 = register row j
  std::vector<LayerActivations> layers;
  Eigen::MatrixXd h0;
  Eigen::MatrixXd h_final;  // pre final norm
  Eigen::MatrixXd lnf_xhat;
  Eigen::VectorXd lnf_rstd;
  Eigen::MatrixXd lnf_out;
};

/// Full-sequence forward under an explicit mask (the training path).
/// Returns logits, one row per slot. Fills `acts` when non-null so backward
/// can run.
Eigen::MatrixXd forward(const ModelParams& params,
                        std::span<const int> token_ids,
                        std::span<const int> position_ids,
                        const AttentionMask& mask,
                        Activations* acts = nullptr);

/// Incremental forward: appends the new slots to the cache under the
/// implicit causal mask and returns logits for the new slots only. Register
/// offsets are recovered from consecutive REGISTER runs (continuing across
/// the cache boundary) so distinct-mode embeddings resolve without extra
/// arguments.
Eigen::MatrixXd forward(const ModelParams& params,
                        std::span<const int> token_ids,
                        std::span<const int> position_ids, KVCache& cache);

/// Accumulates parameter gradients for the explicit-mask forward into
/// `grads` (shaped like the params; not zeroed here).
void backward(const ModelParams& params, const Activations& acts,
              const Eigen::MatrixXd& dlogits, ModelParams& grads);

}  // namespace ptp
