// Copyright (c) 2026 ptp contributors
// SPDX-License-Identifier: Apache-2.0

#include "ptp/model.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "ptp/rng.hpp"

namespace ptp {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kInitScale = 0.02;
constexpr double kGeluA = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluC = 0.044715;

double gelu(double x) {
  const double u = kGeluA * (x + kGeluC * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_grad(double x) {
  const double u = kGeluA * (x + kGeluC * x * x * x);
  const double t = std::tanh(u);
  const double du = kGeluA * (1.0 + 3.0 * kGeluC * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

void ln_forward(const Eigen::MatrixXd& x, const Eigen::VectorXd& gain,
                const Eigen::VectorXd& bias, Eigen::MatrixXd& xhat,
                Eigen::VectorXd& rstd, Eigen::MatrixXd& out) {
  const int t_len = static_cast<int>(x.rows());
  const int d = static_cast<int>(x.cols());
  xhat.resize(t_len, d);
  rstd.resize(t_len);
  out.resize(t_len, d);
  for (int t = 0; t < t_len; ++t) {
    const double mu = x.row(t).mean();
    const double var = (x.row(t).array() - mu).square().mean();
    const double r = 1.0 / std::sqrt(var + kLnEps);
    rstd(t) = r;
    xhat.row(t) = ((x.row(t).array() - mu) * r).matrix();
    out.row(t) = (xhat.row(t).array() * gain.transpose().array() +
                  bias.transpose().array())
                     .matrix();
  }
}

// dx for y = xhat .* gain + bias; accumulates dgain/dbias.
void ln_backward(const Eigen::MatrixXd& dy, const Eigen::MatrixXd& xhat,
                 const Eigen::VectorXd& rstd, const Eigen::VectorXd& gain,
                 Eigen::VectorXd& dgain, Eigen::VectorXd& dbias,
                 Eigen::MatrixXd& dx) {
  const int t_len = static_cast<int>(dy.rows());
  const int d = static_cast<int>(dy.cols());
  dx.resize(t_len, d);
  for (int t = 0; t < t_len; ++t) {
    dgain += (dy.row(t).array() * xhat.row(t).array()).matrix().transpose();
    dbias += dy.row(t).transpose();
    Eigen::ArrayXd dxhat = dy.row(t).transpose().array() * gain.array();
    const double m1 = dxhat.mean();
    const double m2 = (dxhat * xhat.row(t).transpose().array()).mean();
    dx.row(t) =
        (rstd(t) * (dxhat - m1 - xhat.row(t).transpose().array() * m2))
            .matrix()
            .transpose();
  }
}

Eigen::MatrixXd normal_matrix(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, kInitScale);
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = dist(rng);
  }
  return m;
}

void check_inputs(const ModelConfig& config, std::span<const int> token_ids,
                  std::span<const int> position_ids) {
  if (token_ids.size() != position_ids.size()) {
    throw std::invalid_argument("token/position length mismatch");
  }
  if (token_ids.empty()) throw std::invalid_argument("empty input");
  for (int id : token_ids) {
    if (id < 0 || id >= config.vocab_size) {
      throw std::invalid_argument("token id out of range: " + std::to_string(id));
    }
  }
  for (int p : position_ids) {
    if (p < 0 || p >= config.max_position) {
      throw std::invalid_argument("position id overflows max_position: " +
                                  std::to_string(p));
    }
  }
}

// Register slots are identified by token id; the offset of each one is its
// 1-based index within its run of consecutive REGISTER tokens, continuing a
// run that ends the cache if present.
std::vector<int> embed_sources(std::span<const int> token_ids,
                               const KVCache* cache) {
  int run = 0;
  if (cache) {
    for (int s = cache->size() - 1; s >= 0; --s) {
      if (cache->slots[s].role != SlotRole::kRegister) break;
      ++run;
    }
  }
  std::vector<int> src(token_ids.size(), 0);
  for (size_t i = 0; i < token_ids.size(); ++i) {
    if (token_ids[i] == Vocab::kRegister) {
      src[i] = ++run;
    } else {
      run = 0;
    }
  }
  return src;
}

Eigen::MatrixXd embed(const ModelParams& params, std::span<const int> token_ids,
                      std::span<const int> position_ids,
                      const std::vector<int>& sources) {
  const int t_len = static_cast<int>(token_ids.size());
  Eigen::MatrixXd h(t_len, params.config.d_model);
  for (int t = 0; t < t_len; ++t) {
    if (sources[t] > 0) {
      int row = 0;
      if (params.config.register_embedding == RegisterEmbedding::kDistinct) {
        // offsets past the table clamp to its last row so inference may use
        // more registers than the table was built for
        row = std::min(sources[t], params.config.register_max_offset) - 1;
      }
      h.row(t) = params.reg_embedding.row(row);
    } else {
      h.row(t) = params.tok_embedding.row(token_ids[t]);
    }
    h.row(t) += params.pos_embedding.row(position_ids[t]);
  }
  return h;
}

// Masked row softmax; rows with no allowed key become all-zero.
void masked_softmax_row(Eigen::MatrixXd& scores, int row,
                        const std::function<bool(int)>& allowed, int keys) {
  double mx = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < keys; ++k) {
    if (allowed(k)) mx = std::max(mx, scores(row, k));
  }
  if (!std::isfinite(mx)) {
    scores.row(row).setZero();
    return;
  }
  double sum = 0.0;
  for (int k = 0; k < keys; ++k) {
    if (allowed(k)) {
      const double e = std::exp(scores(row, k) - mx);
      scores(row, k) = e;
      sum += e;
    } else {
      scores(row, k) = 0.0;
    }
  }
  scores.row(row) /= sum;
}

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size < Vocab::kMinSize) throw std::invalid_argument("vocab too small");
  if (d_model <= 0 || n_layers <= 0 || n_heads <= 0 || d_ff <= 0 ||
      max_position <= 0) {
    throw std::invalid_argument("model dimensions must be positive");
  }
  if (d_model % n_heads != 0) {
    throw std::invalid_argument("d_model must be divisible by n_heads");
  }
  if (register_embedding == RegisterEmbedding::kDistinct &&
      register_max_offset < 1) {
    throw std::invalid_argument("distinct register mode needs max offset >= 1");
  }
}

ModelConfig ModelConfig::desk() {
  ModelConfig c;
  c.vocab_size = 64;
  c.d_model = 128;
  c.n_layers = 4;
  c.n_heads = 4;
  c.d_ff = 512;
  c.max_position = 512;
  return c;
}

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.vocab_size = 32;
  c.d_model = 16;
  c.n_layers = 1;
  c.n_heads = 2;
  c.d_ff = 32;
  c.max_position = 128;
  return c;
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  auto rng = make_rng(seed, "model.init");
  ModelParams p;
  p.config = config;
  p.tok_embedding = normal_matrix(config.vocab_size, config.d_model, rng);
  p.pos_embedding = normal_matrix(config.max_position, config.d_model, rng);
  const int reg_rows = config.register_embedding == RegisterEmbedding::kShared
                           ? 1
                           : config.register_max_offset;
  // register rows draw from the same distribution as fresh token embeddings
  p.reg_embedding = normal_matrix(reg_rows, config.d_model, rng);
  p.layers.resize(config.n_layers);
  for (auto& layer : p.layers) {
    layer.wq = normal_matrix(config.d_model, config.d_model, rng);
    layer.wk = normal_matrix(config.d_model, config.d_model, rng);
    layer.wv = normal_matrix(config.d_model, config.d_model, rng);
    layer.wo = normal_matrix(config.d_model, config.d_model, rng);
    layer.bq = Eigen::VectorXd::Zero(config.d_model);
    layer.bk = Eigen::VectorXd::Zero(config.d_model);
    layer.bv = Eigen::VectorXd::Zero(config.d_model);
    layer.bo = Eigen::VectorXd::Zero(config.d_model);
    layer.ln1_gain = Eigen::VectorXd::Ones(config.d_model);
    layer.ln1_bias = Eigen::VectorXd::Zero(config.d_model);
    layer.ln2_gain = Eigen::VectorXd::Ones(config.d_model);
    layer.ln2_bias = Eigen::VectorXd::Zero(config.d_model);
    layer.w_ff1 = normal_matrix(config.d_model, config.d_ff, rng);
    layer.w_ff2 = normal_matrix(config.d_ff, config.d_model, rng);
    layer.b_ff1 = Eigen::VectorXd::Zero(config.d_ff);
    layer.b_ff2 = Eigen::VectorXd::Zero(config.d_model);
  }
  p.lnf_gain = Eigen::VectorXd::Ones(config.d_model);
  p.lnf_bias = Eigen::VectorXd::Zero(config.d_model);
  return p;
}

ModelParams zeros_like(const ModelParams& params) {
  ModelParams z = params;
  visit_tensors(z, [](const std::string&, double* data, int rows, int cols) {
    std::fill(data, data + static_cast<size_t>(rows) * cols, 0.0);
  });
  return z;
}

void visit_tensors(ModelParams& params, const TensorVisitor& fn) {
  auto mat = [&fn](const std::string& name, Eigen::MatrixXd& m) {
    fn(name, m.data(), static_cast<int>(m.rows()), static_cast<int>(m.cols()));
  };
  auto vec = [&fn](const std::string& name, Eigen::VectorXd& v) {
    fn(name, v.data(), static_cast<int>(v.size()), 1);
  };
  mat("tok_embedding", params.tok_embedding);
  mat("pos_embedding", params.pos_embedding);
  mat("reg_embedding", params.reg_embedding);
  for (size_t l = 0; l < params.layers.size(); ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    auto& layer = params.layers[l];
    mat(p + "wq", layer.wq);
    vec(p + "bq", layer.bq);
    mat(p + "wk", layer.wk);
    vec(p + "bk", layer.bk);
    mat(p + "wv", layer.wv);
    vec(p + "bv", layer.bv);
    mat(p + "wo", layer.wo);
    vec(p + "bo", layer.bo);
    vec(p + "ln1_gain", layer.ln1_gain);
    vec(p + "ln1_bias", layer.ln1_bias);
    vec(p + "ln2_gain", layer.ln2_gain);
    vec(p + "ln2_bias", layer.ln2_bias);
    mat(p + "w_ff1", layer.w_ff1);
    vec(p + "b_ff1", layer.b_ff1);
    mat(p + "w_ff2", layer.w_ff2);
    vec(p + "b_ff2", layer.b_ff2);
  }
  vec("lnf_gain", params.lnf_gain);
  vec("lnf_bias", params.lnf_bias);
}

void visit_tensors(const ModelParams& params, const ConstTensorVisitor& fn) {
  visit_tensors(const_cast<ModelParams&>(params),
                [&fn](const std::string& name, double* data, int rows,
                      int cols) { fn(name, data, rows, cols); });
}

std::size_t parameter_count(const ModelParams& params) {
  std::size_t n = 0;
  visit_tensors(params, [&n](const std::string&, const double*, int rows,
                             int cols) { n += static_cast<size_t>(rows) * cols; });
  return n;
}

KVCache evict(const KVCache& cache,
              const std::function<bool(const KVCache::SlotMeta&)>& remove) {
  std::vector<int> keep;
  keep.reserve(cache.slots.size());
  for (int s = 0; s < cache.size(); ++s) {
    if (!remove(cache.slots[s])) keep.push_back(s);
  }
  KVCache out;
  out.slots.reserve(keep.size());
  for (int s : keep) out.slots.push_back(cache.slots[s]);
  out.layers.resize(cache.layers.size());
  for (size_t l = 0; l < cache.layers.size(); ++l) {
    const auto& in = cache.layers[l];
    auto& dst = out.layers[l];
    dst.k.resize(static_cast<int>(keep.size()), in.k.cols());
    dst.v.resize(static_cast<int>(keep.size()), in.v.cols());
    for (size_t i = 0; i < keep.size(); ++i) {
      dst.k.row(static_cast<int>(i)) = in.k.row(keep[i]);
      dst.v.row(static_cast<int>(i)) = in.v.row(keep[i]);
    }
  }
  return out;
}

void drop_tail(KVCache& cache, int count) {
  if (count <= 0) return;
  if (count > cache.size()) throw std::invalid_argument("drop_tail past begin");
  const int keep = cache.size() - count;
  cache.slots.resize(keep);
  for (auto& layer : cache.layers) {
    layer.k.conservativeResize(keep, Eigen::NoChange);
    layer.v.conservativeResize(keep, Eigen::NoChange);
  }
}

Eigen::MatrixXd forward(const ModelParams& params,
                        std::span<const int> token_ids,
                        std::span<const int> position_ids,
                        const AttentionMask& mask, Activations* acts) {
  const ModelConfig& cfg = params.config;
  check_inputs(cfg, token_ids, position_ids);
  const int t_len = static_cast<int>(token_ids.size());
  if (mask.n != t_len) throw std::invalid_argument("mask size mismatch");
  const int heads = cfg.n_heads;
  const int hd = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  const std::vector<int> sources = embed_sources(token_ids, nullptr);
  Eigen::MatrixXd h = embed(params, token_ids, position_ids, sources);

  if (acts) {
    acts->token_ids.assign(token_ids.begin(), token_ids.end());
    acts->position_ids.assign(position_ids.begin(), position_ids.end());
    acts->embed_source = sources;
    acts->h0 = h;
    acts->layers.resize(cfg.n_layers);
  }

  Eigen::MatrixXd xhat, ln_out;
  Eigen::VectorXd rstd;
  for (int l = 0; l < cfg.n_layers; ++l) {
    const LayerParams& layer = params.layers[l];
    LayerActivations* la = acts ? &acts->layers[l] : nullptr;
    if (la) la->x_in = h;

    ln_forward(h, layer.ln1_gain, layer.ln1_bias, xhat, rstd, ln_out);
    if (la) {
      la->ln1_xhat = xhat;
      la->ln1_rstd = rstd;
    }

    Eigen::MatrixXd q = (ln_out * layer.wq).rowwise() + layer.bq.transpose();
    Eigen::MatrixXd k = (ln_out * layer.wk).rowwise() + layer.bk.transpose();
    Eigen::MatrixXd v = (ln_out * layer.wv).rowwise() + layer.bv.transpose();
    if (la) {
      la->q = q;
      la->k = k;
      la->v = v;
      la->att.resize(heads);
    }

    Eigen::MatrixXd ctx(t_len, cfg.d_model);
    for (int head = 0; head < heads; ++head) {
      auto qh = q.middleCols(head * hd, hd);
      auto kh = k.middleCols(head * hd, hd);
      auto vh = v.middleCols(head * hd, hd);
      Eigen::MatrixXd probs = qh * kh.transpose() * scale;
      for (int row = 0; row < t_len; ++row) {
        masked_softmax_row(
            probs, row, [&mask, row](int key) { return mask.allowed(row, key); },
            t_len);
      }
      ctx.middleCols(head * hd, hd) = probs * vh;
      if (la) la->att[head] = std::move(probs);
    }
    if (la) la->ctx = ctx;

    h += (ctx * layer.wo).rowwise() + layer.bo.transpose();
    if (la) la->h_mid = h;

    ln_forward(h, layer.ln2_gain, layer.ln2_bias, xhat, rstd, ln_out);
    if (la) {
      la->ln2_xhat = xhat;
      la->ln2_rstd = rstd;
    }
    Eigen::MatrixXd ff_pre =
        (ln_out * layer.w_ff1).rowwise() + layer.b_ff1.transpose();
    Eigen::MatrixXd ff_act = ff_pre.unaryExpr([](double x) { return gelu(x); });
    if (la) {
      la->ff_pre = ff_pre;
      la->ff_act = ff_act;
    }
    h += (ff_act * layer.w_ff2).rowwise() + layer.b_ff2.transpose();
  }

  if (acts) acts->h_final = h;
  ln_forward(h, params.lnf_gain, params.lnf_bias, xhat, rstd, ln_out);
  if (acts) {
    acts->lnf_xhat = xhat;
    acts->lnf_rstd = rstd;
    acts->lnf_out = ln_out;
  }
  return ln_out * params.tok_embedding.transpose();
}

Eigen::MatrixXd forward(const ModelParams& params,
                        std::span<const int> token_ids,
                        std::span<const int> position_ids, KVCache& cache) {
  const ModelConfig& cfg = params.config;
  check_inputs(cfg, token_ids, position_ids);
  const int t_new = static_cast<int>(token_ids.size());
  const int t_old = cache.size();
  const int t_tot = t_old + t_new;
  const int heads = cfg.n_heads;
  const int hd = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  if (cache.layers.empty()) {
    cache.layers.resize(cfg.n_layers);
    for (auto& layer : cache.layers) {
      layer.k.resize(0, cfg.d_model);
      layer.v.resize(0, cfg.d_model);
    }
  } else if (static_cast<int>(cache.layers.size()) != cfg.n_layers) {
    throw std::runtime_error("cache layer count does not match the model");
  }
  for (const auto& layer : cache.layers) {
    if (layer.k.rows() != t_old || layer.v.rows() != t_old) {
      throw std::runtime_error("cache slot metadata desynchronized");
    }
  }

  const std::vector<int> sources = embed_sources(token_ids, &cache);
  Eigen::MatrixXd h = embed(params, token_ids, position_ids, sources);

  Eigen::MatrixXd xhat, ln_out;
  Eigen::VectorXd rstd;
  for (int l = 0; l < cfg.n_layers; ++l) {
    const LayerParams& layer = params.layers[l];
    ln_forward(h, layer.ln1_gain, layer.ln1_bias, xhat, rstd, ln_out);
    Eigen::MatrixXd q = (ln_out * layer.wq).rowwise() + layer.bq.transpose();
    Eigen::MatrixXd k = (ln_out * layer.wk).rowwise() + layer.bk.transpose();
    Eigen::MatrixXd v = (ln_out * layer.wv).rowwise() + layer.bv.transpose();

    auto& kv = cache.layers[l];
    kv.k.conservativeResize(t_tot, Eigen::NoChange);
    kv.v.conservativeResize(t_tot, Eigen::NoChange);
    kv.k.bottomRows(t_new) = k;
    kv.v.bottomRows(t_new) = v;

    Eigen::MatrixXd ctx(t_new, cfg.d_model);
    for (int head = 0; head < heads; ++head) {
      auto qh = q.middleCols(head * hd, hd);
      auto kh = kv.k.middleCols(head * hd, hd);
      auto vh = kv.v.middleCols(head * hd, hd);
      Eigen::MatrixXd probs = qh * kh.transpose() * scale;
      for (int row = 0; row < t_new; ++row) {
        const int last_key = t_old + row;  // implicit causal mask
        masked_softmax_row(
            probs, row, [last_key](int key) { return key <= last_key; }, t_tot);
      }
      ctx.middleCols(head * hd, hd) = probs * vh;
    }
    h += (ctx * layer.wo).rowwise() + layer.bo.transpose();

    ln_forward(h, layer.ln2_gain, layer.ln2_bias, xhat, rstd, ln_out);
    Eigen::MatrixXd ff_pre =
        (ln_out * layer.w_ff1).rowwise() + layer.b_ff1.transpose();
    Eigen::MatrixXd ff_act = ff_pre.unaryExpr([](double x) { return gelu(x); });
    h += (ff_act * layer.w_ff2).rowwise() + layer.b_ff2.transpose();
  }

  for (int t = 0; t < t_new; ++t) {
    KVCache::SlotMeta meta;
    meta.role = sources[t] > 0 ? SlotRole::kRegister : SlotRole::kRegular;
    meta.offset = sources[t];
    meta.position = position_ids[t];
    cache.slots.push_back(meta);
  }

  ln_forward(h, params.lnf_gain, params.lnf_bias, xhat, rstd, ln_out);
  return ln_out * params.tok_embedding.transpose();
}

void backward(const ModelParams& params, const Activations& acts,
              const Eigen::MatrixXd& dlogits, ModelParams& grads) {
  const ModelConfig& cfg = params.config;
  const int t_len = static_cast<int>(acts.token_ids.size());
  if (dlogits.rows() != t_len || dlogits.cols() != cfg.vocab_size) {
    throw std::invalid_argument("dlogits shape mismatch");
  }
  const int heads = cfg.n_heads;
  const int hd = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  // tied head: logits = lnf_out * E^T
  grads.tok_embedding.noalias() += dlogits.transpose() * acts.lnf_out;
  Eigen::MatrixXd dh = dlogits * params.tok_embedding;

  Eigen::MatrixXd dx;
  ln_backward(dh, acts.lnf_xhat, acts.lnf_rstd, params.lnf_gain, grads.lnf_gain,
              grads.lnf_bias, dx);
  dh = dx;  // gradient w.r.t. the final block output

  for (int l = cfg.n_layers - 1; l >= 0; --l) {
    const LayerParams& layer = params.layers[l];
    LayerParams& g = grads.layers[l];
    const LayerActivations& la = acts.layers[l];

    // feed-forward sub-block
    Eigen::MatrixXd ln2_out =
        ((la.ln2_xhat.array().rowwise() * layer.ln2_gain.transpose().array())
             .rowwise() +
         layer.ln2_bias.transpose().array())
            .matrix();
    g.b_ff2 += dh.colwise().sum().transpose();
    g.w_ff2.noalias() += la.ff_act.transpose() * dh;
    Eigen::MatrixXd dff_act = dh * layer.w_ff2.transpose();
    Eigen::MatrixXd dff_pre =
        (dff_act.array() *
         la.ff_pre.unaryExpr([](double x) { return gelu_grad(x); }).array())
            .matrix();
    g.b_ff1 += dff_pre.colwise().sum().transpose();
    g.w_ff1.noalias() += ln2_out.transpose() * dff_pre;
    Eigen::MatrixXd dln2_out = dff_pre * layer.w_ff1.transpose();
    ln_backward(dln2_out, la.ln2_xhat, la.ln2_rstd, layer.ln2_gain, g.ln2_gain,
                g.ln2_bias, dx);
    Eigen::MatrixXd dh_mid = dh + dx;  // residual + normalized branch

    // attention sub-block
    g.bo += dh_mid.colwise().sum().transpose();
    g.wo.noalias() += la.ctx.transpose() * dh_mid;
    Eigen::MatrixXd dctx = dh_mid * layer.wo.transpose();

    Eigen::MatrixXd dq(t_len, cfg.d_model), dk(t_len, cfg.d_model),
        dv(t_len, cfg.d_model);
    for (int head = 0; head < heads; ++head) {
      const Eigen::MatrixXd& probs = la.att[head];
      auto dctx_h = dctx.middleCols(head * hd, hd);
      auto kh = la.k.middleCols(head * hd, hd);
      auto vh = la.v.middleCols(head * hd, hd);
      auto qh = la.q.middleCols(head * hd, hd);

      Eigen::MatrixXd dprobs = dctx_h * vh.transpose();
      dv.middleCols(head * hd, hd).noalias() = probs.transpose() * dctx_h;
      // softmax backward; all-zero (fully masked) rows stay zero
      Eigen::VectorXd rowdot =
          (dprobs.array() * probs.array()).rowwise().sum().matrix();
      Eigen::MatrixXd dscores =
          (probs.array() * (dprobs.array().colwise() - rowdot.array()))
              .matrix();
      dq.middleCols(head * hd, hd).noalias() = dscores * kh * scale;
      dk.middleCols(head * hd, hd).noalias() =
          dscores.transpose() * qh * scale;
    }

    Eigen::MatrixXd ln1_out =
        ((la.ln1_xhat.array().rowwise() * layer.ln1_gain.transpose().array())
             .rowwise() +
         layer.ln1_bias.transpose().array())
            .matrix();
    g.bq += dq.colwise().sum().transpose();
    g.bk += dk.colwise().sum().transpose();
    g.bv += dv.colwise().sum().transpose();
    g.wq.noalias() += ln1_out.transpose() * dq;
    g.wk.noalias() += ln1_out.transpose() * dk;
    g.wv.noalias() += ln1_out.transpose() * dv;
    Eigen::MatrixXd dln1_out = dq * layer.wq.transpose();
    dln1_out.noalias() += dk * layer.wk.transpose();
    dln1_out.noalias() += dv * layer.wv.transpose();
    ln_backward(dln1_out, la.ln1_xhat, la.ln1_rstd, layer.ln1_gain, g.ln1_gain,
                g.ln1_bias, dx);
    dh = dh_mid + dx;  // becomes the gradient w.r.t. the block input
  }

  // embedding scatter
  for (int t = 0; t < t_len; ++t) {
    if (acts.embed_source[t] > 0) {
      int row = 0;
      if (cfg.register_embedding == RegisterEmbedding::kDistinct) {
        row = std::min(acts.embed_source[t], cfg.register_max_offset) - 1;
      }
      grads.reg_embedding.row(row) += dh.row(t);
    } else {
      grads.tok_embedding.row(acts.token_ids[t]) += dh.row(t);
    }
    grads.pos_embedding.row(acts.position_ids[t]) += dh.row(t);
  }
}

}  // namespace ptp
