// Long-document transformer encoder with block-sparse attention
// (window + global + random blocks), a dense oracle path, and exact
// reverse-mode gradients.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "graphcoder/common.hpp"
#include "graphcoder/corpus.hpp"

namespace graphcoder {

enum class EncoderMode { Sparse, Dense, Truncate512 };

inline EncoderMode encoder_mode_from_string(const std::string& s) {
  if (s == "sparse") return EncoderMode::Sparse;
  if (s == "dense") return EncoderMode::Dense;
  if (s == "truncate512") return EncoderMode::Truncate512;
  throw ConfigError("unknown encoder mode: " + s);
}

inline std::string to_string(EncoderMode m) {
  switch (m) {
    case EncoderMode::Sparse: return "sparse";
    case EncoderMode::Dense: return "dense";
    case EncoderMode::Truncate512: return "truncate512";
  }
  return "?";
}

struct EncoderConfig {
  int t_max = 4096;
  int hidden = 64;
  int layers = 2;
  int heads = 4;
  int block_size = 8;
  int window_blocks = 3;   // odd; centered on the query block
  int global_blocks = 1;   // leading blocks, visible to and from everyone
  int random_blocks = 2;
  std::uint64_t pattern_seed = 1234;
  EncoderMode mode = EncoderMode::Sparse;

  int head_dim() const { return hidden / heads; }
  int ffn_dim() const { return 4 * hidden; }

  void validate() const {
    if (t_max < 1) throw ConfigError("t_max must be positive");
    if (block_size < 1) throw ConfigError("block_size must be positive");
    if (t_max % block_size != 0) throw ConfigError("t_max must be divisible by block_size");
    if (hidden < 1 || heads < 1 || hidden % heads != 0) {
      throw ConfigError("hidden must be divisible by heads");
    }
    if (layers < 0) throw ConfigError("layers must be non-negative");
    if (window_blocks < 1 || window_blocks % 2 == 0) throw ConfigError("window_blocks must be odd");
    if (global_blocks < 0 || random_blocks < 0) throw ConfigError("block counts must be non-negative");
  }
};

// Block-level visibility sets. Deterministic given (t, config, pattern_seed).
struct SparsityPattern {
  int n_blocks = 0;
  int block_size = 0;
  std::vector<std::vector<int>> visible;  // sorted key-block ids per query block

  static SparsityPattern complete(int n_blocks, int block_size) {
    SparsityPattern p;
    p.n_blocks = n_blocks;
    p.block_size = block_size;
    p.visible.assign(static_cast<std::size_t>(n_blocks), {});
    for (auto& v : p.visible) {
      v.resize(static_cast<std::size_t>(n_blocks));
      for (int b = 0; b < n_blocks; ++b) v[static_cast<std::size_t>(b)] = b;
    }
    return p;
  }
};

inline SparsityPattern build_pattern(const EncoderConfig& cfg, int t) {
  cfg.validate();
  if (t < 1) throw ConfigError("pattern needs at least one token");
  if (t > cfg.t_max) throw ConfigError("t exceeds t_max");
  const int n_blocks = (t + cfg.block_size - 1) / cfg.block_size;
  if (cfg.mode == EncoderMode::Dense) return SparsityPattern::complete(n_blocks, cfg.block_size);

  SparsityPattern p;
  p.n_blocks = n_blocks;
  p.block_size = cfg.block_size;
  p.visible.assign(static_cast<std::size_t>(n_blocks), {});
  const int w = (cfg.window_blocks - 1) / 2;
  const int n_global = std::min(cfg.global_blocks, n_blocks);
  Rng rng(derive_seed(cfg.pattern_seed, "pattern-" + std::to_string(n_blocks)));

  for (int qb = 0; qb < n_blocks; ++qb) {
    std::vector<char> vis(static_cast<std::size_t>(n_blocks), 0);
    if (qb < n_global) {
      // Global blocks attend everywhere.
      std::fill(vis.begin(), vis.end(), 1);
    } else {
      for (int kb = std::max(0, qb - w); kb <= std::min(n_blocks - 1, qb + w); ++kb) {
        vis[static_cast<std::size_t>(kb)] = 1;
      }
      for (int g = 0; g < n_global; ++g) vis[static_cast<std::size_t>(g)] = 1;
      if (cfg.random_blocks > 0) {
        std::vector<int> candidates;
        for (int kb = 0; kb < n_blocks; ++kb) {
          if (!vis[static_cast<std::size_t>(kb)]) candidates.push_back(kb);
        }
        if (static_cast<int>(candidates.size()) < cfg.random_blocks) {
          throw PatternError("random_blocks exceeds the blocks available to query block " +
                             std::to_string(qb));
        }
        for (int r = 0; r < cfg.random_blocks; ++r) {
          const std::size_t pick = r + static_cast<std::size_t>(rng.below(candidates.size() - static_cast<std::size_t>(r)));
          std::swap(candidates[static_cast<std::size_t>(r)], candidates[pick]);
          vis[static_cast<std::size_t>(candidates[static_cast<std::size_t>(r)])] = 1;
        }
      }
    }
    auto& out = p.visible[static_cast<std::size_t>(qb)];
    for (int kb = 0; kb < n_blocks; ++kb) {
      if (vis[static_cast<std::size_t>(kb)]) out.push_back(kb);
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

template <class S>
struct EncoderLayerParams {
  Mat<S> wq, wk, wv, wo;   // hidden x hidden
  Mat<S> w_ff1, w_ff2;     // hidden x 4*hidden, 4*hidden x hidden
  Vec<S> ln1_g, ln1_b, ln2_g, ln2_b;
};

template <class S>
struct EncoderParams {
  Mat<S> token_emb;  // vocab x hidden
  Mat<S> pos_emb;    // t_max x hidden
  std::vector<EncoderLayerParams<S>> layers;
};

// ---------------------------------------------------------------------------
// Numeric helpers
// ---------------------------------------------------------------------------

// Tanh-form GELU; keeps the inner tanh for the backward pass and stays on
// Eigen's vectorized kernels.
template <class S>
void gelu_forward(const Mat<S>& x, Mat<S>& y, Mat<S>& inner_tanh) {
  const S c0 = S(0.7978845608028654);  // sqrt(2/pi)
  const S c1 = S(0.044715);
  inner_tanh = (c0 * (x.array() + c1 * x.array().cube())).tanh().matrix();
  y = (S(0.5) * x.array() * (S(1) + inner_tanh.array())).matrix();
}

template <class S>
Mat<S> gelu_backward(const Mat<S>& dy, const Mat<S>& x, const Mat<S>& inner_tanh) {
  const S c0 = S(0.7978845608028654);
  const S c1 = S(0.044715);
  auto th = inner_tanh.array();
  auto grad = S(0.5) * (S(1) + th) +
              S(0.5) * x.array() * (S(1) - th.square()) *
                  (c0 * (S(1) + S(3) * c1 * x.array().square()));
  return (dy.array() * grad).matrix();
}

template <class S>
void layernorm_forward(const Mat<S>& x, const Vec<S>& g, const Vec<S>& b,
                       Mat<S>& y, Mat<S>& xhat, Vec<S>& inv_sigma) {
  const S eps = S(1e-5);
  const Vec<S> mu = x.rowwise().mean();
  xhat = x.colwise() - mu;
  const Vec<S> var = xhat.array().square().rowwise().mean();
  inv_sigma = (var.array() + eps).rsqrt();
  xhat.array().colwise() *= inv_sigma.array();
  y = xhat;
  y.array().rowwise() *= g.transpose().array();
  y.array().rowwise() += b.transpose().array();
}

// Accumulates dx, dg, db from dy; xhat/inv_sigma come from the forward pass.
template <class S>
void layernorm_backward(const Mat<S>& dy, const Mat<S>& xhat, const Vec<S>& inv_sigma,
                        const Vec<S>& g, Mat<S>& dx, Vec<S>& dg, Vec<S>& db) {
  Mat<S> dyh = dy;
  dyh.array().rowwise() *= g.transpose().array();
  const Vec<S> m1 = dyh.rowwise().mean();
  const Vec<S> m2 = (dyh.cwiseProduct(xhat)).rowwise().mean();
  dyh.colwise() -= m1;
  dyh -= (xhat.array().colwise() * m2.array()).matrix();
  dx += (dyh.array().colwise() * inv_sigma.array()).matrix();
  dg += (dy.cwiseProduct(xhat)).colwise().sum().transpose();
  db += dy.colwise().sum().transpose();
}

// ---------------------------------------------------------------------------
// Forward/backward
// ---------------------------------------------------------------------------

template <class S>
struct EncoderLayerCache {
  Mat<S> x_in;                         // residual stream entering the layer
  Mat<S> xhat1, a;                     // LN1 internals and output
  Vec<S> sig1;
  MatR<S> q, k, v;                     // projections; row-major for block gathers
  std::vector<Mat<S>> w;               // [query block] heads stacked: (heads*bs) x (nv*bs)
  std::vector<Mat<S>> w_dense;         // [head] full t x t rows (dense path)
  MatR<S> attn_concat;                 // heads re-assembled, before wo
  Mat<S> x_mid;                        // after attention residual
  Mat<S> xhat2, b2;
  Vec<S> sig2;
  Mat<S> ff_pre, ff_act, ff_tanh;
};

template <class S>
struct EncoderCache {
  std::vector<int> ids_proc;       // padded to t_proc
  std::vector<std::uint8_t> key_mask;  // 1 = real token, length t_proc
  int t_in = 0, t_eff = 0, t_proc = 0;
  bool dense_path = false;
  SparsityPattern pattern;
  std::vector<EncoderLayerCache<S>> layers;
  Mat<S> x_out;                    // final residual stream, t_proc rows

  // Gather/scatter scratch, reused across documents so the block loop stays
  // allocation-free after warm-up.
  MatR<S> ws_kg, ws_vg, ws_dkg, ws_dvg;
  Mat<S> ws_dw;
  std::vector<std::uint8_t> ws_kmask;
};

// Token ids -> contextual rows. `mask` gets one flag per returned row.
// Trailing PAD ids are excluded from the pattern length, so appending padding
// never changes the representation of real positions.
template <class S>
Mat<S> encode(const std::vector<int>& token_ids, const EncoderConfig& cfg,
              const EncoderParams<S>& params, std::vector<std::uint8_t>& mask,
              EncoderCache<S>* cache, const SparsityPattern* pattern_override = nullptr) {
  cfg.validate();
  std::vector<int> ids = token_ids;
  if (cfg.mode == EncoderMode::Truncate512 && static_cast<int>(ids.size()) > 512) {
    ids.resize(512);
  }
  const int t_in = static_cast<int>(ids.size());
  if (t_in == 0) throw MaskError("encode: empty token sequence");
  if (t_in > cfg.t_max) throw ConfigError("encode: document longer than t_max");
  const int vocab_rows = static_cast<int>(params.token_emb.rows());
  int t_eff = 0;
  for (int i = 0; i < t_in; ++i) {
    if (ids[static_cast<std::size_t>(i)] < 0 || ids[static_cast<std::size_t>(i)] >= vocab_rows) {
      throw VocabError("token id out of range at position " + std::to_string(i));
    }
    if (ids[static_cast<std::size_t>(i)] != Vocab::kPad) t_eff = i + 1;
  }
  if (t_eff == 0) throw MaskError("encode: all tokens are padding");

  const int n_blocks = (t_eff + cfg.block_size - 1) / cfg.block_size;
  const int t_proc = n_blocks * cfg.block_size;
  EncoderCache<S> local;
  EncoderCache<S>& cc = cache ? *cache : local;
  cc.t_in = t_in;
  cc.t_eff = t_eff;
  cc.t_proc = t_proc;
  cc.dense_path = (cfg.mode == EncoderMode::Dense);
  cc.pattern = pattern_override ? *pattern_override : build_pattern(cfg, t_eff);
  if (cc.pattern.n_blocks != n_blocks || cc.pattern.block_size != cfg.block_size) {
    throw PatternError("pattern does not match the document's block count");
  }
  cc.ids_proc.assign(static_cast<std::size_t>(t_proc), Vocab::kPad);
  std::copy(ids.begin(), ids.begin() + std::min(t_in, t_proc), cc.ids_proc.begin());
  cc.key_mask.assign(static_cast<std::size_t>(t_proc), 0);
  for (int i = 0; i < t_proc; ++i) {
    cc.key_mask[static_cast<std::size_t>(i)] = cc.ids_proc[static_cast<std::size_t>(i)] != Vocab::kPad;
  }

  mask.assign(static_cast<std::size_t>(t_in), 0);
  for (int i = 0; i < t_in; ++i) {
    mask[static_cast<std::size_t>(i)] = ids[static_cast<std::size_t>(i)] != Vocab::kPad;
  }

  const int h = cfg.hidden;
  Mat<S> x(t_proc, h);
  for (int i = 0; i < t_proc; ++i) {
    x.row(i) = params.token_emb.row(cc.ids_proc[static_cast<std::size_t>(i)]) + params.pos_emb.row(i);
  }

  const int bs = cfg.block_size;
  const int dh = cfg.head_dim();
  const S inv_sqrt_dh = S(1) / std::sqrt(static_cast<S>(dh));
  const S neg_big = S(-1e9);

  cc.layers.resize(static_cast<std::size_t>(cfg.layers));
  for (int li = 0; li < cfg.layers; ++li) {
    auto& L = params.layers[static_cast<std::size_t>(li)];
    auto& C = cc.layers[static_cast<std::size_t>(li)];
    C.x_in = x;
    layernorm_forward(C.x_in, L.ln1_g, L.ln1_b, C.a, C.xhat1, C.sig1);
    C.q.noalias() = C.a * L.wq;
    C.k.noalias() = C.a * L.wk;
    C.v.noalias() = C.a * L.wv;
    C.attn_concat.resize(t_proc, h);

    if (cc.dense_path) {
      // Straight full-matrix attention; kept independent of the block path so
      // it can serve as its oracle.
      C.w_dense.resize(static_cast<std::size_t>(cfg.heads));
      for (int hd = 0; hd < cfg.heads; ++hd) {
        Mat<S> scores = C.q.middleCols(hd * dh, dh) * C.k.middleCols(hd * dh, dh).transpose();
        scores *= inv_sqrt_dh;
        for (int c = 0; c < t_proc; ++c) {
          if (!cc.key_mask[static_cast<std::size_t>(c)]) scores.col(c).array() += neg_big;
        }
        softmax_rows(scores);
        C.w_dense[static_cast<std::size_t>(hd)] = scores;
        C.attn_concat.middleCols(hd * dh, dh).noalias() =
            scores * C.v.middleCols(hd * dh, dh);
      }
    } else {
      C.w.resize(static_cast<std::size_t>(n_blocks));
      cc.ws_kg.resize(t_proc, h);
      cc.ws_vg.resize(t_proc, h);
      cc.ws_kmask.resize(static_cast<std::size_t>(t_proc));
      for (int qb = 0; qb < n_blocks; ++qb) {
        const auto& vis = cc.pattern.visible[static_cast<std::size_t>(qb)];
        const int nv = static_cast<int>(vis.size());
        const int nk = nv * bs;
        for (int vi = 0; vi < nv; ++vi) {
          const int kb = vis[static_cast<std::size_t>(vi)];
          cc.ws_kg.middleRows(vi * bs, bs) = C.k.middleRows(kb * bs, bs);
          cc.ws_vg.middleRows(vi * bs, bs) = C.v.middleRows(kb * bs, bs);
          for (int r = 0; r < bs; ++r) {
            cc.ws_kmask[static_cast<std::size_t>(vi * bs + r)] =
                cc.key_mask[static_cast<std::size_t>(kb * bs + r)];
          }
        }
        const auto kg = cc.ws_kg.topRows(nk);
        const auto vg = cc.ws_vg.topRows(nk);
        Mat<S>& w_qb = C.w[static_cast<std::size_t>(qb)];
        w_qb.resize(cfg.heads * bs, nk);
        for (int hd = 0; hd < cfg.heads; ++hd) {
          w_qb.middleRows(hd * bs, bs).noalias() =
              C.q.block(qb * bs, hd * dh, bs, dh) * kg.middleCols(hd * dh, dh).transpose();
        }
        w_qb *= inv_sqrt_dh;
        for (int c = 0; c < nk; ++c) {
          if (!cc.ws_kmask[static_cast<std::size_t>(c)]) w_qb.col(c).array() += neg_big;
        }
        softmax_rows(w_qb);  // every row is one (head, query) distribution
        for (int hd = 0; hd < cfg.heads; ++hd) {
          C.attn_concat.block(qb * bs, hd * dh, bs, dh).noalias() =
              w_qb.middleRows(hd * bs, bs) * vg.middleCols(hd * dh, dh);
        }
      }
    }

    C.x_mid = C.x_in + C.attn_concat * L.wo;
    layernorm_forward(C.x_mid, L.ln2_g, L.ln2_b, C.b2, C.xhat2, C.sig2);
    C.ff_pre.noalias() = C.b2 * L.w_ff1;
    gelu_forward(C.ff_pre, C.ff_act, C.ff_tanh);
    x = C.x_mid;
    x.noalias() += C.ff_act * L.w_ff2;
  }
  cc.x_out = x;

  Mat<S> out = Mat<S>::Zero(t_in, h);
  const int copy_rows = std::min(t_in, t_proc);
  out.topRows(copy_rows) = x.topRows(copy_rows);
  return out;
}

// Exact gradients for every encoder parameter plus the token/positional
// embedding rows the document touched.
template <class S>
void encode_backward(const Mat<S>& d_h, const EncoderConfig& cfg,
                     const EncoderParams<S>& params, const EncoderCache<S>& cc,
                     EncoderParams<S>& grads) {
  if (cc.t_proc == 0 || cc.layers.size() != static_cast<std::size_t>(cfg.layers)) {
    throw StateError("encode_backward: forward cache missing");
  }
  if (d_h.rows() != cc.t_in || d_h.cols() != cfg.hidden) {
    throw ShapeError("encode_backward: upstream gradient shape mismatch");
  }
  const int t_proc = cc.t_proc;
  const int bs = cfg.block_size;
  const int dh = cfg.head_dim();
  const int h = cfg.hidden;
  const S inv_sqrt_dh = S(1) / std::sqrt(static_cast<S>(dh));

  Mat<S> dx = Mat<S>::Zero(t_proc, h);
  const int copy_rows = std::min(cc.t_in, t_proc);
  dx.topRows(copy_rows) = d_h.topRows(copy_rows);

  for (int li = cfg.layers - 1; li >= 0; --li) {
    auto& L = params.layers[static_cast<std::size_t>(li)];
    auto& G = grads.layers[static_cast<std::size_t>(li)];
    const auto& C = cc.layers[static_cast<std::size_t>(li)];

    // Feed-forward block.
    Mat<S> d_ff_act = dx * L.w_ff2.transpose();
    G.w_ff2.noalias() += C.ff_act.transpose() * dx;
    Mat<S> d_ff_pre = gelu_backward(d_ff_act, C.ff_pre, C.ff_tanh);
    G.w_ff1.noalias() += C.b2.transpose() * d_ff_pre;
    Mat<S> d_b2 = d_ff_pre * L.w_ff1.transpose();
    Mat<S> d_x_mid = dx;  // residual branch
    layernorm_backward(d_b2, C.xhat2, C.sig2, L.ln2_g, d_x_mid, G.ln2_g, G.ln2_b);

    // Attention block.
    MatR<S> d_attn_concat = d_x_mid * L.wo.transpose();
    G.wo.noalias() += C.attn_concat.transpose() * d_x_mid;
    MatR<S> dq = MatR<S>::Zero(t_proc, h);
    MatR<S> dk = MatR<S>::Zero(t_proc, h);
    MatR<S> dv = MatR<S>::Zero(t_proc, h);

    if (cc.dense_path) {
      for (int hd = 0; hd < cfg.heads; ++hd) {
        const Mat<S>& w = C.w_dense[static_cast<std::size_t>(hd)];
        const auto d_oh = d_attn_concat.middleCols(hd * dh, dh);
        Mat<S> dw = d_oh * C.v.middleCols(hd * dh, dh).transpose();
        dv.middleCols(hd * dh, dh).noalias() += w.transpose() * d_oh;
        Vec<S> row_dot = (dw.cwiseProduct(w)).rowwise().sum();
        Mat<S> ds = w.cwiseProduct(dw.colwise() - row_dot);
        dq.middleCols(hd * dh, dh).noalias() += ds * C.k.middleCols(hd * dh, dh) * inv_sqrt_dh;
        dk.middleCols(hd * dh, dh).noalias() += ds.transpose() * C.q.middleCols(hd * dh, dh) * inv_sqrt_dh;
      }
    } else {
      const int n_blocks = cc.pattern.n_blocks;
      EncoderCache<S>& ws = const_cast<EncoderCache<S>&>(cc);  // scratch only
      ws.ws_kg.resize(t_proc, h);
      ws.ws_vg.resize(t_proc, h);
      ws.ws_dkg.resize(t_proc, h);
      ws.ws_dvg.resize(t_proc, h);
      ws.ws_dw.resize(cfg.heads * bs, t_proc);
      for (int qb = 0; qb < n_blocks; ++qb) {
        const auto& vis = cc.pattern.visible[static_cast<std::size_t>(qb)];
        const int nv = static_cast<int>(vis.size());
        const int nk = nv * bs;
        for (int vi = 0; vi < nv; ++vi) {
          const int kb = vis[static_cast<std::size_t>(vi)];
          ws.ws_kg.middleRows(vi * bs, bs) = C.k.middleRows(kb * bs, bs);
          ws.ws_vg.middleRows(vi * bs, bs) = C.v.middleRows(kb * bs, bs);
        }
        const auto kg = ws.ws_kg.topRows(nk);
        const auto vg = ws.ws_vg.topRows(nk);
        const Mat<S>& w_qb = C.w[static_cast<std::size_t>(qb)];
        auto dw = ws.ws_dw.leftCols(nk);
        for (int hd = 0; hd < cfg.heads; ++hd) {
          dw.middleRows(hd * bs, bs).noalias() =
              d_attn_concat.block(qb * bs, hd * dh, bs, dh) *
              vg.middleCols(hd * dh, dh).transpose();
          ws.ws_dvg.topRows(nk).middleCols(hd * dh, dh).noalias() =
              w_qb.middleRows(hd * bs, bs).transpose() *
              d_attn_concat.block(qb * bs, hd * dh, bs, dh);
        }
        const Vec<S> row_dot = (dw.cwiseProduct(w_qb)).rowwise().sum();
        const Mat<S> ds =
            (w_qb.array() * (dw.colwise() - row_dot).array() * inv_sqrt_dh).matrix();
        for (int hd = 0; hd < cfg.heads; ++hd) {
          dq.block(qb * bs, hd * dh, bs, dh).noalias() +=
              ds.middleRows(hd * bs, bs) * kg.middleCols(hd * dh, dh);
          ws.ws_dkg.topRows(nk).middleCols(hd * dh, dh).noalias() =
              ds.middleRows(hd * bs, bs).transpose() * C.q.block(qb * bs, hd * dh, bs, dh);
        }
        for (int vi = 0; vi < nv; ++vi) {
          const int kb = vis[static_cast<std::size_t>(vi)];
          dk.middleRows(kb * bs, bs) += ws.ws_dkg.middleRows(vi * bs, bs);
          dv.middleRows(kb * bs, bs) += ws.ws_dvg.middleRows(vi * bs, bs);
        }
      }
    }

    Mat<S> da = dq * L.wq.transpose();
    da.noalias() += dk * L.wk.transpose();
    da.noalias() += dv * L.wv.transpose();
    G.wq.noalias() += C.a.transpose() * dq;
    G.wk.noalias() += C.a.transpose() * dk;
    G.wv.noalias() += C.a.transpose() * dv;

    Mat<S> d_x_in = d_x_mid;  // residual branch
    layernorm_backward(da, C.xhat1, C.sig1, L.ln1_g, d_x_in, G.ln1_g, G.ln1_b);
    dx = std::move(d_x_in);
  }

  for (int i = 0; i < t_proc; ++i) {
    grads.token_emb.row(cc.ids_proc[static_cast<std::size_t>(i)]) += dx.row(i);
    grads.pos_emb.row(i) += dx.row(i);
  }
}

}  // namespace graphcoder
