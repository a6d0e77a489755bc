// Per-label attention classification head: projection, label attention over
// tokens, per-label scoring, and the label-distribution-aware margin.
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "graphcoder/common.hpp"

namespace graphcoder {

enum class HeadMode { Graph, Linear, Cls };

inline HeadMode head_mode_from_string(const std::string& s) {
  if (s == "graph") return HeadMode::Graph;
  if (s == "linear") return HeadMode::Linear;
  if (s == "cls") return HeadMode::Cls;
  throw ConfigError("unknown head mode: " + s);
}

inline std::string to_string(HeadMode m) {
  switch (m) {
    case HeadMode::Graph: return "graph";
    case HeadMode::Linear: return "linear";
    case HeadMode::Cls: return "cls";
  }
  return "?";
}

template <class S>
struct HeadParams {
  Mat<S> w1;     // hidden x (m+h) projection
  Mat<S> w_cls;  // n x (m+h) per-label classifier
};

// H_proj = ReLU(H W1).
template <class S>
Mat<S> project(const Mat<S>& h, const Mat<S>& w1) {
  if (h.cols() != w1.rows()) throw ShapeError("project: H and W1 widths disagree");
  Mat<S> p = h * w1;
  return p.cwiseMax(S(0));
}

// Attention rows, one distribution over non-padded token positions per label.
// Scores are U H_projᵀ with padded columns pushed to -1e9 before the softmax.
template <class S>
Mat<S> label_attention(const Mat<S>& u, const Mat<S>& h_proj,
                       const std::vector<std::uint8_t>& mask) {
  if (u.cols() != h_proj.cols()) throw ShapeError("label_attention: feature widths disagree");
  if (static_cast<Eigen::Index>(mask.size()) != h_proj.rows()) {
    throw ShapeError("label_attention: mask length disagrees with token count");
  }
  bool any_real = false;
  for (const auto m : mask) any_real = any_real || m;
  if (!any_real) throw MaskError("label_attention: every token is padded");

  Mat<S> scores = u * h_proj.transpose();  // n x t
  for (Eigen::Index c = 0; c < scores.cols(); ++c) {
    if (!mask[static_cast<std::size_t>(c)]) scores.col(c).array() += S(-1e9);
  }
  softmax_rows(scores);
  return scores;
}

// V = Attn H_proj; each row a convex mixture of token representations.
template <class S>
Mat<S> attend(const Mat<S>& attn, const Mat<S>& h_proj) {
  if (attn.cols() != h_proj.rows()) throw ShapeError("attend: token counts disagree");
  return attn * h_proj;
}

// logits[l] = sum_f V[l][f] * W_cls[l][f]; the feature-sum pooling.
template <class S>
Vec<S> score(const Mat<S>& v, const Mat<S>& w_cls) {
  if (v.rows() != w_cls.rows() || v.cols() != w_cls.cols()) {
    throw ShapeError("score: V and W_cls shapes disagree");
  }
  return (v.cwiseProduct(w_cls)).rowwise().sum();
}

// ---------------------------------------------------------------------------
// Label-distribution-aware margin
// ---------------------------------------------------------------------------

struct LdamConfig {
  double c = 2.0;
  VecD margins;  // delta_i = C / n_i^(1/4)

  static LdamConfig from_counts(double c, const Eigen::VectorXi& positive_counts,
                                bool* warned_zero = nullptr) {
    if (c < 0) throw ConfigError("LDAM constant must be non-negative");
    LdamConfig cfg;
    cfg.c = c;
    cfg.margins.resize(positive_counts.size());
    for (Eigen::Index i = 0; i < positive_counts.size(); ++i) {
      if (positive_counts(i) <= 0) {
        // Unlearnable label; margin zero rather than a division by zero.
        cfg.margins(i) = 0.0;
        if (warned_zero) *warned_zero = true;
      } else {
        cfg.margins(i) = c / std::pow(static_cast<double>(positive_counts(i)), 0.25);
      }
    }
    return cfg;
  }
};

// Training-time logits: positives lose their label margin, negatives pass
// through untouched (bit-exactly).
template <class S>
Vec<S> ldam_adjust(const Vec<S>& logits, const std::vector<std::uint8_t>& y,
                   const LdamConfig& ldam) {
  if (static_cast<Eigen::Index>(y.size()) != logits.size() ||
      ldam.margins.size() != logits.size()) {
    throw ShapeError("ldam_adjust: length mismatch");
  }
  Vec<S> out = logits;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    if (y[static_cast<std::size_t>(i)]) out(i) -= static_cast<S>(ldam.margins(i));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fused head forward/backward used by training
// ---------------------------------------------------------------------------

template <class S>
struct HeadCache {
  Mat<S> h_proj;  // t x (m+h), post-ReLU
  Mat<S> attn;    // n x t
  Mat<S> v;       // n x (m+h)
};

template <class S>
Vec<S> head_forward(const Mat<S>& u, const Mat<S>& h, const std::vector<std::uint8_t>& mask,
                    const HeadParams<S>& params, HeadCache<S>* cache) {
  HeadCache<S> local;
  HeadCache<S>& c = cache ? *cache : local;
  c.h_proj = project(h, params.w1);
  c.attn = label_attention(u, c.h_proj, mask);
  c.v = attend(c.attn, c.h_proj);
  return score(c.v, params.w_cls);
}

// Backward through score/attend/attention/projection. Accumulates parameter
// gradients and dU; returns dH for the encoder.
template <class S>
Mat<S> head_backward(const Vec<S>& d_logits, const Mat<S>& u, const Mat<S>& h,
                     const HeadParams<S>& params, const HeadCache<S>& cache,
                     Mat<S>& d_w1, Mat<S>& d_w_cls, Mat<S>& d_u) {
  if (cache.h_proj.size() == 0) throw StateError("head_backward: forward cache missing");

  Mat<S> dv = d_logits.asDiagonal() * params.w_cls;
  d_w_cls.noalias() += d_logits.asDiagonal() * cache.v;

  Mat<S> d_attn = dv * cache.h_proj.transpose();          // n x t
  Mat<S> d_h_proj = cache.attn.transpose() * dv;          // t x (m+h)

  // Softmax rows: ds = w .* (dw - rowsum(dw .* w)).
  Vec<S> row_dot = (d_attn.cwiseProduct(cache.attn)).rowwise().sum();
  Mat<S> d_scores = cache.attn.cwiseProduct(d_attn.colwise() - row_dot);

  d_u.noalias() += d_scores * cache.h_proj;
  d_h_proj.noalias() += d_scores.transpose() * u;

  Mat<S> gate = (cache.h_proj.array() > S(0)).template cast<S>();
  Mat<S> d_pre = d_h_proj.cwiseProduct(gate);
  d_w1.noalias() += h.transpose() * d_pre;
  return d_pre * params.w1.transpose();
}

// ---------------------------------------------------------------------------
// No-attention ablation: logits from the reserved summary token only.
// ---------------------------------------------------------------------------

template <class S>
Vec<S> cls_head_forward(const Mat<S>& h, const Mat<S>& w_cls0) {
  if (h.rows() < 1 || h.cols() != w_cls0.cols()) throw ShapeError("cls head: shape mismatch");
  return w_cls0 * h.row(0).transpose();
}

template <class S>
Mat<S> cls_head_backward(const Vec<S>& d_logits, const Mat<S>& h, const Mat<S>& w_cls0,
                         Mat<S>& d_w_cls0) {
  d_w_cls0.noalias() += d_logits * h.row(0);
  Mat<S> dh = Mat<S>::Zero(h.rows(), h.cols());
  dh.row(0) = (w_cls0.transpose() * d_logits).transpose();
  return dh;
}

}  // namespace graphcoder
