// Multi-label losses and the evaluation metric suite.
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "graphcoder/common.hpp"
#include "graphcoder/labelhead.hpp"

namespace graphcoder {

// Multi-label binary cross entropy from logits, summed over labels, in the
// saturation-safe form max(z,0) - z*y + log(1+exp(-|z|)).
template <class S>
S bce_loss(const std::vector<std::uint8_t>& y, const Vec<S>& logits) {
  if (static_cast<Eigen::Index>(y.size()) != logits.size()) {
    throw ShapeError("bce_loss: length mismatch");
  }
  S total = S(0);
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const S z = logits(i);
    const S yt = y[static_cast<std::size_t>(i)] ? S(1) : S(0);
    total += std::max(z, S(0)) - z * yt + std::log1p(std::exp(-std::abs(z)));
  }
  return total;
}

// d bce / d logits = sigmoid(z) - y.
template <class S>
Vec<S> bce_grad(const std::vector<std::uint8_t>& y, const Vec<S>& logits) {
  Vec<S> g(logits.size());
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const S z = logits(i);
    const S sig = S(1) / (S(1) + std::exp(-z));
    g(i) = sig - (y[static_cast<std::size_t>(i)] ? S(1) : S(0));
  }
  return g;
}

// BCE over margin-adjusted logits.
template <class S>
S ldam_loss(const std::vector<std::uint8_t>& y, const Vec<S>& logits, const LdamConfig& ldam) {
  return bce_loss(y, ldam_adjust(logits, y, ldam));
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct PerLabelStat {
  std::string code;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct MetricsReport {
  double micro_f1 = 0.0;
  double macro_f1 = 0.0;
  double micro_auc = 0.0;
  double macro_auc = 0.0;
  double p_at_5 = 0.0;
  double loss = 0.0;
  std::vector<PerLabelStat> per_label;

  nlohmann::json to_json() const;
};

struct F1Result {
  double micro = 0.0;
  double macro = 0.0;
  std::vector<PerLabelStat> per_label;
};

// Threshold at `threshold` (inclusive); per-label F1 with an empty
// denominator is 0; macro is the unweighted mean over all labels.
F1Result f1_scores(const std::vector<std::vector<std::uint8_t>>& gold, const MatD& probs,
                   const std::vector<std::string>& codes, double threshold = 0.5);

enum class Averaging { Micro, Macro };

// Rank-statistic AUC with midrank tie handling. Micro pools every
// (document,label) cell; macro averages per-label AUCs over labels that have
// both a positive and a negative, and raises MetricUndefinedError when no
// label qualifies.
double auc_roc(const std::vector<std::vector<std::uint8_t>>& gold, const MatD& probs,
               Averaging averaging);

// Fraction of the k top-scored labels that are correct, averaged over
// documents; ties broken toward the lower label index.
double precision_at_k(const std::vector<std::vector<std::uint8_t>>& gold, const MatD& probs,
                      int k = 5);

// Full report; `loss` is supplied by the caller (mean plain BCE per document).
MetricsReport compute_metrics(const std::vector<std::vector<std::uint8_t>>& gold,
                              const MatD& probs, const std::vector<std::string>& codes,
                              double loss, double threshold = 0.5, int k = 5);

}  // namespace graphcoder
