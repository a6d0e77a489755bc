#include "graphcoder/objective.hpp"

#include <algorithm>
#include <numeric>

namespace graphcoder {

using nlohmann::json;

namespace {

void check_shapes(const std::vector<std::vector<std::uint8_t>>& gold, const MatD& probs) {
  if (static_cast<Eigen::Index>(gold.size()) != probs.rows()) {
    throw ShapeError("metrics: document counts disagree");
  }
  for (const auto& g : gold) {
    if (static_cast<Eigen::Index>(g.size()) != probs.cols()) {
      throw ShapeError("metrics: label counts disagree");
    }
  }
}

double f1_from_counts(long tp, long fp, long fn) {
  const long denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : (2.0 * static_cast<double>(tp)) / static_cast<double>(denom);
}

// AUC of one binary problem via midranks; -1 when only one class is present.
double auc_binary(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
  const std::size_t n = scores.size();
  long pos = 0;
  for (const auto l : labels) pos += l ? 1 : 0;
  const long neg = static_cast<long>(n) - pos;
  if (pos == 0 || neg == 0) return -1.0;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]]) pos_rank_sum += midrank;
    }
    i = j + 1;
  }
  const double p = static_cast<double>(pos);
  return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

}  // namespace

F1Result f1_scores(const std::vector<std::vector<std::uint8_t>>& gold, const MatD& probs,
                   const std::vector<std::string>& codes, double threshold) {
  check_shapes(gold, probs);
  const Eigen::Index n_labels = probs.cols();
  if (static_cast<Eigen::Index>(codes.size()) != n_labels) {
    throw ShapeError("f1_scores: code list length disagrees");
  }

  std::vector<long> tp(static_cast<std::size_t>(n_labels), 0);
  std::vector<long> fp(static_cast<std::size_t>(n_labels), 0);
  std::vector<long> fn(static_cast<std::size_t>(n_labels), 0);
  for (Eigen::Index d = 0; d < probs.rows(); ++d) {
    for (Eigen::Index l = 0; l < n_labels; ++l) {
      const bool pred = probs(d, l) >= threshold;
      const bool truth = gold[static_cast<std::size_t>(d)][static_cast<std::size_t>(l)] != 0;
      if (pred && truth) ++tp[static_cast<std::size_t>(l)];
      else if (pred) ++fp[static_cast<std::size_t>(l)];
      else if (truth) ++fn[static_cast<std::size_t>(l)];
    }
  }

  F1Result out;
  long tp_all = 0, fp_all = 0, fn_all = 0;
  double macro_sum = 0.0;
  for (Eigen::Index l = 0; l < n_labels; ++l) {
    const auto li = static_cast<std::size_t>(l);
    tp_all += tp[li];
    fp_all += fp[li];
    fn_all += fn[li];
    PerLabelStat s;
    s.code = codes[li];
    s.precision = (tp[li] + fp[li]) == 0 ? 0.0
                  : static_cast<double>(tp[li]) / static_cast<double>(tp[li] + fp[li]);
    s.recall = (tp[li] + fn[li]) == 0 ? 0.0
               : static_cast<double>(tp[li]) / static_cast<double>(tp[li] + fn[li]);
    s.f1 = f1_from_counts(tp[li], fp[li], fn[li]);
    macro_sum += s.f1;
    out.per_label.push_back(std::move(s));
  }
  out.micro = f1_from_counts(tp_all, fp_all, fn_all);
  out.macro = macro_sum / static_cast<double>(n_labels);
  return out;
}

double auc_roc(const std::vector<std::vector<std::uint8_t>>& gold, const MatD& probs,
               Averaging averaging) {
  check_shapes(gold, probs);
  const Eigen::Index n_labels = probs.cols();

  if (averaging == Averaging::Micro) {
    std::vector<double> scores;
    std::vector<std::uint8_t> labels;
    scores.reserve(static_cast<std::size_t>(probs.size()));
    labels.reserve(static_cast<std::size_t>(probs.size()));
    for (Eigen::Index d = 0; d < probs.rows(); ++d) {
      for (Eigen::Index l = 0; l < n_labels; ++l) {
        scores.push_back(probs(d, l));
        labels.push_back(gold[static_cast<std::size_t>(d)][static_cast<std::size_t>(l)]);
      }
    }
    const double auc = auc_binary(scores, labels);
    if (auc < 0.0) throw MetricUndefinedError("micro AUC needs both classes in the pool");
    return auc;
  }

  double total = 0.0;
  int qualified = 0;
  for (Eigen::Index l = 0; l < n_labels; ++l) {
    std::vector<double> scores(static_cast<std::size_t>(probs.rows()));
    std::vector<std::uint8_t> labels(static_cast<std::size_t>(probs.rows()));
    for (Eigen::Index d = 0; d < probs.rows(); ++d) {
      scores[static_cast<std::size_t>(d)] = probs(d, l);
      labels[static_cast<std::size_t>(d)] = gold[static_cast<std::size_t>(d)][static_cast<std::size_t>(l)];
    }
    const double auc = auc_binary(scores, labels);
    if (auc >= 0.0) {
      total += auc;
      ++qualified;
    }
  }
  if (qualified == 0) throw MetricUndefinedError("no label has both classes; macro AUC undefined");
  return total / static_cast<double>(qualified);
}

double precision_at_k(const std::vector<std::vector<std::uint8_t>>& gold, const MatD& probs,
                      int k) {
  check_shapes(gold, probs);
  if (k < 1) throw ConfigError("precision_at_k: k must be positive");
  if (probs.cols() < k) throw ConfigError("precision_at_k: fewer labels than k");

  double total = 0.0;
  std::vector<int> idx(static_cast<std::size_t>(probs.cols()));
  for (Eigen::Index d = 0; d < probs.rows(); ++d) {
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
      if (probs(d, a) != probs(d, b)) return probs(d, a) > probs(d, b);
      return a < b;
    });
    int hits = 0;
    for (int i = 0; i < k; ++i) {
      if (gold[static_cast<std::size_t>(d)][static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])]) ++hits;
    }
    total += static_cast<double>(hits) / static_cast<double>(k);
  }
  return total / static_cast<double>(probs.rows());
}

MetricsReport compute_metrics(const std::vector<std::vector<std::uint8_t>>& gold,
                              const MatD& probs, const std::vector<std::string>& codes,
                              double loss, double threshold, int k) {
  MetricsReport r;
  F1Result f1 = f1_scores(gold, probs, codes, threshold);
  r.micro_f1 = f1.micro;
  r.macro_f1 = f1.macro;
  r.per_label = std::move(f1.per_label);
  r.micro_auc = auc_roc(gold, probs, Averaging::Micro);
  r.macro_auc = auc_roc(gold, probs, Averaging::Macro);
  r.p_at_5 = precision_at_k(gold, probs, k);
  r.loss = loss;
  return r;
}

json MetricsReport::to_json() const {
  json per = json::array();
  for (const auto& s : per_label) {
    per.push_back({{"code", s.code}, {"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}});
  }
  return json{{"micro_f1", micro_f1}, {"macro_f1", macro_f1}, {"micro_auc", micro_auc},
              {"macro_auc", macro_auc}, {"p_at_5", p_at_5}, {"loss", loss}, {"per_label", per}};
}

}  // namespace graphcoder
