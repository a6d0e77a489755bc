// Training loop, evaluation, model construction from corpus splits, and the
// finite-difference gradient checker.
#pragma once

#include <algorithm>
#include <iostream>
#include <string>
#include <vector>

#include "graphcoder/adamw.hpp"
#include "graphcoder/model.hpp"
#include "graphcoder/objective.hpp"

namespace graphcoder {

struct TrainConfig {
  int batch_size = 32;
  double learning_rate = 3e-3;  // desk-scale default; large pretrained stacks want ~2e-5
  int epochs = 30;
  double ldam_c = 2.0;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 1.0;
  bool clip_enabled = true;
  std::uint64_t seed = 1;
  double f1_threshold = 0.5;
  int top_k = 5;
  double stop_at_val_f1 = -1.0;  // end the budget early once validation clears this; <0 disables
  bool verbose = false;

  void validate() const {
    if (batch_size < 1 || epochs < 1) throw ConfigError("batch size and epochs must be positive");
    if (learning_rate < 0 || weight_decay < 0 || ldam_c < 0) {
      throw ConfigError("rates and margins must be non-negative");
    }
  }
};

inline std::vector<std::uint8_t> label_vector(const Document& doc, int n_labels) {
  std::vector<std::uint8_t> y(static_cast<std::size_t>(n_labels), 0);
  for (const int c : doc.codes) y[static_cast<std::size_t>(c)] = 1;
  return y;
}

inline Eigen::VectorXi positive_counts(const std::vector<Document>& docs, int n_labels) {
  Eigen::VectorXi counts = Eigen::VectorXi::Zero(n_labels);
  for (const auto& d : docs) {
    for (const int c : d.codes) counts(c) += 1;
  }
  return counts;
}

// ---------------------------------------------------------------------------
// Model assembly
// ---------------------------------------------------------------------------

// Builds the label graph (train split only), resolves the X provider, derives
// LDAM margins, and initializes parameters.
template <class S>
Model<S> build_model(const ModelConfig& cfg, const TrainConfig& tc,
                     const std::vector<Document>& train_docs, const LabelSpace& labels,
                     const Vocab& vocab, const MatD* x_file = nullptr) {
  cfg.validate();
  Model<S> m;
  m.cfg = cfg;
  m.cls_id = vocab.cls_id();
  if (cfg.head == HeadMode::Graph) {
    const CooccurrenceCounts counts = count_cooccurrence(train_docs, cfg.n_labels);
    m.graph = build_adjacency(counts, cfg.npmi_threshold);
    m.a_hat = m.graph.normalized.template cast<S>();
    switch (cfg.x_provider) {
      case XProvider::MeanToken:
        m.def_ids = definition_token_ids(labels, vocab);
        break;
      case XProvider::Hash:
        m.x_frozen = hash_embeddings(labels, cfg.x_dim, tc.seed).template cast<S>();
        break;
      case XProvider::Random:
        m.x_frozen = random_embeddings(labels, cfg.x_dim, tc.seed).template cast<S>();
        break;
      case XProvider::File:
        if (!x_file) throw ConfigError("file provider needs a preloaded embedding matrix");
        if (x_file->rows() != cfg.n_labels || x_file->cols() != cfg.x_dim) {
          throw ShapeError("embedding file shape disagrees with (n_labels, x_dim)");
        }
        m.x_frozen = x_file->template cast<S>();
        break;
    }
  }
  bool warned = false;
  m.ldam = LdamConfig::from_counts(tc.ldam_c, positive_counts(train_docs, cfg.n_labels), &warned);
  if (warned) {
    std::cerr << "warning: some labels have no training positives; their margins are 0\n";
  }
  m.params = init_params<S>(cfg, tc.seed);
  return m;
}

// ---------------------------------------------------------------------------
// Loss over a batch (forward only / forward+backward)
// ---------------------------------------------------------------------------

template <class S>
S batch_loss(const Model<S>& m, const std::vector<const Document*>& batch) {
  const LabelState<S> ls = compute_label_state(m);
  DocCaches<S> caches;
  S total = S(0);
  for (const Document* doc : batch) {
    const auto y = label_vector(*doc, m.cfg.n_labels);
    const Vec<S> logits = doc_forward(m, ls, doc->tokens, caches);
    total += ldam_loss(y, logits, m.ldam);
  }
  return total / static_cast<S>(batch.size());
}

// Mean LDAM loss over the batch with gradients accumulated into `grads`.
template <class S>
S batch_forward_backward(const Model<S>& m, const std::vector<const Document*>& batch,
                         ModelParams<S>& grads) {
  const LabelState<S> ls = compute_label_state(m);
  const S inv_b = S(1) / static_cast<S>(batch.size());
  Mat<S> d_u;
  if (m.cfg.head != HeadMode::Cls) d_u = Mat<S>::Zero(m.cfg.n_labels, m.cfg.feat());

  DocCaches<S> caches;
  S total = S(0);
  for (const Document* doc : batch) {
    const auto y = label_vector(*doc, m.cfg.n_labels);
    const Vec<S> logits = doc_forward(m, ls, doc->tokens, caches);
    const Vec<S> train_logits = ldam_adjust(logits, y, m.ldam);
    total += bce_loss(y, train_logits);
    const Vec<S> d_logits = bce_grad(y, train_logits) * inv_b;
    doc_backward(m, ls, d_logits, caches, grads, m.cfg.head != HeadMode::Cls ? &d_u : nullptr);
  }
  if (m.cfg.head != HeadMode::Cls) label_state_backward(m, ls, d_u, grads);
  return total * inv_b;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

template <class S>
MatD predict_probs(const Model<S>& m, const std::vector<Document>& docs) {
  const LabelState<S> ls = compute_label_state(m);
  MatD probs(static_cast<Eigen::Index>(docs.size()), m.cfg.n_labels);
  DocCaches<S> caches;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    const Vec<S> logits = doc_forward(m, ls, docs[d].tokens, caches);
    for (int l = 0; l < m.cfg.n_labels; ++l) {
      probs(static_cast<Eigen::Index>(d), l) = 1.0 / (1.0 + std::exp(-static_cast<double>(logits(l))));
    }
  }
  return probs;
}

// Metrics on raw (margin-free) logits; loss is the mean plain BCE.
template <class S>
MetricsReport evaluate_model(const Model<S>& m, const std::vector<Document>& docs,
                             const LabelSpace& labels, double threshold = 0.5, int k = 5) {
  if (docs.empty()) throw ConfigError("evaluate: empty document set");
  const LabelState<S> ls = compute_label_state(m);
  MatD probs(static_cast<Eigen::Index>(docs.size()), m.cfg.n_labels);
  std::vector<std::vector<std::uint8_t>> gold;
  gold.reserve(docs.size());
  double loss = 0.0;
  DocCaches<S> caches;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    const auto y = label_vector(docs[d], m.cfg.n_labels);
    const Vec<S> logits = doc_forward(m, ls, docs[d].tokens, caches);
    VecD logits_d = logits.template cast<double>();
    loss += bce_loss(y, logits_d);
    for (int l = 0; l < m.cfg.n_labels; ++l) {
      probs(static_cast<Eigen::Index>(d), l) = 1.0 / (1.0 + std::exp(-logits_d(l)));
    }
    gold.push_back(y);
  }
  loss /= static_cast<double>(docs.size());
  std::vector<std::string> codes;
  for (const auto& e : labels.labels()) codes.push_back(e.code);
  return compute_metrics(gold, probs, codes, loss, threshold, k);
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct EpochLogEntry {
  int epoch = 0;
  double train_loss = 0.0;
  MetricsReport val;
};

template <class S>
struct TrainOutcome {
  Model<S> model;  // best-validation parameters
  std::vector<EpochLogEntry> log;
  int best_epoch = -1;
  double best_val_micro_f1 = -1.0;
};

template <class S>
TrainOutcome<S> train_model(const ModelConfig& cfg, const TrainConfig& tc,
                            const CorpusSplits& splits, const LabelSpace& labels,
                            const Vocab& vocab, const MatD* x_file = nullptr) {
  tc.validate();
  if (splits.train.empty() || splits.val.empty()) {
    throw SplitError("training needs non-empty train and validation splits");
  }

  TrainOutcome<S> out;
  out.model = build_model<S>(cfg, tc, splits.train, labels, vocab, x_file);
  Model<S>& m = out.model;

  AdamWConfig opt{tc.learning_rate, tc.beta1, tc.beta2, tc.adam_eps, tc.weight_decay};
  AdamWState<S> opt_state;
  auto param_refs = named_tensors(m.params, m.cfg);
  opt_state.init(param_refs);

  ModelParams<S> grads = zero_grads<S>(m.cfg);
  auto grad_refs = named_tensors(grads, m.cfg);

  ModelParams<S> best_params = m.params;

  std::vector<std::size_t> order(splits.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(tc.seed, "epoch-shuffle-" + std::to_string(epoch)));
    shuffle_rng.shuffle(order);

    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(tc.batch_size)) {
      std::vector<const Document*> batch;
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(tc.batch_size));
      for (std::size_t i = start; i < end; ++i) batch.push_back(&splits.train[order[i]]);

      for (auto& g : grad_refs) std::fill(g.data(), g.data() + g.size(), S(0));
      const S loss = batch_forward_backward(m, batch, grads);
      if (!std::isfinite(static_cast<double>(loss))) {
        throw TrainingDivergedError("loss diverged at epoch " + std::to_string(epoch) +
                                    ", batch " + std::to_string(batches));
      }
      epoch_loss += static_cast<double>(loss);
      ++batches;

      if (tc.clip_enabled) {
        const double norm = grad_global_norm(grad_refs);
        if (norm > tc.grad_clip && norm > 0.0) {
          scale_grads(grad_refs, static_cast<S>(tc.grad_clip / norm));
        }
      }
      adamw_step(param_refs, grad_refs, opt_state, opt);
    }
    epoch_loss /= static_cast<double>(std::max(1, batches));

    EpochLogEntry entry;
    entry.epoch = epoch;
    entry.train_loss = epoch_loss;
    entry.val = evaluate_model(m, splits.val, labels, tc.f1_threshold, tc.top_k);
    if (tc.verbose) {
      std::cerr << "epoch " << epoch << " train_loss " << epoch_loss << " val_micro_f1 "
                << entry.val.micro_f1 << "\n";
    }
    if (entry.val.micro_f1 > out.best_val_micro_f1) {
      out.best_val_micro_f1 = entry.val.micro_f1;
      out.best_epoch = epoch;
      best_params = m.params;
    }
    out.log.push_back(std::move(entry));
    if (tc.stop_at_val_f1 >= 0.0 && out.best_val_micro_f1 >= tc.stop_at_val_f1) break;
  }

  m.params = std::move(best_params);
  return out;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checking
// ---------------------------------------------------------------------------

struct GradCheckBlock {
  std::string name;
  double max_rel_err = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckBlock> blocks;
  double max_rel_err = 0.0;
};

// Desk-scale fixture: a handful of short documents over a 5-label space whose
// definitions share tokens with the documents, so every gradient path
// (including the definition-embedding route into the token table) is live.
struct GradCheckFixture {
  LabelSpace labels;
  Vocab vocab;
  std::vector<Document> docs;     // probe batch
  std::vector<Document> train;    // co-occurrence + margin source
};

inline GradCheckFixture make_gradcheck_fixture() {
  GradCheckFixture f;
  std::vector<LabelSpace::Entry> entries;
  for (int l = 0; l < 5; ++l) {
    const std::string sig = "sig" + std::to_string(l);
    entries.push_back({"G" + std::to_string(l), "condition " + sig + " marker"});
  }
  f.labels = LabelSpace(std::move(entries));

  auto mkraw = [](const std::string& id, const std::string& text, std::vector<int> codes) {
    RawDocument d;
    d.id = id;
    d.tokens = preprocess(text, 16);
    d.codes = std::move(codes);
    return d;
  };
  std::vector<RawDocument> raw = {
      mkraw("t0", "sig0 alpha beta sig1 gamma delta word more", {0, 1}),
      mkraw("t1", "sig2 beta epsilon sig3 zeta alpha filler body", {2, 3}),
      mkraw("t2", "sig4 gamma sig0 theta iota other text here", {0, 4}),
      mkraw("t3", "sig1 sig2 kappa alpha beta gamma delta extra", {1, 2}),
      mkraw("t4", "sig3 sig4 lambda mu epsilon zeta theta end", {3, 4}),
  };
  f.vocab = build_vocab(raw, /*with_cls=*/true);
  f.train = map_documents(raw, f.vocab);
  f.docs = {f.train[0], f.train[2]};
  return f;
}

inline ModelConfig gradcheck_model_config(HeadMode head, XProvider provider, int vocab_size) {
  ModelConfig cfg;
  cfg.encoder.t_max = 16;
  cfg.encoder.hidden = 8;
  cfg.encoder.layers = 1;
  cfg.encoder.heads = 2;
  cfg.encoder.block_size = 4;
  cfg.encoder.window_blocks = 3;
  cfg.encoder.global_blocks = 1;
  cfg.encoder.random_blocks = 0;  // 4 blocks leave no pool to sample from
  cfg.encoder.mode = EncoderMode::Sparse;
  cfg.head = head;
  cfg.x_provider = provider;
  cfg.n_labels = 5;
  cfg.x_dim = provider == XProvider::MeanToken ? 8 : 6;
  cfg.vocab_size = vocab_size;
  cfg.npmi_threshold = 0.05;
  return cfg;
}

// Central differences against the analytic batch gradient, per tensor.
// rel_err = |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
inline GradCheckReport grad_check(HeadMode head, XProvider provider, std::uint64_t seed,
                                  double eps = 1e-5) {
  GradCheckFixture fix = make_gradcheck_fixture();
  const ModelConfig cfg = gradcheck_model_config(head, provider, fix.vocab.size());
  TrainConfig tc;
  tc.seed = seed;
  Model<double> model = build_model<double>(cfg, tc, fix.train, fix.labels, fix.vocab);

  // Training-scale initialization leaves some gradients near the rounding
  // floor of the difference quotient; draw parameters at a scale where every
  // block carries measurable signal instead.
  for (auto& t : named_tensors(model.params, cfg)) {
    Rng rng(derive_seed(seed, "gradcheck." + t.name));
    double* data = t.data();
    const bool gain = t.name.find("ln1_g") != std::string::npos ||
                      t.name.find("ln2_g") != std::string::npos;
    const bool bias = t.name.find("ln1_b") != std::string::npos ||
                      t.name.find("ln2_b") != std::string::npos;
    for (long i = 0; i < t.size(); ++i) {
      if (gain) data[i] = 1.0 + 0.2 * rng.gaussian();
      else if (bias) data[i] = 0.2 * rng.gaussian();
      else data[i] = 0.35 * rng.gaussian();
    }
  }

  std::vector<const Document*> batch;
  for (const auto& d : fix.docs) batch.push_back(&d);

  ModelParams<double> grads = zero_grads<double>(cfg);
  batch_forward_backward(model, batch, grads);

  auto param_refs = named_tensors(model.params, cfg);
  auto grad_refs = named_tensors(grads, cfg);

  GradCheckReport report;
  for (std::size_t t = 0; t < param_refs.size(); ++t) {
    GradCheckBlock block;
    block.name = param_refs[t].name;
    double* data = param_refs[t].data();
    const double* analytic = grad_refs[t].data();
    for (long i = 0; i < param_refs[t].size(); ++i) {
      const double saved = data[i];
      data[i] = saved + eps;
      const double up = batch_loss(model, batch);
      data[i] = saved - eps;
      const double down = batch_loss(model, batch);
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double rel = std::abs(analytic[i] - numeric) /
                         std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
      block.max_rel_err = std::max(block.max_rel_err, rel);
    }
    report.max_rel_err = std::max(report.max_rel_err, block.max_rel_err);
    report.blocks.push_back(std::move(block));
  }
  return report;
}

}  // namespace graphcoder
