// Composition of encoder, label graph, and classification head into one
// trainable model, with named-tensor access for the optimizer and the
// checkpoint container.
#pragma once

#include <string>
#include <vector>

#include "graphcoder/checkpoint.hpp"
#include "graphcoder/common.hpp"
#include "graphcoder/corpus.hpp"
#include "graphcoder/embeddings.hpp"
#include "graphcoder/encoder.hpp"
#include "graphcoder/labelgraph.hpp"
#include "graphcoder/labelhead.hpp"

namespace graphcoder {

struct ModelConfig {
  EncoderConfig encoder;
  HeadMode head = HeadMode::Graph;
  XProvider x_provider = XProvider::Hash;
  int n_labels = 0;
  int x_dim = 0;  // m; the mean-token provider forces x_dim == hidden
  int vocab_size = 0;
  double npmi_threshold = 0.2;

  int feat() const { return x_dim + encoder.hidden; }

  void validate() const {
    encoder.validate();
    if (n_labels < 2) throw ConfigError("model needs at least 2 labels");
    if (vocab_size < 2) throw ConfigError("vocab too small");
    if (head != HeadMode::Cls) {
      if (x_dim < 1) throw ConfigError("x_dim must be positive");
      if (x_provider == XProvider::MeanToken && x_dim != encoder.hidden) {
        throw ConfigError("mean-token provider requires x_dim == hidden");
      }
    }
  }
};

template <class S>
struct ModelParams {
  EncoderParams<S> enc;
  Mat<S> w_gcn;          // (x_dim, hidden), graph head
  Mat<S> u_free;         // (n, m+h), linear head
  HeadParams<S> head;    // graph/linear heads
  Mat<S> w_cls0;         // (n, hidden), cls head
};

// Flat view over the trainable tensors, in a fixed order shared by the
// optimizer, the gradient checker, and the checkpoint writer.
template <class S>
struct TensorRef {
  std::string name;
  Mat<S>* mat = nullptr;
  Vec<S>* vec = nullptr;

  long size() const { return mat ? static_cast<long>(mat->size()) : static_cast<long>(vec->size()); }
  S* data() { return mat ? mat->data() : vec->data(); }
  const S* data() const { return mat ? mat->data() : vec->data(); }
};

template <class S>
std::vector<TensorRef<S>> named_tensors(ModelParams<S>& p, const ModelConfig& cfg) {
  std::vector<TensorRef<S>> out;
  auto add_mat = [&](const std::string& name, Mat<S>& m) { out.push_back({name, &m, nullptr}); };
  auto add_vec = [&](const std::string& name, Vec<S>& v) { out.push_back({name, nullptr, &v}); };

  add_mat("encoder.token_emb", p.enc.token_emb);
  add_mat("encoder.pos_emb", p.enc.pos_emb);
  for (int li = 0; li < cfg.encoder.layers; ++li) {
    auto& L = p.enc.layers[static_cast<std::size_t>(li)];
    const std::string pre = "encoder.layer" + std::to_string(li) + ".";
    add_mat(pre + "wq", L.wq);
    add_mat(pre + "wk", L.wk);
    add_mat(pre + "wv", L.wv);
    add_mat(pre + "wo", L.wo);
    add_mat(pre + "w_ff1", L.w_ff1);
    add_mat(pre + "w_ff2", L.w_ff2);
    add_vec(pre + "ln1_g", L.ln1_g);
    add_vec(pre + "ln1_b", L.ln1_b);
    add_vec(pre + "ln2_g", L.ln2_g);
    add_vec(pre + "ln2_b", L.ln2_b);
  }
  switch (cfg.head) {
    case HeadMode::Graph:
      add_mat("gcn.w", p.w_gcn);
      add_mat("head.w1", p.head.w1);
      add_mat("head.w_cls", p.head.w_cls);
      break;
    case HeadMode::Linear:
      add_mat("head.u_free", p.u_free);
      add_mat("head.w1", p.head.w1);
      add_mat("head.w_cls", p.head.w_cls);
      break;
    case HeadMode::Cls:
      add_mat("head.w_cls0", p.w_cls0);
      break;
  }
  return out;
}

// Allocates tensors for the configured mode; unused mode tensors stay empty.
template <class S>
ModelParams<S> allocate_params(const ModelConfig& cfg) {
  cfg.validate();
  const int h = cfg.encoder.hidden;
  ModelParams<S> p;
  p.enc.token_emb = Mat<S>::Zero(cfg.vocab_size, h);
  p.enc.pos_emb = Mat<S>::Zero(cfg.encoder.t_max, h);
  p.enc.layers.resize(static_cast<std::size_t>(cfg.encoder.layers));
  for (auto& L : p.enc.layers) {
    L.wq = Mat<S>::Zero(h, h);
    L.wk = Mat<S>::Zero(h, h);
    L.wv = Mat<S>::Zero(h, h);
    L.wo = Mat<S>::Zero(h, h);
    L.w_ff1 = Mat<S>::Zero(h, cfg.encoder.ffn_dim());
    L.w_ff2 = Mat<S>::Zero(cfg.encoder.ffn_dim(), h);
    L.ln1_g = Vec<S>::Zero(h);
    L.ln1_b = Vec<S>::Zero(h);
    L.ln2_g = Vec<S>::Zero(h);
    L.ln2_b = Vec<S>::Zero(h);
  }
  switch (cfg.head) {
    case HeadMode::Graph:
      p.w_gcn = Mat<S>::Zero(cfg.x_dim, h);
      p.head.w1 = Mat<S>::Zero(h, cfg.feat());
      p.head.w_cls = Mat<S>::Zero(cfg.n_labels, cfg.feat());
      break;
    case HeadMode::Linear:
      p.u_free = Mat<S>::Zero(cfg.n_labels, cfg.feat());
      p.head.w1 = Mat<S>::Zero(h, cfg.feat());
      p.head.w_cls = Mat<S>::Zero(cfg.n_labels, cfg.feat());
      break;
    case HeadMode::Cls:
      p.w_cls0 = Mat<S>::Zero(cfg.n_labels, h);
      break;
  }
  return p;
}

// Encoder weights are seeded Gaussian(0, 0.02) with unit layer-norm gains and
// zero biases; the graph convolution weight is uniform within its fan-in
// bound; head tensors use fan-in-scaled Gaussians so label attention has
// usable score contrast from the first epoch. Every tensor draws from its own
// derived stream.
template <class S>
ModelParams<S> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParams<S> p = allocate_params<S>(cfg);
  const double head_sd = 1.0 / std::sqrt(static_cast<double>(cfg.encoder.hidden));
  const double feat_sd = 1.0 / std::sqrt(static_cast<double>(std::max(1, cfg.feat())));
  for (auto& t : named_tensors(p, cfg)) {
    Rng rng(derive_seed(seed, "init." + t.name));
    S* data = t.data();
    const long n = t.size();
    double sd = 0.02;
    if (t.name == "head.w1" || t.name == "head.w_cls0") sd = head_sd;
    else if (t.name == "head.w_cls" || t.name == "head.u_free") sd = feat_sd;
    if (t.name.find("ln1_g") != std::string::npos || t.name.find("ln2_g") != std::string::npos) {
      for (long i = 0; i < n; ++i) data[i] = S(1);
    } else if (t.name.find("ln1_b") != std::string::npos || t.name.find("ln2_b") != std::string::npos) {
      for (long i = 0; i < n; ++i) data[i] = S(0);
    } else if (t.name == "gcn.w") {
      const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.x_dim));
      for (long i = 0; i < n; ++i) data[i] = static_cast<S>(bound * (2.0 * rng.uniform() - 1.0));
    } else {
      for (long i = 0; i < n; ++i) data[i] = static_cast<S>(sd * rng.gaussian());
    }
  }
  return p;
}

template <class S>
ModelParams<S> zero_grads(const ModelConfig& cfg) {
  return allocate_params<S>(cfg);
}

// ---------------------------------------------------------------------------
// Model bundle
// ---------------------------------------------------------------------------

template <class S>
struct Model {
  ModelConfig cfg;
  ModelParams<S> params;
  Mat<S> a_hat;                            // normalized adjacency (graph head)
  Mat<S> x_frozen;                         // X for hash/random/file providers
  std::vector<std::vector<int>> def_ids;   // definition tokens (mean-token)
  LabelGraph graph;                        // double-precision snapshot (graph head)
  LdamConfig ldam;                         // training margins
  int cls_id = -1;
};

// Label-side forward state, shared by every document in a batch.
template <class S>
struct LabelState {
  Mat<S> x;      // n x m
  Mat<S> u_hat;  // n x h
  Mat<S> u;      // n x (m+h)
};

template <class S>
LabelState<S> compute_label_state(const Model<S>& m) {
  LabelState<S> s;
  if (m.cfg.head == HeadMode::Cls) return s;
  if (m.cfg.head == HeadMode::Linear) {
    s.u = m.params.u_free;
    return s;
  }
  s.x = m.cfg.x_provider == XProvider::MeanToken
            ? mean_token_embeddings(m.params.enc.token_emb, m.def_ids)
            : m.x_frozen;
  s.u_hat = gcn_forward(m.a_hat, s.x, m.params.w_gcn);
  s.u = enrich(s.u_hat, s.x);
  return s;
}

// Gradient flow from dU back into the GCN weight, the definition embeddings,
// and (mean-token) the token embeddings. Call once per batch.
template <class S>
void label_state_backward(const Model<S>& m, const LabelState<S>& s, const Mat<S>& d_u,
                          ModelParams<S>& grads) {
  if (m.cfg.head == HeadMode::Cls) return;
  if (m.cfg.head == HeadMode::Linear) {
    grads.u_free += d_u;
    return;
  }
  const int h = m.cfg.encoder.hidden;
  Mat<S> d_x = d_u.rightCols(m.cfg.x_dim);  // direct concatenation branch
  gcn_backward(m.a_hat, s.x, m.params.w_gcn, s.u_hat, Mat<S>(d_u.leftCols(h)), d_x, grads.w_gcn);
  if (m.cfg.x_provider == XProvider::MeanToken) {
    mean_token_backward(d_x, m.def_ids, grads.enc.token_emb);
  }
}

// Token ids as the encoder sees them: the cls head prepends the reserved
// summary token; everything is clipped to the encoder capacity.
template <class S>
std::vector<int> assemble_ids(const Model<S>& m, const std::vector<int>& tokens) {
  std::vector<int> ids;
  if (m.cfg.head == HeadMode::Cls) {
    if (m.cls_id < 0) throw ConfigError("cls head requires a reserved summary token");
    ids.reserve(tokens.size() + 1);
    ids.push_back(m.cls_id);
    ids.insert(ids.end(), tokens.begin(), tokens.end());
  } else {
    ids = tokens;
  }
  if (static_cast<int>(ids.size()) > m.cfg.encoder.t_max) {
    ids.resize(static_cast<std::size_t>(m.cfg.encoder.t_max));
  }
  return ids;
}

template <class S>
struct DocCaches {
  EncoderCache<S> enc;
  HeadCache<S> head;
  Mat<S> h;  // encoder output rows fed to the head
  std::vector<std::uint8_t> mask;
};

template <class S>
Vec<S> doc_forward(const Model<S>& m, const LabelState<S>& ls, const std::vector<int>& tokens,
                   DocCaches<S>& c) {
  const std::vector<int> ids = assemble_ids(m, tokens);
  c.h = encode(ids, m.cfg.encoder, m.params.enc, c.mask, &c.enc);
  if (m.cfg.head == HeadMode::Cls) return cls_head_forward(c.h, m.params.w_cls0);
  return head_forward(ls.u, c.h, c.mask, m.params.head, &c.head);
}

// Accumulates every encoder/head gradient; dU flows into d_u_accum and is
// resolved once per batch by label_state_backward.
template <class S>
void doc_backward(const Model<S>& m, const LabelState<S>& ls, const Vec<S>& d_logits,
                  const DocCaches<S>& c, ModelParams<S>& grads, Mat<S>* d_u_accum) {
  Mat<S> d_h;
  if (m.cfg.head == HeadMode::Cls) {
    d_h = cls_head_backward(d_logits, c.h, m.params.w_cls0, grads.w_cls0);
  } else {
    if (!d_u_accum) throw StateError("doc_backward: missing dU accumulator");
    d_h = head_backward(d_logits, ls.u, c.h, m.params.head, c.head, grads.head.w1,
                        grads.head.w_cls, *d_u_accum);
  }
  encode_backward(d_h, m.cfg.encoder, m.params.enc, c.enc, grads.enc);
}

// ---------------------------------------------------------------------------
// Config serialization
// ---------------------------------------------------------------------------

inline nlohmann::json model_config_to_json(const ModelConfig& cfg) {
  return nlohmann::json{
      {"t_max", cfg.encoder.t_max},
      {"hidden", cfg.encoder.hidden},
      {"layers", cfg.encoder.layers},
      {"heads", cfg.encoder.heads},
      {"block_size", cfg.encoder.block_size},
      {"window_blocks", cfg.encoder.window_blocks},
      {"global_blocks", cfg.encoder.global_blocks},
      {"random_blocks", cfg.encoder.random_blocks},
      {"pattern_seed", cfg.encoder.pattern_seed},
      {"encoder_mode", to_string(cfg.encoder.mode)},
      {"head_mode", to_string(cfg.head)},
      {"x_provider", to_string(cfg.x_provider)},
      {"n_labels", cfg.n_labels},
      {"x_dim", cfg.x_dim},
      {"vocab_size", cfg.vocab_size},
      {"npmi_threshold", cfg.npmi_threshold},
  };
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.encoder.t_max = j.at("t_max").get<int>();
  cfg.encoder.hidden = j.at("hidden").get<int>();
  cfg.encoder.layers = j.at("layers").get<int>();
  cfg.encoder.heads = j.at("heads").get<int>();
  cfg.encoder.block_size = j.at("block_size").get<int>();
  cfg.encoder.window_blocks = j.at("window_blocks").get<int>();
  cfg.encoder.global_blocks = j.at("global_blocks").get<int>();
  cfg.encoder.random_blocks = j.at("random_blocks").get<int>();
  cfg.encoder.pattern_seed = j.at("pattern_seed").get<std::uint64_t>();
  cfg.encoder.mode = encoder_mode_from_string(j.at("encoder_mode").get<std::string>());
  cfg.head = head_mode_from_string(j.at("head_mode").get<std::string>());
  cfg.x_provider = x_provider_from_string(j.at("x_provider").get<std::string>());
  cfg.n_labels = j.at("n_labels").get<int>();
  cfg.x_dim = j.at("x_dim").get<int>();
  cfg.vocab_size = j.at("vocab_size").get<int>();
  cfg.npmi_threshold = j.at("npmi_threshold").get<double>();
  return cfg;
}

// ---------------------------------------------------------------------------
// Checkpoint conversion
// ---------------------------------------------------------------------------

template <class S>
Checkpoint to_checkpoint(const Model<S>& m, const Vocab& vocab, const LabelSpace& labels,
                         nlohmann::json config_snapshot) {
  Checkpoint ckpt;
  ModelParams<S>& params = const_cast<ModelParams<S>&>(m.params);
  for (auto& t : named_tensors(params, m.cfg)) {
    if (t.mat) ckpt.tensors.push_back(to_blob(t.name, *t.mat));
    else ckpt.tensors.push_back(to_blob(t.name, *t.vec));
  }
  if (m.cfg.head == HeadMode::Graph) {
    LabelState<S> ls = compute_label_state(m);
    ckpt.tensors.push_back(to_blob("embed.x", ls.x));
    ckpt.tensors.push_back(to_blob("graph.npmi", m.graph.npmi));
    ckpt.tensors.push_back(to_blob("graph.adjacency", m.graph.adjacency));
    ckpt.tensors.push_back(to_blob("graph.normalized", m.graph.normalized));
  }
  ckpt.meta["config"] = std::move(config_snapshot);
  ckpt.meta["vocab"] = vocab.tokens();
  ckpt.meta["vocab_cls_id"] = vocab.cls_id();
  nlohmann::json labels_json = nlohmann::json::array();
  for (const auto& e : labels.labels()) {
    labels_json.push_back({{"code", e.code}, {"definition", e.definition}});
  }
  ckpt.meta["labels"] = labels_json;
  ckpt.meta["labelgraph_source"] = "train";
  return ckpt;
}

// Restores tensors into a freshly allocated model, checking every shape
// against the stored configuration.
template <class S>
void params_from_checkpoint(const Checkpoint& ckpt, const ModelConfig& cfg, ModelParams<S>& out) {
  out = allocate_params<S>(cfg);
  for (auto& t : named_tensors(out, cfg)) {
    const TensorBlob& b = ckpt.require(t.name);
    if (t.mat) {
      if (b.shape.size() != 2 || b.shape[0] != t.mat->rows() || b.shape[1] != t.mat->cols()) {
        throw ShapeError("checkpoint tensor " + t.name + " has the wrong shape");
      }
      *t.mat = blob_to_mat<S>(b);
    } else {
      if (b.shape.size() != 1 || b.shape[0] != t.vec->size()) {
        throw ShapeError("checkpoint tensor " + t.name + " has the wrong shape");
      }
      *t.vec = blob_to_vec<S>(b);
    }
  }
}

template <class S>
struct LoadedModel {
  Model<S> model;
  Vocab vocab;
  LabelSpace labels;
  nlohmann::json config;  // full snapshot stored at save time
};

template <class S>
LoadedModel<S> model_from_checkpoint(const Checkpoint& ckpt) {
  if (!ckpt.meta.contains("config")) throw CheckpointError("checkpoint has no config snapshot");
  LoadedModel<S> out;
  out.config = ckpt.meta.at("config");
  out.model.cfg = model_config_from_json(out.config);

  if (!ckpt.meta.contains("vocab") || !ckpt.meta.contains("labels")) {
    throw CheckpointError("checkpoint is missing vocab or labels");
  }
  out.vocab = Vocab::from_tokens(ckpt.meta.at("vocab").get<std::vector<std::string>>(),
                                 ckpt.meta.value("vocab_cls_id", -1));
  std::vector<LabelSpace::Entry> entries;
  for (const auto& e : ckpt.meta.at("labels")) {
    entries.push_back({e.at("code").get<std::string>(), e.at("definition").get<std::string>()});
  }
  out.labels = LabelSpace(std::move(entries));
  if (out.vocab.size() != out.model.cfg.vocab_size) {
    throw CheckpointError("stored vocab size disagrees with the config snapshot");
  }
  if (out.labels.n() != out.model.cfg.n_labels) {
    throw CheckpointError("stored label count disagrees with the config snapshot");
  }

  params_from_checkpoint(ckpt, out.model.cfg, out.model.params);
  out.model.cls_id = out.vocab.cls_id();

  if (out.model.cfg.head == HeadMode::Graph) {
    if (ckpt.meta.value("labelgraph_source", "") != "train") {
      throw CheckpointError("label graph provenance is not the training split");
    }
    out.model.graph.npmi = blob_to_mat<double>(ckpt.require("graph.npmi"));
    out.model.graph.adjacency = blob_to_mat<double>(ckpt.require("graph.adjacency"));
    out.model.graph.normalized = blob_to_mat<double>(ckpt.require("graph.normalized"));
    out.model.graph.threshold = out.model.cfg.npmi_threshold;
    out.model.graph.degrees = out.model.graph.adjacency.rowwise().sum();
    out.model.a_hat = blob_to_mat<S>(ckpt.require("graph.normalized"));
    if (out.model.cfg.x_provider == XProvider::MeanToken) {
      out.model.def_ids = definition_token_ids(out.labels, out.vocab);
    } else {
      out.model.x_frozen = blob_to_mat<S>(ckpt.require("embed.x"));
    }
  }
  return out;
}

}  // namespace graphcoder
