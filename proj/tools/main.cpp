// Command-line surface: synth, build-graph, train, evaluate, predict,
// gradcheck. Exit codes: 0 success, 1 runtime failure, 2 config error.
#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

#include "graphcoder/checkpoint.hpp"
#include "graphcoder/corpus.hpp"
#include "graphcoder/embeddings.hpp"
#include "graphcoder/labelgraph.hpp"
#include "graphcoder/model.hpp"
#include "graphcoder/objective.hpp"
#include "graphcoder/runconfig.hpp"
#include "graphcoder/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace graphcoder;

namespace {

// Config file pre-scan so file values land before flag parsing; flags parsed
// afterwards override them.
RunConfig base_config(int argc, char** argv) {
  RunConfig rc;
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--config") {
      rc = RunConfig::from_file(argv[i + 1], rc);
      break;
    }
  }
  return rc;
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
}

std::vector<std::string> read_id_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw SplitError("cannot open split file: " + path.string());
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) ids.push_back(line);
  }
  return ids;
}

RawSplits make_splits(const RunConfig& rc, const std::vector<RawDocument>& raw) {
  if (!rc.split_dir.empty()) {
    const fs::path dir(rc.split_dir);
    return split_corpus_by_ids(raw, read_id_file(dir / "train.ids"), read_id_file(dir / "val.ids"),
                               read_id_file(dir / "test.ids"));
  }
  return split_corpus(raw, {rc.train_ratio, rc.val_ratio, rc.test_ratio}, rc.seed);
}

std::string corpus_jsonl(const std::vector<RawDocument>& docs, const LabelSpace& labels) {
  std::string out;
  for (const auto& d : docs) {
    std::string text;
    for (std::size_t i = 0; i < d.tokens.size(); ++i) {
      if (i) text += ' ';
      text += d.tokens[i];
    }
    json codes = json::array();
    for (const int c : d.codes) codes.push_back(labels.label(c).code);
    out += json{{"id", d.id}, {"text", text}, {"codes", codes}}.dump();
    out += '\n';
  }
  return out;
}

json train_snapshot(const RunConfig& rc, const ModelConfig& mc) {
  json snap = model_config_to_json(mc);
  snap.update(json{{"batch_size", rc.batch_size},
                   {"learning_rate", rc.learning_rate},
                   {"epochs", rc.epochs},
                   {"ldam_c", rc.ldam_c},
                   {"weight_decay", rc.weight_decay},
                   {"beta1", rc.beta1},
                   {"beta2", rc.beta2},
                   {"adam_eps", rc.adam_eps},
                   {"grad_clip", rc.grad_clip},
                   {"clip_enabled", rc.clip_enabled},
                   {"seed", rc.seed},
                   {"corpus", rc.corpus},
                   {"definitions", rc.definitions},
                   {"split_dir", rc.split_dir},
                   {"train_ratio", rc.train_ratio},
                   {"val_ratio", rc.val_ratio},
                   {"test_ratio", rc.test_ratio}});
  return snap;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int cmd_synth(const RunConfig& rc, const std::string& out_dir) {
  const SynthCorpus synth = synth_corpus(rc.synth_config());
  const RawSplits splits =
      split_corpus(synth.docs, {rc.train_ratio, rc.val_ratio, rc.test_ratio}, rc.seed);

  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  write_text(dir / "corpus.jsonl", corpus_jsonl(synth.docs, synth.labels));

  std::string defs;
  for (const auto& e : synth.labels.labels()) {
    defs += json{{"code", e.code}, {"definition", e.definition}}.dump();
    defs += '\n';
  }
  write_text(dir / "definitions.jsonl", defs);

  auto id_lines = [](const std::vector<RawDocument>& docs) {
    std::string s;
    for (const auto& d : docs) {
      s += d.id;
      s += '\n';
    }
    return s;
  };
  write_text(dir / "train.ids", id_lines(splits.train));
  write_text(dir / "val.ids", id_lines(splits.val));
  write_text(dir / "test.ids", id_lines(splits.test));

  std::cout << "wrote " << synth.docs.size() << " documents over " << synth.labels.n()
            << " labels to " << out_dir << "\n";
  return 0;
}

int cmd_build_graph(const RunConfig& rc, const std::string& out_dir) {
  const LabelSpace labels = LabelSpace::from_jsonl(rc.definitions);
  const auto raw = read_raw_corpus(rc.corpus, labels, static_cast<std::size_t>(rc.t_max));
  const RawSplits splits = make_splits(rc, raw);
  const CooccurrenceCounts counts = count_cooccurrence(splits.train, labels.n());
  const LabelGraph graph = build_adjacency(counts, rc.npmi_threshold);

  json npmi_rows = json::array();
  json adj_rows = json::array();
  for (int i = 0; i < labels.n(); ++i) {
    json nr = json::array();
    json ar = json::array();
    for (int j = 0; j < labels.n(); ++j) {
      nr.push_back(graph.npmi(i, j));
      ar.push_back(static_cast<int>(graph.adjacency(i, j)));
    }
    npmi_rows.push_back(nr);
    adj_rows.push_back(ar);
  }
  const json graph_json = {
      {"threshold", graph.threshold}, {"npmi", npmi_rows}, {"adjacency", adj_rows}};

  struct Edge {
    int i, j;
    double npmi;
  };
  std::vector<Edge> edges;
  for (int i = 0; i < labels.n(); ++i) {
    for (int j = i + 1; j < labels.n(); ++j) {
      if (graph.adjacency(i, j) > 0) edges.push_back({i, j, graph.npmi(i, j)});
    }
  }
  std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
    if (a.npmi != b.npmi) return a.npmi > b.npmi;
    return a.i != b.i ? a.i < b.i : a.j < b.j;
  });
  std::string edge_list;
  for (const auto& e : edges) {
    edge_list += labels.label(e.i).code + "\t" + labels.label(e.j).code + "\t" +
                 std::to_string(e.npmi) + "\n";
  }

  fs::create_directories(out_dir);
  write_text(fs::path(out_dir) / "graph.json", graph_json.dump() + "\n");
  write_text(fs::path(out_dir) / "edges.txt", edge_list);
  std::cout << "graph over " << labels.n() << " labels: " << edges.size()
            << " off-diagonal edges at threshold " << rc.npmi_threshold << "\n";
  return 0;
}

int cmd_train(const RunConfig& rc, const std::string& out_dir, bool verbose) {
  const LabelSpace labels = LabelSpace::from_jsonl(rc.definitions);
  const auto raw = read_raw_corpus(rc.corpus, labels, static_cast<std::size_t>(rc.t_max));
  const RawSplits raw_splits = make_splits(rc, raw);
  const bool cls = head_mode_from_string(rc.head_mode) == HeadMode::Cls;
  const Vocab vocab = build_vocab(raw_splits.train, cls);
  const CorpusSplits splits = map_splits(raw_splits, vocab);

  const ModelConfig mc = rc.model_config(labels.n(), vocab.size());
  TrainConfig tc = rc.train_config();
  tc.verbose = verbose;

  MatD x_file;
  const MatD* x_file_ptr = nullptr;
  if (mc.x_provider == XProvider::File && mc.head == HeadMode::Graph) {
    x_file = file_embeddings(rc.x_file, labels.n(), rc.x_dim);
    x_file_ptr = &x_file;
  }

  const TrainOutcome<float> outcome = train_model<float>(mc, tc, splits, labels, vocab, x_file_ptr);

  fs::create_directories(out_dir);
  json snap = train_snapshot(rc, mc);
  Checkpoint ckpt = to_checkpoint(outcome.model, vocab, labels, snap);
  ckpt.meta["best_epoch"] = outcome.best_epoch;
  ckpt.meta["best_val_micro_f1"] = outcome.best_val_micro_f1;
  save_checkpoint(ckpt, (fs::path(out_dir) / "model.ckpt").string());

  std::string log;
  for (const auto& e : outcome.log) {
    json row = e.val.to_json();
    row["epoch"] = e.epoch;
    row["split"] = "val";
    log += row.dump();
    log += '\n';
  }
  write_text(fs::path(out_dir) / "train_log.jsonl", log);

  std::cout << "best epoch " << outcome.best_epoch << " val micro_f1 "
            << outcome.best_val_micro_f1 << "; checkpoint written to " << out_dir << "\n";
  return 0;
}

struct EvalData {
  LoadedModel<float> loaded;
  CorpusSplits splits;
};

EvalData load_for_eval(const RunConfig& rc, const std::string& ckpt_path) {
  EvalData ed{model_from_checkpoint<float>(load_checkpoint(ckpt_path)), {}};
  // Data location and split recipe default to the training snapshot.
  RunConfig data_rc = rc;
  const json& snap = ed.loaded.config;
  if (data_rc.corpus.empty()) data_rc.corpus = snap.value("corpus", "");
  if (data_rc.definitions.empty()) data_rc.definitions = snap.value("definitions", "");
  if (data_rc.split_dir.empty()) data_rc.split_dir = snap.value("split_dir", "");
  data_rc.train_ratio = snap.value("train_ratio", data_rc.train_ratio);
  data_rc.val_ratio = snap.value("val_ratio", data_rc.val_ratio);
  data_rc.test_ratio = snap.value("test_ratio", data_rc.test_ratio);
  data_rc.seed = snap.value("seed", data_rc.seed);
  if (data_rc.corpus.empty()) throw ConfigError("no corpus path given and none stored in checkpoint");

  const auto raw = read_raw_corpus(data_rc.corpus, ed.loaded.labels,
                                   static_cast<std::size_t>(ed.loaded.model.cfg.encoder.t_max));
  ed.splits = map_splits(make_splits(data_rc, raw), ed.loaded.vocab);
  return ed;
}

int cmd_evaluate(const RunConfig& rc, const std::string& ckpt_path, const std::string& out_dir) {
  EvalData ed = load_for_eval(rc, ckpt_path);
  const std::vector<Document>* docs = nullptr;
  if (rc.split == "train") docs = &ed.splits.train;
  else if (rc.split == "val") docs = &ed.splits.val;
  else if (rc.split == "test") docs = &ed.splits.test;
  else throw ConfigError("split must be train, val, or test");

  const MetricsReport report =
      evaluate_model(ed.loaded.model, *docs, ed.loaded.labels, rc.f1_threshold, rc.top_k);
  const std::string text = report.to_json().dump() + "\n";
  std::cout << text;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_text(fs::path(out_dir) / "metrics.json", text);
  }
  return 0;
}

int cmd_predict(const RunConfig& rc, const std::string& ckpt_path, const std::string& input,
                const std::string& out_dir) {
  LoadedModel<float> loaded = model_from_checkpoint<float>(load_checkpoint(ckpt_path));
  const auto raw = read_raw_corpus(input, loaded.labels,
                                   static_cast<std::size_t>(loaded.model.cfg.encoder.t_max),
                                   /*require_codes=*/false);
  const auto docs = map_documents(raw, loaded.vocab);
  if (rc.top_k > loaded.labels.n()) throw ConfigError("top_k exceeds the number of labels");

  const MatD probs = predict_probs(loaded.model, docs);
  std::string out;
  std::vector<int> idx(static_cast<std::size_t>(loaded.labels.n()));
  for (std::size_t d = 0; d < docs.size(); ++d) {
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
      const double pa = probs(static_cast<Eigen::Index>(d), a);
      const double pb = probs(static_cast<Eigen::Index>(d), b);
      if (pa != pb) return pa > pb;
      return a < b;
    });
    json codes = json::array();
    for (int i = 0; i < rc.top_k; ++i) {
      const int l = idx[static_cast<std::size_t>(i)];
      codes.push_back({{"code", loaded.labels.label(l).code},
                       {"prob", probs(static_cast<Eigen::Index>(d), l)}});
    }
    out += json{{"id", docs[d].id}, {"codes", codes}}.dump();
    out += '\n';
  }
  if (out_dir.empty()) {
    std::cout << out;
  } else {
    fs::create_directories(out_dir);
    write_text(fs::path(out_dir) / "predictions.jsonl", out);
    std::cout << "wrote predictions for " << docs.size() << " documents\n";
  }
  return 0;
}

int cmd_gradcheck(const RunConfig& rc, int n_seeds, double eps, double bound) {
  const HeadMode head = head_mode_from_string(rc.head_mode);
  const XProvider provider = x_provider_from_string(rc.x_provider);
  double worst = 0.0;
  for (int s = 0; s < n_seeds; ++s) {
    const std::uint64_t seed = rc.seed + static_cast<std::uint64_t>(s);
    const GradCheckReport report = grad_check(head, provider, seed, eps);
    std::cout << "seed " << seed << "\n";
    for (const auto& b : report.blocks) {
      std::cout << "  " << b.name << "  max_rel_err " << b.max_rel_err << "\n";
    }
    worst = std::max(worst, report.max_rel_err);
  }
  std::cout << "overall max_rel_err " << worst << " (bound " << bound << ")\n";
  return worst <= bound ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Long-document multi-label coder with a label co-occurrence graph"};
  app.require_subcommand(1);

  RunConfig rc;
  try {
    rc = base_config(argc, argv);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  std::string out_dir, ckpt_path, input_path, config_path;
  std::string gc_provider = "mean-token";
  bool verbose = false;
  int n_seeds = 1;
  double eps = 1e-5, bound = 1e-4;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file (flags override it)");
    cmd->add_option("--seed", rc.seed, "master random seed")->capture_default_str();
  };

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic labeled corpus");
  add_common(synth);
  synth->add_option("--labels", rc.labels, "number of labels")->capture_default_str();
  synth->add_option("--docs", rc.docs, "number of documents")->capture_default_str();
  synth->add_option("--doc-len", rc.doc_len, "tokens per document")->capture_default_str();
  synth->add_option("--long-range-fraction", rc.long_range_fraction,
                    "fraction of labels whose signal sits past token 512")->capture_default_str();
  synth->add_option("--pair-correlation", rc.pair_correlation,
                    "co-draw probability for designated label pairs")->capture_default_str();
  synth->add_option("--signature-repeats", rc.signature_repeats,
                    "signature occurrences planted per carried label")->capture_default_str();
  synth->add_option("--train-ratio", rc.train_ratio, "train fraction")->capture_default_str();
  synth->add_option("--val-ratio", rc.val_ratio, "validation fraction")->capture_default_str();
  synth->add_option("--test-ratio", rc.test_ratio, "test fraction")->capture_default_str();
  synth->add_option("--out", out_dir, "output directory")->required();

  CLI::App* graph = app.add_subcommand("build-graph", "build the NPMI label graph");
  add_common(graph);
  graph->add_option("--corpus", rc.corpus, "corpus JSONL")->required();
  graph->add_option("--definitions", rc.definitions, "label definitions JSONL")->required();
  graph->add_option("--split-dir", rc.split_dir, "directory with train/val/test id files");
  graph->add_option("--train-ratio", rc.train_ratio, "train fraction")->capture_default_str();
  graph->add_option("--val-ratio", rc.val_ratio, "validation fraction")->capture_default_str();
  graph->add_option("--test-ratio", rc.test_ratio, "test fraction")->capture_default_str();
  graph->add_option("--t-max", rc.t_max, "token limit per document")->capture_default_str();
  graph->add_option("--npmi-threshold", rc.npmi_threshold, "edge threshold")->capture_default_str();
  graph->add_option("--out", out_dir, "output directory")->required();

  CLI::App* train = app.add_subcommand("train", "train a model");
  add_common(train);
  train->add_option("--corpus", rc.corpus, "corpus JSONL")->required();
  train->add_option("--definitions", rc.definitions, "label definitions JSONL")->required();
  train->add_option("--split-dir", rc.split_dir, "directory with train/val/test id files");
  train->add_option("--train-ratio", rc.train_ratio, "train fraction")->capture_default_str();
  train->add_option("--val-ratio", rc.val_ratio, "validation fraction")->capture_default_str();
  train->add_option("--test-ratio", rc.test_ratio, "test fraction")->capture_default_str();
  train->add_option("--t-max", rc.t_max, "token limit per document")->capture_default_str();
  train->add_option("--npmi-threshold", rc.npmi_threshold, "edge threshold")->capture_default_str();
  train->add_option("--x-provider", rc.x_provider, "mean-token|hash|random|file")->capture_default_str();
  train->add_option("--x-dim", rc.x_dim, "definition embedding width")->capture_default_str();
  train->add_option("--x-file", rc.x_file, "embedding container for --x-provider file");
  train->add_option("--hidden", rc.hidden, "encoder width")->capture_default_str();
  train->add_option("--layers", rc.layers, "encoder layers")->capture_default_str();
  train->add_option("--heads", rc.heads, "attention heads")->capture_default_str();
  train->add_option("--block-size", rc.block_size, "attention block size")->capture_default_str();
  train->add_option("--window-blocks", rc.window_blocks, "window width in blocks (odd)")->capture_default_str();
  train->add_option("--global-blocks", rc.global_blocks, "leading global blocks")->capture_default_str();
  train->add_option("--random-blocks", rc.random_blocks, "random blocks per query")->capture_default_str();
  train->add_option("--pattern-seed", rc.pattern_seed, "sparsity pattern seed")->capture_default_str();
  train->add_option("--encoder-mode", rc.encoder_mode, "sparse|dense|truncate512")->capture_default_str();
  train->add_option("--head", rc.head_mode, "graph|linear|cls")->capture_default_str();
  train->add_option("--batch-size", rc.batch_size, "batch size")->capture_default_str();
  train->add_option("--learning-rate", rc.learning_rate, "AdamW learning rate")->capture_default_str();
  train->add_option("--epochs", rc.epochs, "training epochs")->capture_default_str();
  train->add_option("--ldam-c", rc.ldam_c, "margin constant C")->capture_default_str();
  train->add_option("--weight-decay", rc.weight_decay, "decoupled weight decay")->capture_default_str();
  train->add_option("--grad-clip", rc.grad_clip, "global-norm clip")->capture_default_str();
  train->add_flag("--no-clip", "disable gradient clipping");
  train->add_flag("--verbose", verbose, "per-epoch progress on stderr");
  train->add_option("--out", out_dir, "output directory")->required();

  CLI::App* eval = app.add_subcommand("evaluate", "evaluate a checkpoint");
  add_common(eval);
  eval->add_option("--ckpt", ckpt_path, "checkpoint path")->required();
  eval->add_option("--corpus", rc.corpus, "corpus JSONL (default: stored in checkpoint)");
  eval->add_option("--split-dir", rc.split_dir, "split id directory (default: stored)");
  eval->add_option("--split", rc.split, "train|val|test")->capture_default_str();
  eval->add_option("--f1-threshold", rc.f1_threshold, "decision threshold")->capture_default_str();
  eval->add_option("--top-k", rc.top_k, "k for precision@k")->capture_default_str();
  eval->add_option("--out", out_dir, "optional output directory for metrics.json");

  CLI::App* predict = app.add_subcommand("predict", "rank labels for new documents");
  add_common(predict);
  predict->add_option("--ckpt", ckpt_path, "checkpoint path")->required();
  predict->add_option("--input", input_path, "JSONL documents (codes optional)")->required();
  predict->add_option("--top-k", rc.top_k, "codes per document")->capture_default_str();
  predict->add_option("--out", out_dir, "optional output directory for predictions.jsonl");

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
  add_common(gradcheck);
  gradcheck->add_option("--head", rc.head_mode, "graph|linear|cls")->capture_default_str();
  gradcheck->add_option("--x-provider", gc_provider, "embedding provider")->capture_default_str();
  gradcheck->add_option("--seeds", n_seeds, "number of consecutive seeds")->capture_default_str();
  gradcheck->add_option("--eps", eps, "central difference step")->capture_default_str();
  gradcheck->add_option("--bound", bound, "maximum relative error")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (synth->parsed()) return cmd_synth(rc, out_dir);
    if (graph->parsed()) return cmd_build_graph(rc, out_dir);
    if (train->parsed()) {
      if (train->count("--no-clip")) rc.clip_enabled = false;
      return cmd_train(rc, out_dir, verbose);
    }
    if (eval->parsed()) return cmd_evaluate(rc, ckpt_path, out_dir);
    if (predict->parsed()) return cmd_predict(rc, ckpt_path, input_path, out_dir);
    if (gradcheck->parsed()) {
      rc.x_provider = gc_provider;
      return cmd_gradcheck(rc, n_seeds, eps, bound);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
