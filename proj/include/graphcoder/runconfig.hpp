// Flat run configuration shared by every CLI subcommand.
// Precedence: command-line flag > config file > built-in default.
#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "graphcoder/corpus.hpp"
#include "graphcoder/model.hpp"
#include "graphcoder/trainer.hpp"

namespace graphcoder {

struct RunConfig {
  // data
  std::string corpus;
  std::string definitions;
  std::string split_dir;  // holds train.ids/val.ids/test.ids; empty -> ratio split
  double train_ratio = 0.8;
  double val_ratio = 0.1;
  double test_ratio = 0.1;
  int t_max = 4096;

  // synthetic corpus
  int labels = 20;
  int docs = 500;
  int doc_len = 1024;
  double long_range_fraction = 0.0;
  double pair_correlation = 0.0;
  int signature_repeats = 3;

  // label graph
  double npmi_threshold = 0.2;

  // definition embeddings
  std::string x_provider = "hash";
  int x_dim = 64;
  std::string x_file;

  // encoder
  int hidden = 64;
  int layers = 2;
  int heads = 4;
  int block_size = 8;
  int window_blocks = 3;
  int global_blocks = 1;
  int random_blocks = 2;
  std::uint64_t pattern_seed = 1234;
  std::string encoder_mode = "sparse";

  // head
  std::string head_mode = "graph";

  // training
  int batch_size = 32;
  double learning_rate = 3e-3;
  int epochs = 30;
  double ldam_c = 2.0;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 1.0;
  bool clip_enabled = true;
  std::uint64_t seed = 1;

  // evaluation / prediction
  std::string split = "test";
  int top_k = 5;
  double f1_threshold = 0.5;

  // Applies a flat JSON object; unknown keys and type mismatches raise
  // ConfigError.
  void apply_json(const nlohmann::json& j);
  static RunConfig from_file(const std::string& path);
  static RunConfig from_file(const std::string& path, const RunConfig& base);

  nlohmann::json to_json() const;

  // Converters into module-level configs. The model converter needs the
  // corpus-derived sizes.
  ModelConfig model_config(int n_labels, int vocab_size) const;
  TrainConfig train_config() const;
  SynthConfig synth_config() const;
};

}  // namespace graphcoder
