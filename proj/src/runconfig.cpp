#include "graphcoder/runconfig.hpp"

#include <fstream>

namespace graphcoder {

using nlohmann::json;

namespace {

enum class Kind { Str, Int, Real, Bool, Seed };

struct KeySpec {
  const char* key;
  Kind kind;
};

// The published schema: every accepted config key with its type.
constexpr KeySpec kSchema[] = {
    {"corpus", Kind::Str},        {"definitions", Kind::Str},
    {"split_dir", Kind::Str},     {"train_ratio", Kind::Real},
    {"val_ratio", Kind::Real},    {"test_ratio", Kind::Real},
    {"t_max", Kind::Int},         {"labels", Kind::Int},
    {"docs", Kind::Int},          {"doc_len", Kind::Int},
    {"long_range_fraction", Kind::Real},
    {"pair_correlation", Kind::Real},
    {"signature_repeats", Kind::Int},
    {"npmi_threshold", Kind::Real},
    {"x_provider", Kind::Str},    {"x_dim", Kind::Int},
    {"x_file", Kind::Str},        {"hidden", Kind::Int},
    {"layers", Kind::Int},        {"heads", Kind::Int},
    {"block_size", Kind::Int},    {"window_blocks", Kind::Int},
    {"global_blocks", Kind::Int}, {"random_blocks", Kind::Int},
    {"pattern_seed", Kind::Seed}, {"encoder_mode", Kind::Str},
    {"head_mode", Kind::Str},     {"batch_size", Kind::Int},
    {"learning_rate", Kind::Real},
    {"epochs", Kind::Int},        {"ldam_c", Kind::Real},
    {"weight_decay", Kind::Real}, {"beta1", Kind::Real},
    {"beta2", Kind::Real},        {"adam_eps", Kind::Real},
    {"grad_clip", Kind::Real},    {"clip_enabled", Kind::Bool},
    {"seed", Kind::Seed},         {"split", Kind::Str},
    {"top_k", Kind::Int},         {"f1_threshold", Kind::Real},
};

const KeySpec* find_spec(const std::string& key) {
  for (const auto& s : kSchema) {
    if (key == s.key) return &s;
  }
  return nullptr;
}

}  // namespace

void RunConfig::apply_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a flat JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const KeySpec* spec = find_spec(it.key());
    if (!spec) throw ConfigError("unknown config key: " + it.key());
    const json& v = it.value();
    switch (spec->kind) {
      case Kind::Str:
        if (!v.is_string()) throw ConfigError("config key " + it.key() + " must be a string");
        break;
      case Kind::Int:
        if (!v.is_number_integer()) throw ConfigError("config key " + it.key() + " must be an integer");
        break;
      case Kind::Seed:
        if (!v.is_number_unsigned() && !v.is_number_integer()) {
          throw ConfigError("config key " + it.key() + " must be an integer");
        }
        break;
      case Kind::Real:
        if (!v.is_number()) throw ConfigError("config key " + it.key() + " must be a number");
        break;
      case Kind::Bool:
        if (!v.is_boolean()) throw ConfigError("config key " + it.key() + " must be a boolean");
        break;
    }
    const std::string k = it.key();
    if (k == "corpus") corpus = v.get<std::string>();
    else if (k == "definitions") definitions = v.get<std::string>();
    else if (k == "split_dir") split_dir = v.get<std::string>();
    else if (k == "train_ratio") train_ratio = v.get<double>();
    else if (k == "val_ratio") val_ratio = v.get<double>();
    else if (k == "test_ratio") test_ratio = v.get<double>();
    else if (k == "t_max") t_max = v.get<int>();
    else if (k == "labels") labels = v.get<int>();
    else if (k == "docs") docs = v.get<int>();
    else if (k == "doc_len") doc_len = v.get<int>();
    else if (k == "long_range_fraction") long_range_fraction = v.get<double>();
    else if (k == "pair_correlation") pair_correlation = v.get<double>();
    else if (k == "signature_repeats") signature_repeats = v.get<int>();
    else if (k == "npmi_threshold") npmi_threshold = v.get<double>();
    else if (k == "x_provider") x_provider = v.get<std::string>();
    else if (k == "x_dim") x_dim = v.get<int>();
    else if (k == "x_file") x_file = v.get<std::string>();
    else if (k == "hidden") hidden = v.get<int>();
    else if (k == "layers") layers = v.get<int>();
    else if (k == "heads") heads = v.get<int>();
    else if (k == "block_size") block_size = v.get<int>();
    else if (k == "window_blocks") window_blocks = v.get<int>();
    else if (k == "global_blocks") global_blocks = v.get<int>();
    else if (k == "random_blocks") random_blocks = v.get<int>();
    else if (k == "pattern_seed") pattern_seed = v.get<std::uint64_t>();
    else if (k == "encoder_mode") encoder_mode = v.get<std::string>();
    else if (k == "head_mode") head_mode = v.get<std::string>();
    else if (k == "batch_size") batch_size = v.get<int>();
    else if (k == "learning_rate") learning_rate = v.get<double>();
    else if (k == "epochs") epochs = v.get<int>();
    else if (k == "ldam_c") ldam_c = v.get<double>();
    else if (k == "weight_decay") weight_decay = v.get<double>();
    else if (k == "beta1") beta1 = v.get<double>();
    else if (k == "beta2") beta2 = v.get<double>();
    else if (k == "adam_eps") adam_eps = v.get<double>();
    else if (k == "grad_clip") grad_clip = v.get<double>();
    else if (k == "clip_enabled") clip_enabled = v.get<bool>();
    else if (k == "seed") seed = v.get<std::uint64_t>();
    else if (k == "split") split = v.get<std::string>();
    else if (k == "top_k") top_k = v.get<int>();
    else if (k == "f1_threshold") f1_threshold = v.get<double>();
  }
}

RunConfig RunConfig::from_file(const std::string& path) { return from_file(path, RunConfig()); }

RunConfig RunConfig::from_file(const std::string& path, const RunConfig& base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config file is not valid JSON: " + path);
  RunConfig rc = base;
  rc.apply_json(j);
  return rc;
}

json RunConfig::to_json() const {
  return json{
      {"corpus", corpus},
      {"definitions", definitions},
      {"split_dir", split_dir},
      {"train_ratio", train_ratio},
      {"val_ratio", val_ratio},
      {"test_ratio", test_ratio},
      {"t_max", t_max},
      {"labels", labels},
      {"docs", docs},
      {"doc_len", doc_len},
      {"long_range_fraction", long_range_fraction},
      {"pair_correlation", pair_correlation},
      {"signature_repeats", signature_repeats},
      {"npmi_threshold", npmi_threshold},
      {"x_provider", x_provider},
      {"x_dim", x_dim},
      {"x_file", x_file},
      {"hidden", hidden},
      {"layers", layers},
      {"heads", heads},
      {"block_size", block_size},
      {"window_blocks", window_blocks},
      {"global_blocks", global_blocks},
      {"random_blocks", random_blocks},
      {"pattern_seed", pattern_seed},
      {"encoder_mode", encoder_mode},
      {"head_mode", head_mode},
      {"batch_size", batch_size},
      {"learning_rate", learning_rate},
      {"epochs", epochs},
      {"ldam_c", ldam_c},
      {"weight_decay", weight_decay},
      {"beta1", beta1},
      {"beta2", beta2},
      {"adam_eps", adam_eps},
      {"grad_clip", grad_clip},
      {"clip_enabled", clip_enabled},
      {"seed", seed},
      {"split", split},
      {"top_k", top_k},
      {"f1_threshold", f1_threshold},
  };
}

ModelConfig RunConfig::model_config(int n_labels, int vocab_size) const {
  ModelConfig cfg;
  cfg.encoder.t_max = t_max;
  cfg.encoder.hidden = hidden;
  cfg.encoder.layers = layers;
  cfg.encoder.heads = heads;
  cfg.encoder.block_size = block_size;
  cfg.encoder.window_blocks = window_blocks;
  cfg.encoder.global_blocks = global_blocks;
  cfg.encoder.random_blocks = random_blocks;
  cfg.encoder.pattern_seed = pattern_seed;
  cfg.encoder.mode = encoder_mode_from_string(encoder_mode);
  cfg.head = head_mode_from_string(head_mode);
  cfg.x_provider = x_provider_from_string(x_provider);
  cfg.n_labels = n_labels;
  cfg.x_dim = cfg.x_provider == XProvider::MeanToken ? hidden : x_dim;
  cfg.vocab_size = vocab_size;
  cfg.npmi_threshold = npmi_threshold;
  return cfg;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig tc;
  tc.batch_size = batch_size;
  tc.learning_rate = learning_rate;
  tc.epochs = epochs;
  tc.ldam_c = ldam_c;
  tc.weight_decay = weight_decay;
  tc.beta1 = beta1;
  tc.beta2 = beta2;
  tc.adam_eps = adam_eps;
  tc.grad_clip = grad_clip;
  tc.clip_enabled = clip_enabled;
  tc.seed = seed;
  tc.f1_threshold = f1_threshold;
  tc.top_k = top_k;
  return tc;
}

SynthConfig RunConfig::synth_config() const {
  SynthConfig sc;
  sc.n_labels = labels;
  sc.n_docs = docs;
  sc.doc_len = doc_len;
  sc.long_range_fraction = long_range_fraction;
  sc.pair_correlation = pair_correlation;
  sc.signature_repeats = signature_repeats;
  sc.seed = seed;
  return sc;
}

}  // namespace graphcoder
