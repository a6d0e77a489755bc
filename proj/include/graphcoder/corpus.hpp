// Corpus ingestion: preprocessing, vocabulary, splits, synthetic generation.
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "graphcoder/common.hpp"

namespace graphcoder {

// Ordered label set. Row/column order of every label-indexed structure in the
// pipeline follows this ordering and is fixed at construction.
class LabelSpace {
 public:
  struct Entry {
    std::string code;
    std::string definition;
  };

  LabelSpace() = default;
  explicit LabelSpace(std::vector<Entry> labels);

  static LabelSpace from_jsonl(const std::string& path);

  int n() const { return static_cast<int>(labels_.size()); }
  const Entry& label(int i) const { return labels_[static_cast<std::size_t>(i)]; }
  const std::vector<Entry>& labels() const { return labels_; }

  // Index of a code, or -1 when absent.
  int index_of(const std::string& code) const;

 private:
  std::vector<Entry> labels_;
  std::unordered_map<std::string, int> index_;
};

// Token vocabulary built from the training split only. Ids 0 and 1 are
// reserved for padding and out-of-vocabulary tokens. When requested, one
// extra id is reserved for a document-summary token used by the cls head;
// that id is never reachable through text lookup.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  Vocab();

  int size() const { return static_cast<int>(id_to_token_.size()); }
  int lookup(const std::string& token) const;  // kUnk when absent
  int add(const std::string& token);           // existing id if already present
  const std::string& token(int id) const { return id_to_token_[static_cast<std::size_t>(id)]; }
  const std::vector<std::string>& tokens() const { return id_to_token_; }

  bool has_cls() const { return cls_id_ >= 0; }
  int cls_id() const { return cls_id_; }
  void reserve_cls();

  // Rebuild from an id-ordered token list (checkpoint load).
  static Vocab from_tokens(const std::vector<std::string>& id_to_token, int cls_id);

 private:
  std::unordered_map<std::string, int> to_id_;
  std::vector<std::string> id_to_token_;
  int cls_id_ = -1;
};

// Document with tokens still as strings; the form produced by ingestion and
// consumed by vocabulary construction.
struct RawDocument {
  std::string id;
  std::vector<std::string> tokens;
  std::vector<int> codes;  // label indices, sorted, unique
};

// Document with vocabulary-mapped token ids.
struct Document {
  std::string id;
  std::vector<int> tokens;
  std::vector<int> codes;
};

struct RawSplits {
  std::vector<RawDocument> train, val, test;
};

struct CorpusSplits {
  std::vector<Document> train, val, test;
};

// Whitespace-split, lowercase, drop tokens without any ASCII letter, keep the
// first t_max tokens. Throws EmptyDocumentError when nothing survives.
std::vector<std::string> preprocess(const std::string& raw_text, std::size_t t_max);

// Reads a JSONL corpus ({"id","text","codes"} per line), preprocesses each
// document, and resolves codes against the label space. `require_codes`
// false permits lines without a "codes" field (prediction inputs).
std::vector<RawDocument> read_raw_corpus(const std::string& path,
                                         const LabelSpace& labels,
                                         std::size_t t_max,
                                         bool require_codes = true);

// Vocabulary over every distinct training token, first-occurrence order.
Vocab build_vocab(const std::vector<RawDocument>& train_docs, bool with_cls = false);

// String tokens -> ids. Unknown tokens map to kUnk.
std::vector<Document> map_documents(const std::vector<RawDocument>& docs, const Vocab& vocab);

// read_raw_corpus + map_documents; the inference-time ingestion path.
std::vector<Document> ingest_corpus(const std::string& path,
                                    const LabelSpace& labels,
                                    const Vocab& vocab,
                                    std::size_t t_max);

// Deterministic shuffle + contiguous partition with largest-remainder sizing.
RawSplits split_corpus(const std::vector<RawDocument>& docs,
                       const std::array<double, 3>& ratios,
                       std::uint64_t seed);

// Mirrors a published split given explicit id lists. Documents absent from
// all three lists are dropped; ids that match no document raise SplitError.
RawSplits split_corpus_by_ids(const std::vector<RawDocument>& docs,
                              const std::vector<std::string>& train_ids,
                              const std::vector<std::string>& val_ids,
                              const std::vector<std::string>& test_ids);

CorpusSplits map_splits(const RawSplits& raw, const Vocab& vocab);

// ---------------------------------------------------------------------------
// Synthetic corpus with planted, exactly recoverable label signals.
// ---------------------------------------------------------------------------

struct SynthConfig {
  int n_labels = 20;
  int n_docs = 500;
  int doc_len = 1024;
  double long_range_fraction = 0.0;   // labels whose signature sits past token 512
  double pair_correlation = 0.0;      // co-draw probability boost for designated pairs
  std::uint64_t seed = 1;
  int distractor_pool = 200;
  int signature_repeats = 3;          // occurrences planted per carried label
};

struct SynthCorpus {
  LabelSpace labels;
  std::vector<RawDocument> docs;
  std::vector<std::string> signatures;            // signature token per label
  std::vector<std::pair<int, int>> designated_pairs;
  std::vector<int> long_range_labels;
};

// Each label gets a unique signature token; a document carries a label iff
// its signature occurs in the document. Definitions contain the signature,
// so definition-derived embeddings can key on it.
SynthCorpus synth_corpus(const SynthConfig& cfg);

}  // namespace graphcoder
