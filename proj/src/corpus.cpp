#include "graphcoder/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace graphcoder {

using nlohmann::json;

// ---------------------------------------------------------------------------
// LabelSpace
// ---------------------------------------------------------------------------

LabelSpace::LabelSpace(std::vector<Entry> labels) : labels_(std::move(labels)) {
  if (labels_.size() < 2) throw ConfigError("label space needs at least 2 labels");
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (!index_.emplace(labels_[i].code, static_cast<int>(i)).second) {
      throw ConfigError("duplicate label code: " + labels_[i].code);
    }
  }
}

LabelSpace LabelSpace::from_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open label definitions file: " + path);
  std::vector<Entry> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("code") || !j.contains("definition") ||
        !j["code"].is_string() || !j["definition"].is_string()) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected {\"code\",\"definition\"}");
    }
    entries.push_back({j["code"].get<std::string>(), j["definition"].get<std::string>()});
  }
  return LabelSpace(std::move(entries));
}

int LabelSpace::index_of(const std::string& code) const {
  auto it = index_.find(code);
  return it == index_.end() ? -1 : it->second;
}

// ---------------------------------------------------------------------------
// Vocab
// ---------------------------------------------------------------------------

Vocab::Vocab() {
  id_to_token_ = {"<pad>", "<unk>"};
  to_id_ = {{"<pad>", kPad}, {"<unk>", kUnk}};
}

int Vocab::lookup(const std::string& token) const {
  auto it = to_id_.find(token);
  return it == to_id_.end() ? kUnk : it->second;
}

int Vocab::add(const std::string& token) {
  auto it = to_id_.find(token);
  if (it != to_id_.end()) return it->second;
  const int id = size();
  to_id_.emplace(token, id);
  id_to_token_.push_back(token);
  return id;
}

void Vocab::reserve_cls() {
  if (cls_id_ >= 0) return;
  cls_id_ = size();
  id_to_token_.push_back("<doc>");  // display only; not in the lookup map
}

Vocab Vocab::from_tokens(const std::vector<std::string>& id_to_token, int cls_id) {
  Vocab v;
  if (id_to_token.size() < 2) throw CheckpointError("vocab list too short");
  v.id_to_token_ = id_to_token;
  v.to_id_.clear();
  for (int i = 0; i < static_cast<int>(id_to_token.size()); ++i) {
    if (i == kPad || i == kUnk || i == cls_id) continue;
    v.to_id_.emplace(id_to_token[static_cast<std::size_t>(i)], i);
  }
  v.to_id_.emplace(id_to_token[0], kPad);
  v.to_id_.emplace(id_to_token[1], kUnk);
  v.cls_id_ = cls_id;
  return v;
}

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

std::vector<std::string> preprocess(const std::string& raw_text, std::size_t t_max) {
  if (t_max == 0) throw ConfigError("t_max must be at least 1");
  std::vector<std::string> out;
  std::string tok;
  auto flush = [&] {
    if (tok.empty()) return;
    bool has_alpha = false;
    for (char& c : tok) {
      if (std::isupper(static_cast<unsigned char>(c))) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      if (std::isalpha(static_cast<unsigned char>(c))) has_alpha = true;
    }
    if (has_alpha && out.size() < t_max) out.push_back(tok);
    tok.clear();
  };
  for (const char c : raw_text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
      if (out.size() == t_max) break;
    } else {
      tok.push_back(c);
    }
  }
  flush();
  if (out.empty()) throw EmptyDocumentError("no tokens survive preprocessing");
  return out;
}

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

std::vector<RawDocument> read_raw_corpus(const std::string& path,
                                         const LabelSpace& labels,
                                         std::size_t t_max,
                                         bool require_codes) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open corpus file: " + path);
  std::vector<RawDocument> docs;
  std::set<std::string> seen_ids;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw ParseError(where + ": malformed JSON");
    if (!j.contains("id") || !j["id"].is_string()) throw ParseError(where + ": missing \"id\"");
    if (!j.contains("text") || !j["text"].is_string()) throw ParseError(where + ": missing \"text\"");
    if (require_codes && (!j.contains("codes") || !j["codes"].is_array())) {
      throw ParseError(where + ": missing \"codes\"");
    }
    RawDocument d;
    d.id = j["id"].get<std::string>();
    if (!seen_ids.insert(d.id).second) throw ParseError(where + ": duplicate document id " + d.id);
    try {
      d.tokens = preprocess(j["text"].get<std::string>(), t_max);
    } catch (const EmptyDocumentError&) {
      throw EmptyDocumentError(where + ": document " + d.id + " is empty after preprocessing");
    }
    if (j.contains("codes")) {
      if (!j["codes"].is_array()) throw ParseError(where + ": \"codes\" must be an array");
      std::set<int> idx;
      for (const auto& c : j["codes"]) {
        if (!c.is_string()) throw ParseError(where + ": codes must be strings");
        const int k = labels.index_of(c.get<std::string>());
        if (k < 0) throw UnknownLabelError(where + ": unknown code " + c.get<std::string>());
        idx.insert(k);
      }
      d.codes.assign(idx.begin(), idx.end());
    }
    docs.push_back(std::move(d));
  }
  return docs;
}

Vocab build_vocab(const std::vector<RawDocument>& train_docs, bool with_cls) {
  if (train_docs.empty()) throw ConfigError("cannot build a vocabulary from an empty training set");
  Vocab v;
  for (const auto& d : train_docs) {
    for (const auto& t : d.tokens) v.add(t);
  }
  if (with_cls) v.reserve_cls();
  return v;
}

std::vector<Document> map_documents(const std::vector<RawDocument>& docs, const Vocab& vocab) {
  std::vector<Document> out;
  out.reserve(docs.size());
  for (const auto& d : docs) {
    Document m;
    m.id = d.id;
    m.codes = d.codes;
    m.tokens.reserve(d.tokens.size());
    for (const auto& t : d.tokens) m.tokens.push_back(vocab.lookup(t));
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<Document> ingest_corpus(const std::string& path,
                                    const LabelSpace& labels,
                                    const Vocab& vocab,
                                    std::size_t t_max) {
  return map_documents(read_raw_corpus(path, labels, t_max), vocab);
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

RawSplits split_corpus(const std::vector<RawDocument>& docs,
                       const std::array<double, 3>& ratios,
                       std::uint64_t seed) {
  const double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(sum - 1.0) > 1e-9) throw SplitError("split ratios must sum to 1");
  const std::size_t n = docs.size();

  // Largest-remainder apportionment; ties go to the lower index.
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> rem{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double exact = ratios[static_cast<std::size_t>(i)] * static_cast<double>(n);
    sizes[static_cast<std::size_t>(i)] = static_cast<std::size_t>(std::floor(exact));
    rem[static_cast<std::size_t>(i)] = exact - std::floor(exact);
    assigned += sizes[static_cast<std::size_t>(i)];
  }
  while (assigned < n) {
    int best = 0;
    for (int i = 1; i < 3; ++i) {
      if (rem[static_cast<std::size_t>(i)] > rem[static_cast<std::size_t>(best)]) best = i;
    }
    sizes[static_cast<std::size_t>(best)] += 1;
    rem[static_cast<std::size_t>(best)] = -1.0;
    ++assigned;
  }
  if (sizes[0] == 0 || sizes[1] == 0 || sizes[2] == 0) {
    throw SplitError("every split must be non-empty");
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(seed, "split-shuffle"));
  rng.shuffle(order);

  RawSplits out;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < sizes[0]; ++i) out.train.push_back(docs[order[pos++]]);
  for (std::size_t i = 0; i < sizes[1]; ++i) out.val.push_back(docs[order[pos++]]);
  for (std::size_t i = 0; i < sizes[2]; ++i) out.test.push_back(docs[order[pos++]]);
  return out;
}

RawSplits split_corpus_by_ids(const std::vector<RawDocument>& docs,
                              const std::vector<std::string>& train_ids,
                              const std::vector<std::string>& val_ids,
                              const std::vector<std::string>& test_ids) {
  std::unordered_map<std::string, const RawDocument*> by_id;
  for (const auto& d : docs) by_id.emplace(d.id, &d);

  std::set<std::string> used;
  auto take = [&](const std::vector<std::string>& ids, const char* split) {
    std::vector<RawDocument> out;
    for (const auto& id : ids) {
      auto it = by_id.find(id);
      if (it == by_id.end()) throw SplitError(std::string(split) + " split references unknown id " + id);
      if (!used.insert(id).second) throw SplitError("document id assigned to two splits: " + id);
      out.push_back(*it->second);
    }
    if (out.empty()) throw SplitError(std::string(split) + " split is empty");
    return out;
  };

  RawSplits out;
  out.train = take(train_ids, "train");
  out.val = take(val_ids, "val");
  out.test = take(test_ids, "test");
  return out;
}

CorpusSplits map_splits(const RawSplits& raw, const Vocab& vocab) {
  return {map_documents(raw.train, vocab), map_documents(raw.val, vocab),
          map_documents(raw.test, vocab)};
}

// ---------------------------------------------------------------------------
// Synthetic corpus
// ---------------------------------------------------------------------------

namespace {

std::string zero_padded(int v, int width) {
  std::ostringstream os;
  os << v;
  std::string s = os.str();
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

}  // namespace

SynthCorpus synth_corpus(const SynthConfig& cfg) {
  if (cfg.n_labels < 2) throw ConfigError("synth: need at least 2 labels");
  if (cfg.doc_len < 16) throw ConfigError("synth: doc_len must be at least 16");
  if (cfg.n_docs < 1) throw ConfigError("synth: need at least 1 document");
  if (cfg.long_range_fraction < 0.0 || cfg.long_range_fraction > 1.0 ||
      cfg.pair_correlation < 0.0 || cfg.pair_correlation > 1.0) {
    throw ConfigError("synth: fractions must lie in [0,1]");
  }
  if (cfg.signature_repeats < 1) throw ConfigError("synth: signature_repeats must be positive");
  const int n_long = static_cast<int>(std::llround(cfg.long_range_fraction * cfg.n_labels));
  // Long-range signatures live strictly past token 512; leave head-room so a
  // document carrying several such labels can still place all occurrences.
  if (n_long > 0 && cfg.doc_len < 544 + 16 * cfg.signature_repeats) {
    throw ConfigError("synth: doc_len too small for long-range signature planting");
  }

  SynthCorpus out;
  std::vector<LabelSpace::Entry> entries;
  const char* kThemes[] = {"renal", "cardiac", "hepatic", "vascular", "septic",
                           "thoracic", "neural", "gastric", "dermal", "ocular"};
  for (int l = 0; l < cfg.n_labels; ++l) {
    const std::string sig = "sig" + zero_padded(l, 3);
    out.signatures.push_back(sig);
    LabelSpace::Entry e;
    e.code = "C" + zero_padded(l, 2);
    e.definition = std::string("synthetic ") + kThemes[l % 10] + " condition marked by token " + sig;
    entries.push_back(std::move(e));
  }
  out.labels = LabelSpace(std::move(entries));

  for (int l = 0; l < n_long; ++l) out.long_range_labels.push_back(l);
  for (int a = 0; a + 1 < cfg.n_labels; a += 2) out.designated_pairs.emplace_back(a, a + 1);

  std::vector<std::string> pool;
  for (int i = 0; i < cfg.distractor_pool; ++i) pool.push_back("w" + zero_padded(i, 3));

  const double marginal = std::clamp(3.0 / cfg.n_labels, 0.05, 0.5);
  Rng rng(derive_seed(cfg.seed, "synth"));

  for (int d = 0; d < cfg.n_docs; ++d) {
    // Draw the label set: designated pairs either co-draw or draw independently.
    std::vector<int> have;
    std::vector<char> taken(static_cast<std::size_t>(cfg.n_labels), 0);
    for (const auto& [a, b] : out.designated_pairs) {
      if (rng.uniform() < cfg.pair_correlation) {
        if (rng.uniform() < marginal) { taken[static_cast<std::size_t>(a)] = taken[static_cast<std::size_t>(b)] = 1; }
      } else {
        if (rng.uniform() < marginal) taken[static_cast<std::size_t>(a)] = 1;
        if (rng.uniform() < marginal) taken[static_cast<std::size_t>(b)] = 1;
      }
    }
    if (cfg.n_labels % 2 == 1 && rng.uniform() < marginal) {
      taken[static_cast<std::size_t>(cfg.n_labels - 1)] = 1;
    }
    for (int l = 0; l < cfg.n_labels; ++l) {
      if (taken[static_cast<std::size_t>(l)]) have.push_back(l);
    }
    if (have.empty()) have.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.n_labels))));

    RawDocument doc;
    doc.id = "d" + zero_padded(d, 5);
    doc.codes = have;
    doc.tokens.resize(static_cast<std::size_t>(cfg.doc_len));
    for (auto& t : doc.tokens) t = pool[rng.below(pool.size())];

    // Plant signature occurrences per carried label, distinct positions.
    std::set<int> used_pos;
    for (const int l : have) {
      const bool long_range = l < n_long;
      const int lo = long_range ? 513 : 0;
      for (int rep = 0; rep < cfg.signature_repeats; ++rep) {
        int pos = 0;
        do {
          pos = lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.doc_len - lo)));
        } while (!used_pos.insert(pos).second);
        doc.tokens[static_cast<std::size_t>(pos)] = out.signatures[static_cast<std::size_t>(l)];
      }
    }
    out.docs.push_back(std::move(doc));
  }
  return out;
}

}  // namespace graphcoder
