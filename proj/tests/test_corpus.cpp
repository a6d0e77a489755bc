#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "graphcoder/corpus.hpp"
#include "graphcoder/labelgraph.hpp"

using namespace graphcoder;

TEST_CASE("preprocess lowercases, filters, truncates") {
  CHECK(preprocess("Chest X-Ray 123 done.", 4096) ==
        std::vector<std::string>{"chest", "x-ray", "done."});
  CHECK(preprocess("A b C", 2) == std::vector<std::string>{"a", "b"});
  CHECK_THROWS_AS(preprocess("42 7 9", 4096), EmptyDocumentError);
}

TEST_CASE("preprocess is idempotent") {
  Rng rng(7);
  const std::string alphabet = "aB9 .x-Z\t\n42";
  for (int trial = 0; trial < 50; ++trial) {
    std::string text;
    for (int i = 0; i < 80; ++i) text += alphabet[rng.below(alphabet.size())];
    std::vector<std::string> once;
    try {
      once = preprocess(text, 12);
    } catch (const EmptyDocumentError&) {
      continue;
    }
    std::string joined;
    for (const auto& t : once) joined += t + " ";
    CHECK(preprocess(joined, 12) == once);
  }
}

TEST_CASE("build_vocab assigns first-occurrence ids after reserved slots") {
  std::vector<RawDocument> docs(2);
  docs[0].id = "a";
  docs[0].tokens = {"a", "b"};
  docs[1].id = "b";
  docs[1].tokens = {"b", "c"};
  const Vocab v = build_vocab(docs);
  CHECK(v.size() == 5);
  CHECK(v.lookup("a") == 2);
  CHECK(v.lookup("b") == 3);
  CHECK(v.lookup("c") == 4);
  CHECK(v.lookup("zzz") == Vocab::kUnk);

  std::vector<RawDocument> rep(1);
  rep[0].id = "r";
  rep[0].tokens = {"x", "x", "x"};
  CHECK(build_vocab(rep).size() == 3);
}

TEST_CASE("vocab cls id never reachable from text") {
  std::vector<RawDocument> docs(1);
  docs[0].id = "a";
  docs[0].tokens = {"alpha", "<doc>"};
  const Vocab v = build_vocab(docs, /*with_cls=*/true);
  CHECK(v.has_cls());
  CHECK(v.cls_id() == v.size() - 1);
  CHECK(v.lookup("<doc>") != v.cls_id());  // the text token keeps its own id

  const Vocab round = Vocab::from_tokens(v.tokens(), v.cls_id());
  CHECK(round.lookup("alpha") == v.lookup("alpha"));
  CHECK(round.cls_id() == v.cls_id());
}

namespace {

std::vector<RawDocument> make_docs(int n) {
  std::vector<RawDocument> docs;
  for (int i = 0; i < n; ++i) {
    RawDocument d;
    d.id = "doc" + std::to_string(i);
    d.tokens = {"tok" + std::to_string(i)};
    docs.push_back(d);
  }
  return docs;
}

}  // namespace

TEST_CASE("split_corpus sizes, determinism, and failure modes") {
  const auto docs = make_docs(10);
  const RawSplits s = split_corpus(docs, {0.8, 0.1, 0.1}, 7);
  CHECK(s.train.size() == 8);
  CHECK(s.val.size() == 1);
  CHECK(s.test.size() == 1);

  const RawSplits again = split_corpus(docs, {0.8, 0.1, 0.1}, 7);
  for (std::size_t i = 0; i < s.train.size(); ++i) CHECK(s.train[i].id == again.train[i].id);
  CHECK(s.val[0].id == again.val[0].id);
  CHECK(s.test[0].id == again.test[0].id);

  const RawSplits other = split_corpus(docs, {0.8, 0.1, 0.1}, 8);
  CHECK(other.train.size() == 8);
  CHECK(other.val.size() == 1);

  CHECK_THROWS_AS(split_corpus(docs, {0.5, 0.5, 0.0}, 7), SplitError);
  CHECK_THROWS_AS(split_corpus(docs, {0.5, 0.2, 0.2}, 7), SplitError);

  // Splits are disjoint by id and cover the corpus.
  std::set<std::string> ids;
  for (const auto& d : s.train) ids.insert(d.id);
  for (const auto& d : s.val) ids.insert(d.id);
  for (const auto& d : s.test) ids.insert(d.id);
  CHECK(ids.size() == docs.size());
}

TEST_CASE("split_corpus_by_ids mirrors explicit lists") {
  const auto docs = make_docs(6);
  const RawSplits s = split_corpus_by_ids(docs, {"doc0", "doc3"}, {"doc1"}, {"doc2", "doc5"});
  CHECK(s.train.size() == 2);
  CHECK(s.train[0].id == "doc0");
  CHECK(s.train[1].id == "doc3");
  CHECK(s.test[1].id == "doc5");
  CHECK_THROWS_AS(split_corpus_by_ids(docs, {"nope"}, {"doc1"}, {"doc2"}), SplitError);
  CHECK_THROWS_AS(split_corpus_by_ids(docs, {"doc0"}, {"doc0"}, {"doc2"}), SplitError);
}

TEST_CASE("ingest_corpus maps lines to documents") {
  const std::string dir = "test_corpus_tmp";
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir + "/c.jsonl");
    out << R"({"id":"d1","text":"acute renal failure","codes":["584.9"]})" << "\n";
  }
  LabelSpace labels({{"584.9", "acute kidney failure"}, {"428.0", "heart failure"}});
  std::vector<RawDocument> raw = read_raw_corpus(dir + "/c.jsonl", labels, 4096);
  const Vocab vocab = build_vocab(raw);
  const auto docs = map_documents(raw, vocab);
  REQUIRE(docs.size() == 1);
  CHECK(docs[0].id == "d1");
  CHECK(docs[0].tokens.size() == 3);
  CHECK(docs[0].codes == std::vector<int>{0});
  for (const int t : docs[0].tokens) CHECK(t != Vocab::kPad);

  {
    std::ofstream out(dir + "/missing.jsonl");
    out << R"({"id":"d1","text":"acute renal failure"})" << "\n";
  }
  CHECK_THROWS_AS(read_raw_corpus(dir + "/missing.jsonl", labels, 4096), ParseError);

  {
    std::ofstream out(dir + "/unknown.jsonl");
    out << R"({"id":"d1","text":"acute renal failure","codes":["999.9"]})" << "\n";
  }
  CHECK_THROWS_AS(read_raw_corpus(dir + "/unknown.jsonl", labels, 4096), UnknownLabelError);

  {
    std::ofstream out(dir + "/bad.jsonl");
    out << "{not json\n";
  }
  CHECK_THROWS_AS(read_raw_corpus(dir + "/bad.jsonl", labels, 4096), ParseError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("synth corpus: labels recoverable by signature scan") {
  SynthConfig cfg;
  cfg.n_labels = 12;
  cfg.n_docs = 200;
  cfg.doc_len = 600;
  cfg.long_range_fraction = 0.5;
  cfg.pair_correlation = 0.6;
  cfg.seed = 1;
  const SynthCorpus sc = synth_corpus(cfg);
  REQUIRE(static_cast<int>(sc.docs.size()) == cfg.n_docs);

  for (const auto& d : sc.docs) {
    CHECK(static_cast<int>(d.tokens.size()) == cfg.doc_len);
    std::set<int> found;
    for (std::size_t p = 0; p < d.tokens.size(); ++p) {
      for (int l = 0; l < cfg.n_labels; ++l) {
        if (d.tokens[p] == sc.signatures[static_cast<std::size_t>(l)]) found.insert(l);
      }
    }
    const std::set<int> gold(d.codes.begin(), d.codes.end());
    CHECK(found == gold);  // keyword oracle agreement must be exact
  }

  // Definitions carry the signature token.
  for (int l = 0; l < cfg.n_labels; ++l) {
    const auto toks = preprocess(sc.labels.label(l).definition, 64);
    CHECK(std::count(toks.begin(), toks.end(), sc.signatures[static_cast<std::size_t>(l)]) == 1);
  }

  // Re-running with the same seed is identical.
  const SynthCorpus sc2 = synth_corpus(cfg);
  for (std::size_t i = 0; i < sc.docs.size(); ++i) {
    CHECK(sc.docs[i].tokens == sc2.docs[i].tokens);
    CHECK(sc.docs[i].codes == sc2.docs[i].codes);
  }
}

TEST_CASE("synth long_range_fraction=1 plants every signature past token 512") {
  SynthConfig cfg;
  cfg.n_labels = 8;
  cfg.n_docs = 50;
  cfg.doc_len = 700;
  cfg.long_range_fraction = 1.0;
  cfg.seed = 3;
  const SynthCorpus sc = synth_corpus(cfg);
  for (const auto& d : sc.docs) {
    for (std::size_t p = 0; p < d.tokens.size(); ++p) {
      for (const auto& sig : sc.signatures) {
        if (d.tokens[p] == sig) CHECK(p > 512);
      }
    }
  }
  SynthConfig bad = cfg;
  bad.doc_len = 500;
  CHECK_THROWS_AS(synth_corpus(bad), ConfigError);
}

TEST_CASE("synth pair_correlation=0 gives near-zero NPMI on designated pairs") {
  SynthConfig cfg;
  cfg.n_labels = 20;
  cfg.n_docs = 5000;
  cfg.doc_len = 32;
  cfg.pair_correlation = 0.0;
  cfg.seed = 11;
  const SynthCorpus sc = synth_corpus(cfg);
  const CooccurrenceCounts counts = count_cooccurrence(sc.docs, cfg.n_labels);
  for (const auto& [a, b] : sc.designated_pairs) {
    CHECK(std::abs(npmi(counts, a, b)) < 0.15);
  }
}

TEST_CASE("synth rejects degenerate configs") {
  SynthConfig cfg;
  cfg.n_labels = 1;
  CHECK_THROWS_AS(synth_corpus(cfg), ConfigError);
  cfg.n_labels = 4;
  cfg.doc_len = 8;
  CHECK_THROWS_AS(synth_corpus(cfg), ConfigError);
}
