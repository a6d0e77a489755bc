#include <doctest.h>

#include <cmath>

#include "graphcoder/encoder.hpp"

using namespace graphcoder;

namespace {

EncoderConfig small_config() {
  EncoderConfig cfg;
  cfg.t_max = 64;
  cfg.hidden = 8;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.block_size = 8;
  cfg.window_blocks = 3;
  cfg.global_blocks = 1;
  cfg.random_blocks = 0;
  cfg.mode = EncoderMode::Sparse;
  return cfg;
}

template <class S>
EncoderParams<S> random_params(const EncoderConfig& cfg, int vocab, std::uint64_t seed) {
  Rng rng(seed);
  auto fill = [&](auto& m) {
    for (long i = 0; i < static_cast<long>(m.size()); ++i) m.data()[i] = static_cast<S>(0.3 * rng.gaussian());
  };
  EncoderParams<S> p;
  p.token_emb.resize(vocab, cfg.hidden);
  fill(p.token_emb);
  p.pos_emb.resize(cfg.t_max, cfg.hidden);
  fill(p.pos_emb);
  p.layers.resize(static_cast<std::size_t>(cfg.layers));
  for (auto& L : p.layers) {
    L.wq.resize(cfg.hidden, cfg.hidden);
    L.wk.resize(cfg.hidden, cfg.hidden);
    L.wv.resize(cfg.hidden, cfg.hidden);
    L.wo.resize(cfg.hidden, cfg.hidden);
    L.w_ff1.resize(cfg.hidden, cfg.ffn_dim());
    L.w_ff2.resize(cfg.ffn_dim(), cfg.hidden);
    fill(L.wq);
    fill(L.wk);
    fill(L.wv);
    fill(L.wo);
    fill(L.w_ff1);
    fill(L.w_ff2);
    L.ln1_g = Vec<S>::Ones(cfg.hidden);
    L.ln1_b = Vec<S>::Zero(cfg.hidden);
    L.ln2_g = Vec<S>::Ones(cfg.hidden);
    L.ln2_b = Vec<S>::Zero(cfg.hidden);
    for (long i = 0; i < cfg.hidden; ++i) {
      L.ln1_g(i) += static_cast<S>(0.05 * rng.gaussian());
      L.ln2_g(i) += static_cast<S>(0.05 * rng.gaussian());
      L.ln1_b(i) = static_cast<S>(0.05 * rng.gaussian());
      L.ln2_b(i) = static_cast<S>(0.05 * rng.gaussian());
    }
  }
  return p;
}

template <class S>
void zero_params(EncoderParams<S>& p) {
  p.token_emb.setZero();
  p.pos_emb.setZero();
  for (auto& L : p.layers) {
    L.wq.setZero();
    L.wk.setZero();
    L.wv.setZero();
    L.wo.setZero();
    L.w_ff1.setZero();
    L.w_ff2.setZero();
    L.ln1_g.setZero();
    L.ln1_b.setZero();
    L.ln2_g.setZero();
    L.ln2_b.setZero();
  }
}

std::vector<int> random_ids(int t, int vocab, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<int> ids(static_cast<std::size_t>(t));
  for (auto& id : ids) id = 2 + static_cast<int>(rng.below(static_cast<std::uint64_t>(vocab - 2)));
  return ids;
}

constexpr EncoderCache<double>* kNoCache = nullptr;

}  // namespace

TEST_CASE("build_pattern enumerates window, global, and self blocks") {
  EncoderConfig cfg = small_config();
  const SparsityPattern p = build_pattern(cfg, 64);
  REQUIRE(p.n_blocks == 8);
  CHECK(p.visible[3] == std::vector<int>{0, 2, 3, 4});
  CHECK(p.visible[0].size() == 8);  // global block sees everyone
  for (int qb = 0; qb < 8; ++qb) {
    bool self = false;
    for (const int kb : p.visible[static_cast<std::size_t>(qb)]) self = self || kb == qb;
    CHECK(self);
  }

  cfg.mode = EncoderMode::Dense;
  const SparsityPattern dense = build_pattern(cfg, 64);
  for (const auto& v : dense.visible) CHECK(v.size() == 8);

  cfg.mode = EncoderMode::Sparse;
  cfg.random_blocks = 2;
  const SparsityPattern r1 = build_pattern(cfg, 64);
  const SparsityPattern r2 = build_pattern(cfg, 64);
  for (int qb = 0; qb < 8; ++qb) {
    CHECK(r1.visible[static_cast<std::size_t>(qb)] == r2.visible[static_cast<std::size_t>(qb)]);
  }

  cfg.random_blocks = 100;
  CHECK_THROWS_AS(build_pattern(cfg, 64), PatternError);
}

TEST_CASE("encode with zero layers returns embeddings") {
  EncoderConfig cfg = small_config();
  cfg.layers = 0;
  const auto params = random_params<double>(cfg, 20, 1);
  const auto ids = random_ids(16, 20, 2);
  std::vector<std::uint8_t> mask;
  const MatD h = encode(ids, cfg, params, mask, kNoCache);
  REQUIRE(h.rows() == 16);
  for (int i = 0; i < 16; ++i) {
    const Eigen::RowVectorXd expected =
        params.token_emb.row(ids[static_cast<std::size_t>(i)]) + params.pos_emb.row(i);
    CHECK(h.row(i) == expected);
  }
  CHECK(mask == std::vector<std::uint8_t>(16, 1));
}

TEST_CASE("sparse path with a complete pattern matches the dense path") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    EncoderConfig cfg = small_config();
    const auto params = random_params<double>(cfg, 30, seed);
    const auto ids = random_ids(64, 30, seed + 100);
    std::vector<std::uint8_t> mask;

    const SparsityPattern complete = SparsityPattern::complete(8, cfg.block_size);
    const MatD h_sparse = encode(ids, cfg, params, mask, kNoCache, &complete);

    EncoderConfig dense_cfg = cfg;
    dense_cfg.mode = EncoderMode::Dense;
    const MatD h_dense = encode(ids, dense_cfg, params, mask, kNoCache);
    CHECK((h_sparse - h_dense).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("attention rows over visible keys are probability distributions") {
  EncoderConfig cfg = small_config();
  cfg.random_blocks = 1;
  const auto params = random_params<double>(cfg, 30, 3);
  const auto ids = random_ids(40, 30, 4);  // 5 blocks
  std::vector<std::uint8_t> mask;
  EncoderCache<double> cache;
  encode(ids, cfg, params, mask, &cache);
  for (const auto& layer : cache.layers) {
    for (const auto& w : layer.w) {  // rows are (head, query) distributions
      for (Eigen::Index r = 0; r < w.rows(); ++r) {
        CHECK(w.row(r).minCoeff() >= 0.0);
        CHECK(std::abs(w.row(r).sum() - 1.0) <= 1e-6);
      }
    }
  }
}

TEST_CASE("pure-window single-layer attention is block-local") {
  EncoderConfig cfg = small_config();
  cfg.layers = 1;
  cfg.window_blocks = 1;
  cfg.global_blocks = 0;
  cfg.random_blocks = 0;
  const auto params = random_params<double>(cfg, 30, 5);
  auto ids = random_ids(32, 30, 6);  // 4 blocks of 8
  std::vector<std::uint8_t> mask;
  const MatD h0 = encode(ids, cfg, params, mask, kNoCache);

  const int j = 19;  // block 2
  ids[static_cast<std::size_t>(j)] = ids[static_cast<std::size_t>(j)] == 2 ? 3 : 2;
  const MatD h1 = encode(ids, cfg, params, mask, kNoCache);
  for (int i = 0; i < 32; ++i) {
    const bool same_block = (i / cfg.block_size) == (j / cfg.block_size);
    const double diff = (h0.row(i) - h1.row(i)).cwiseAbs().maxCoeff();
    if (same_block) {
      CHECK(diff > 0.0);
    } else {
      CHECK(diff == 0.0);
    }
  }
}

TEST_CASE("appending padding leaves real rows unchanged") {
  EncoderConfig cfg = small_config();
  cfg.random_blocks = 1;
  const auto params = random_params<double>(cfg, 30, 7);
  const auto ids = random_ids(51, 30, 8);  // deliberately not a block multiple
  std::vector<std::uint8_t> mask;
  const MatD h0 = encode(ids, cfg, params, mask, kNoCache);

  std::vector<int> padded = ids;
  padded.insert(padded.end(), 13, Vocab::kPad);
  std::vector<std::uint8_t> mask_padded;
  const MatD h1 = encode(padded, cfg, params, mask_padded, kNoCache);
  REQUIRE(h1.rows() == 64);
  CHECK((h1.topRows(51) - h0).cwiseAbs().maxCoeff() <= 1e-10);
  for (std::size_t i = 51; i < 64; ++i) CHECK(mask_padded[i] == 0);

  // Same input twice is bit-identical.
  const MatD h2 = encode(ids, cfg, params, mask, kNoCache);
  CHECK((h2 - h0).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("truncate512 caps the encoded length") {
  EncoderConfig cfg = small_config();
  cfg.t_max = 1024;
  cfg.mode = EncoderMode::Truncate512;
  const auto params = random_params<double>(cfg, 30, 9);
  const auto ids = random_ids(600, 30, 10);
  std::vector<std::uint8_t> mask;
  const MatD h = encode(ids, cfg, params, mask, kNoCache);
  CHECK(h.rows() == 512);
  CHECK(mask.size() == 512);
}

TEST_CASE("encode rejects bad ids and empty sequences") {
  EncoderConfig cfg = small_config();
  const auto params = random_params<double>(cfg, 10, 11);
  std::vector<std::uint8_t> mask;
  const std::vector<int> bad = {2, 3, 99};
  CHECK_THROWS_AS(encode(bad, cfg, params, mask, kNoCache), VocabError);
  const std::vector<int> all_pad = {0, 0, 0};
  CHECK_THROWS_AS(encode(all_pad, cfg, params, mask, kNoCache), MaskError);
}

TEST_CASE("encode_backward matches central finite differences") {
  EncoderConfig cfg;
  cfg.t_max = 8;
  cfg.hidden = 4;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.block_size = 4;
  cfg.window_blocks = 3;
  cfg.global_blocks = 1;
  cfg.random_blocks = 0;
  auto params = random_params<double>(cfg, 12, 21);
  const auto ids = random_ids(7, 12, 22);  // trailing internal padding in block 2
  std::vector<std::uint8_t> mask;

  EncoderCache<double> cache;
  const MatD h = encode(ids, cfg, params, mask, &cache);
  Rng rng(23);
  MatD upstream(h.rows(), h.cols());
  for (long i = 0; i < static_cast<long>(upstream.size()); ++i) upstream.data()[i] = rng.gaussian();

  EncoderParams<double> grads = random_params<double>(cfg, 12, 0);
  zero_params(grads);
  encode_backward(upstream, cfg, params, cache, grads);

  auto loss = [&]() {
    std::vector<std::uint8_t> m2;
    const MatD hh = encode(ids, cfg, params, m2, kNoCache);
    return (hh.cwiseProduct(upstream)).sum();
  };

  const double eps = 1e-6;
  auto check_tensor = [&](auto& tensor, const auto& analytic) {
    for (long i = 0; i < static_cast<long>(tensor.size()); ++i) {
      const double saved = tensor.data()[i];
      tensor.data()[i] = saved + eps;
      const double up = loss();
      tensor.data()[i] = saved - eps;
      const double down = loss();
      tensor.data()[i] = saved;
      const double fd = (up - down) / (2 * eps);
      const double a = analytic.data()[i];
      CHECK(std::abs(fd - a) <= 1e-4 * std::max({std::abs(fd), std::abs(a), 1e-6}));
    }
  };
  check_tensor(params.token_emb, grads.token_emb);
  check_tensor(params.pos_emb, grads.pos_emb);
  check_tensor(params.layers[0].wq, grads.layers[0].wq);
  check_tensor(params.layers[0].wk, grads.layers[0].wk);
  check_tensor(params.layers[0].wv, grads.layers[0].wv);
  check_tensor(params.layers[0].wo, grads.layers[0].wo);
  check_tensor(params.layers[0].w_ff1, grads.layers[0].w_ff1);
  check_tensor(params.layers[0].w_ff2, grads.layers[0].w_ff2);
  check_tensor(params.layers[0].ln1_g, grads.layers[0].ln1_g);
  check_tensor(params.layers[0].ln1_b, grads.layers[0].ln1_b);
  check_tensor(params.layers[0].ln2_g, grads.layers[0].ln2_g);
  check_tensor(params.layers[0].ln2_b, grads.layers[0].ln2_b);
}

TEST_CASE("zero upstream gradient yields zero parameter gradients") {
  EncoderConfig cfg = small_config();
  cfg.layers = 1;
  const auto params = random_params<double>(cfg, 15, 31);
  const auto ids = random_ids(16, 15, 32);
  std::vector<std::uint8_t> mask;
  EncoderCache<double> cache;
  const MatD h = encode(ids, cfg, params, mask, &cache);

  EncoderParams<double> grads = random_params<double>(cfg, 15, 0);
  zero_params(grads);
  encode_backward(MatD(MatD::Zero(h.rows(), h.cols())), cfg, params, cache, grads);
  CHECK(grads.token_emb.cwiseAbs().maxCoeff() == 0.0);
  CHECK(grads.pos_emb.cwiseAbs().maxCoeff() == 0.0);
  CHECK(grads.layers[0].wq.cwiseAbs().maxCoeff() == 0.0);
  CHECK(grads.layers[0].w_ff2.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("padded positions receive no token-embedding gradient") {
  EncoderConfig cfg = small_config();
  cfg.layers = 1;
  const auto params = random_params<double>(cfg, 15, 41);
  std::vector<int> ids = random_ids(10, 15, 42);
  ids.insert(ids.end(), 6, Vocab::kPad);
  std::vector<std::uint8_t> mask;
  EncoderCache<double> cache;
  const MatD h = encode(ids, cfg, params, mask, &cache);

  // Upstream masked exactly as the head would mask it.
  Rng rng(43);
  MatD upstream = MatD::Zero(h.rows(), h.cols());
  for (int i = 0; i < 10; ++i) {
    for (int c = 0; c < h.cols(); ++c) upstream(i, c) = rng.gaussian();
  }
  EncoderParams<double> grads = random_params<double>(cfg, 15, 0);
  zero_params(grads);
  encode_backward(upstream, cfg, params, cache, grads);
  CHECK(grads.token_emb.row(Vocab::kPad).cwiseAbs().maxCoeff() == 0.0);
  for (int i = 10; i < 16; ++i) CHECK(grads.pos_emb.row(i).cwiseAbs().maxCoeff() == 0.0);
}
