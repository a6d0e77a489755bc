#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>

#include "graphcoder/labelgraph.hpp"

using namespace graphcoder;

namespace {

CooccurrenceCounts pair_counts(long n, long ni, long nj, long nij) {
  CooccurrenceCounts c;
  c.total_docs = n;
  c.per_label = Eigen::VectorXi(2);
  c.per_label << static_cast<int>(ni), static_cast<int>(nj);
  c.pair = Eigen::MatrixXi(2, 2);
  c.pair << static_cast<int>(ni), static_cast<int>(nij), static_cast<int>(nij),
      static_cast<int>(nj);
  return c;
}

// Independent route: probability form in base 2 with the same degenerate-case
// conventions.
double npmi_oracle(long n, long ni, long nj, long nij) {
  if (nij == n) return 1.0;
  if (nij == 0) return -1.0;
  const double pij = static_cast<double>(nij) / static_cast<double>(n);
  const double pi = static_cast<double>(ni) / static_cast<double>(n);
  const double pj = static_cast<double>(nj) / static_cast<double>(n);
  return std::log2(pij / (pi * pj)) / (-std::log2(pij));
}

}  // namespace

TEST_CASE("npmi worked example and exact special cases") {
  // N=100, N_i=50, N_j=40, N_ij=30 -> ln(0.3/0.2)/(-ln 0.3)
  const double v = npmi(pair_counts(100, 50, 40, 30), 0, 1);
  CHECK(v == doctest::Approx(std::log(1.5) / (-std::log(0.3))).epsilon(1e-12));
  CHECK(v == doctest::Approx(0.3367726).epsilon(1e-5));

  // Statistical independence is exactly zero.
  CHECK(npmi(pair_counts(100, 50, 40, 20), 0, 1) == 0.0);

  // Diagonal is exactly one for any 0 < p < 1, and for p = 1.
  CHECK(npmi(pair_counts(100, 50, 40, 20), 0, 0) == 1.0);
  CHECK(npmi(pair_counts(10, 10, 4, 4), 0, 0) == 1.0);

  // Never co-occurring pairs sit at -1; always co-occurring at +1.
  CHECK(npmi(pair_counts(100, 50, 40, 0), 0, 1) == -1.0);
  CHECK(npmi(pair_counts(7, 7, 7, 7), 0, 1) == 1.0);

  CHECK_THROWS_AS(npmi(pair_counts(10, 0, 4, 0), 0, 1), UnseenLabelError);
}

TEST_CASE("npmi matches the base-2 oracle, is symmetric, and stays in range") {
  Rng rng(42);
  for (int trial = 0; trial < 2000; ++trial) {
    const long n = 2 + static_cast<long>(rng.below(5000));
    const long ni = 1 + static_cast<long>(rng.below(static_cast<std::uint64_t>(n)));
    const long nj = 1 + static_cast<long>(rng.below(static_cast<std::uint64_t>(n)));
    const long lo = std::max(0l, ni + nj - n);
    const long hi = std::min(ni, nj);
    const long nij = lo + static_cast<long>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
    const auto c = pair_counts(n, ni, nj, nij);
    const double v = npmi(c, 0, 1);
    CHECK(v == doctest::Approx(npmi_oracle(n, ni, nj, nij)).epsilon(1e-9));
    CHECK(v == npmi(c, 1, 0));
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
}

namespace {

std::vector<Document> random_label_docs(int n_docs, int n_labels, Rng& rng) {
  std::vector<Document> docs;
  for (int d = 0; d < n_docs; ++d) {
    Document doc;
    doc.id = "d" + std::to_string(d);
    doc.tokens = {2};
    for (int l = 0; l < n_labels; ++l) {
      if (rng.uniform() < 0.3) doc.codes.push_back(l);
    }
    if (doc.codes.empty()) doc.codes.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(n_labels))));
    docs.push_back(doc);
  }
  // Every label must appear at least once.
  for (int l = 0; l < n_labels; ++l) {
    bool seen = false;
    for (const auto& d : docs) {
      for (const int c : d.codes) seen = seen || c == l;
    }
    if (!seen) {
      docs[static_cast<std::size_t>(l) % docs.size()].codes.push_back(l);
    }
  }
  for (auto& d : docs) {
    std::sort(d.codes.begin(), d.codes.end());
    d.codes.erase(std::unique(d.codes.begin(), d.codes.end()), d.codes.end());
  }
  return docs;
}

}  // namespace

TEST_CASE("count_cooccurrence matches a brute-force pair counter") {
  // Tiny worked example: {a,b}, {a}, {b}.
  std::vector<Document> docs(3);
  docs[0].codes = {0, 1};
  docs[1].codes = {0};
  docs[2].codes = {1};
  const CooccurrenceCounts c = count_cooccurrence(docs, 2);
  CHECK(c.total_docs == 3);
  CHECK(c.per_label(0) == 2);
  CHECK(c.per_label(1) == 2);
  CHECK(c.pair(0, 1) == 1);
  CHECK(c.pair(0, 0) == 2);

  // Brute force over random documents.
  Rng rng(5);
  const auto rand_docs = random_label_docs(100, 8, rng);
  const CooccurrenceCounts counts = count_cooccurrence(rand_docs, 8);
  for (int i = 0; i < 8; ++i) {
    for (int j = 0; j < 8; ++j) {
      int expect = 0;
      for (const auto& d : rand_docs) {
        bool has_i = false, has_j = false;
        for (const int code : d.codes) {
          has_i = has_i || code == i;
          has_j = has_j || code == j;
        }
        if (has_i && has_j) ++expect;
      }
      CHECK(counts.pair(i, j) == expect);
    }
  }
  CHECK(counts.pair == counts.pair.transpose().eval());
}

TEST_CASE("build_adjacency thresholds strictly and keeps the diagonal") {
  const auto c = pair_counts(100, 50, 40, 30);  // npmi = 0.3368 > 0.2
  const LabelGraph g = build_adjacency(c, 0.2);
  CHECK(g.adjacency(0, 1) == 1.0);
  CHECK(g.adjacency(0, 0) == 1.0);
  CHECK(g.adjacency(1, 1) == 1.0);

  const auto indep = pair_counts(100, 50, 40, 20);  // npmi = 0
  const LabelGraph g2 = build_adjacency(indep, 0.2);
  CHECK(g2.adjacency(0, 1) == 0.0);
  CHECK(g2.adjacency(0, 0) == 1.0);

  // Strict comparison: an NPMI exactly at the threshold is not an edge.
  const LabelGraph g3 = build_adjacency(indep, 0.0);
  CHECK(g3.adjacency(0, 1) == 0.0);
}

TEST_CASE("normalize_adjacency formula and spectrum") {
  MatD ones = MatD::Ones(2, 2);
  const MatD a_hat = normalize_adjacency(ones);
  CHECK(a_hat(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(a_hat(0, 1) == doctest::Approx(0.5).epsilon(1e-15));

  CHECK(normalize_adjacency(MatD::Identity(3, 3)).isApprox(MatD::Identity(3, 3), 1e-15));

  MatD zero_row = MatD::Zero(2, 2);
  zero_row(0, 0) = 1.0;
  CHECK_THROWS_AS(normalize_adjacency(zero_row), ZeroDegreeError);

  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 3 + static_cast<int>(rng.below(10));
    MatD a = MatD::Identity(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        const double e = rng.uniform() < 0.4 ? 1.0 : 0.0;
        a(i, j) = e;
        a(j, i) = e;
      }
    }
    const MatD norm = normalize_adjacency(a);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const double expect = a(i, j) / std::sqrt(a.row(i).sum() * a.row(j).sum());
        CHECK(std::abs(norm(i, j) - expect) <= 1e-12);
      }
    }
    Eigen::SelfAdjointEigenSolver<MatD> es(norm);
    CHECK(es.eigenvalues().minCoeff() >= -1.0 - 1e-9);
    CHECK(es.eigenvalues().maxCoeff() <= 1.0 + 1e-9);
  }
}

TEST_CASE("label permutation equivariance of the graph pipeline") {
  Rng rng(13);
  const auto docs = random_label_docs(60, 6, rng);
  const CooccurrenceCounts counts = count_cooccurrence(docs, 6);
  const LabelGraph g = build_adjacency(counts, 0.1);

  const std::vector<int> perm = {3, 0, 5, 1, 4, 2};
  std::vector<Document> permuted = docs;
  for (auto& d : permuted) {
    for (auto& c : d.codes) {
      // new index of old label c
      c = static_cast<int>(std::find(perm.begin(), perm.end(), c) - perm.begin());
    }
    std::sort(d.codes.begin(), d.codes.end());
  }
  const LabelGraph gp = build_adjacency(count_cooccurrence(permuted, 6), 0.1);
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 6; ++j) {
      const int pi = static_cast<int>(std::find(perm.begin(), perm.end(), i) - perm.begin());
      const int pj = static_cast<int>(std::find(perm.begin(), perm.end(), j) - perm.begin());
      CHECK(g.npmi(i, j) == gp.npmi(pi, pj));
      CHECK(g.adjacency(i, j) == gp.adjacency(pi, pj));
      CHECK(g.normalized(i, j) == doctest::Approx(gp.normalized(pi, pj)).epsilon(1e-14));
    }
  }
}

TEST_CASE("gcn_forward identity propagation and the hand example") {
  MatD x(2, 2);
  x << -1.0, 2.0, 0.5, -3.0;
  const MatD u = gcn_forward<double>(MatD::Identity(2, 2), x, MatD::Identity(2, 2));
  CHECK(u(0, 0) == 0.0);
  CHECK(u(0, 1) == 2.0);
  CHECK(u(1, 0) == 0.5);
  CHECK(u(1, 1) == 0.0);

  MatD a_hat(2, 2);
  a_hat << 0.5, 0.5, 0.5, 0.5;
  MatD x2(2, 1);
  x2 << 1.0, 3.0;
  MatD w(1, 1);
  w << 2.0;
  const MatD u2 = gcn_forward(a_hat, x2, w);
  CHECK(u2(0, 0) == doctest::Approx(4.0).epsilon(1e-15));
  CHECK(u2(1, 0) == doctest::Approx(4.0).epsilon(1e-15));

  Rng rng(3);
  MatD xr(5, 4), wr(4, 3), ar(5, 5);
  for (int i = 0; i < xr.size(); ++i) xr.data()[i] = rng.gaussian();
  for (int i = 0; i < wr.size(); ++i) wr.data()[i] = rng.gaussian();
  for (int i = 0; i < ar.size(); ++i) ar.data()[i] = rng.gaussian();
  CHECK(gcn_forward(ar, xr, wr).minCoeff() >= 0.0);
  CHECK_THROWS_AS(gcn_forward(ar, xr, MatD(MatD::Zero(5, 3))), ShapeError);
}

TEST_CASE("gcn gradients match central differences") {
  Rng rng(17);
  const int n = 4, m = 3, h = 2;
  MatD a(n, n), x(n, m), w(m, h), weights(n, h);
  for (int i = 0; i < a.size(); ++i) a.data()[i] = rng.gaussian();
  a = ((a + a.transpose()) * 0.5).eval();
  for (int i = 0; i < x.size(); ++i) x.data()[i] = rng.gaussian();
  for (int i = 0; i < w.size(); ++i) w.data()[i] = rng.gaussian();
  for (int i = 0; i < weights.size(); ++i) weights.data()[i] = rng.gaussian();

  auto loss = [&](const MatD& xx, const MatD& ww) {
    return (gcn_forward(a, xx, ww).cwiseProduct(weights)).sum();
  };

  const MatD u_hat = gcn_forward(a, x, w);
  MatD dx = MatD::Zero(n, m), dw = MatD::Zero(m, h);
  gcn_backward<double>(a, x, w, u_hat, weights, dx, dw);

  const double eps = 1e-6;
  for (int i = 0; i < x.size(); ++i) {
    MatD xp = x, xm = x;
    xp.data()[i] += eps;
    xm.data()[i] -= eps;
    const double fd = (loss(xp, w) - loss(xm, w)) / (2 * eps);
    CHECK(std::abs(fd - dx.data()[i]) <=
          1e-4 * std::max({std::abs(fd), std::abs(dx.data()[i]), 1e-8}));
  }
  for (int i = 0; i < w.size(); ++i) {
    MatD wp = w, wm = w;
    wp.data()[i] += eps;
    wm.data()[i] -= eps;
    const double fd = (loss(x, wp) - loss(x, wm)) / (2 * eps);
    CHECK(std::abs(fd - dw.data()[i]) <=
          1e-4 * std::max({std::abs(fd), std::abs(dw.data()[i]), 1e-8}));
  }
}

TEST_CASE("enrich concatenates and slices back") {
  MatD u_hat(1, 2);
  u_hat << 1.0, 2.0;
  MatD x(1, 1);
  x << 3.0;
  const MatD u = enrich(u_hat, x);
  REQUIRE(u.rows() == 1);
  REQUIRE(u.cols() == 3);
  CHECK(u(0, 0) == 1.0);
  CHECK(u(0, 1) == 2.0);
  CHECK(u(0, 2) == 3.0);

  MatD u4 = MatD::Random(5, 4), x3 = MatD::Random(5, 3);
  const MatD joined = enrich(u4, x3);
  CHECK(joined.cols() == 7);
  CHECK(joined.leftCols(4) == u4);
  CHECK(joined.rightCols(3) == x3);
  CHECK_THROWS_AS(enrich(u4, MatD(MatD::Zero(4, 3))), ShapeError);
}

TEST_CASE("npmi is base-invariant as a ratio of logs") {
  Rng rng(77);
  for (int trial = 0; trial < 500; ++trial) {
    const long n = 2 + static_cast<long>(rng.below(100000));
    const long ni = 1 + static_cast<long>(rng.below(static_cast<std::uint64_t>(n)));
    const long nj = 1 + static_cast<long>(rng.below(static_cast<std::uint64_t>(n)));
    const long lo = std::max(0l, ni + nj - n);
    const long hi = std::min(ni, nj);
    const long nij = lo + static_cast<long>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
    if (nij == 0 || nij == n) continue;
    const double ratio = (static_cast<double>(nij) * static_cast<double>(n)) /
                         (static_cast<double>(ni) * static_cast<double>(nj));
    const double p_ij = static_cast<double>(nij) / static_cast<double>(n);
    const double base2 = std::log2(ratio) / (-std::log2(p_ij));
    const double natural = std::log(ratio) / (-std::log(p_ij));
    CHECK(std::abs(base2 - natural) <= 1e-12);
    CHECK(std::abs(npmi(pair_counts(n, ni, nj, nij), 0, 1) - natural) <= 1e-15);
  }
}
