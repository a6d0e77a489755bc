// Label co-occurrence graph: NPMI adjacency, symmetric normalization, and the
// one-layer graph convolution that enriches label embeddings.
#pragma once

#include <vector>

#include "graphcoder/common.hpp"
#include "graphcoder/corpus.hpp"

namespace graphcoder {

// Exact document/label co-occurrence counts over the training split.
struct CooccurrenceCounts {
  long total_docs = 0;                 // N
  Eigen::VectorXi per_label;           // N_i, length n
  Eigen::MatrixXi pair;                // N_ij, symmetric, diagonal equals N_i

  int n() const { return static_cast<int>(per_label.size()); }
};

template <class Doc>
CooccurrenceCounts count_cooccurrence(const std::vector<Doc>& train_docs, int n_labels) {
  if (train_docs.empty()) throw ConfigError("co-occurrence counts need a non-empty training set");
  CooccurrenceCounts c;
  c.total_docs = static_cast<long>(train_docs.size());
  c.per_label = Eigen::VectorXi::Zero(n_labels);
  c.pair = Eigen::MatrixXi::Zero(n_labels, n_labels);
  for (const auto& d : train_docs) {
    for (const int i : d.codes) {
      c.per_label(i) += 1;
      for (const int j : d.codes) c.pair(i, j) += 1;
    }
  }
  return c;
}

// Normalized pointwise mutual information of a label pair, in [-1, 1].
// Conventions: never co-occurring pairs score -1, always co-occurring pairs
// score +1, and the diagonal is exactly 1. Labels unseen in training raise
// UnseenLabelError.
double npmi(const CooccurrenceCounts& counts, int i, int j);

struct LabelGraph {
  MatD npmi;        // n x n, values in [-1, 1]
  MatD adjacency;   // binary, symmetric, unit diagonal for threshold < 1
  double threshold = 0.2;
  VecD degrees;     // adjacency row sums
  MatD normalized;  // D^{-1/2} A D^{-1/2}
};

// Thresholded NPMI adjacency (edge iff npmi > threshold, strictly) with its
// symmetric normalization.
LabelGraph build_adjacency(const CooccurrenceCounts& counts, double threshold = 0.2);

// A[i][j] / sqrt(deg_i * deg_j). Rows with zero degree raise ZeroDegreeError.
MatD normalize_adjacency(const MatD& adjacency);

// ---------------------------------------------------------------------------
// Graph convolution. Scalar-templated so the same code serves float training
// and double gradient checks.
// ---------------------------------------------------------------------------

// ReLU(A_hat * X * W); shapes (n,n) x (n,m) x (m,h) -> (n,h).
template <class S>
Mat<S> gcn_forward(const Mat<S>& a_hat, const Mat<S>& x, const Mat<S>& w) {
  if (a_hat.rows() != a_hat.cols() || a_hat.cols() != x.rows() || x.cols() != w.rows()) {
    throw ShapeError("gcn_forward: incompatible shapes");
  }
  Mat<S> z = a_hat * x * w;
  return z.cwiseMax(S(0));
}

// Row-wise concatenation [U_hat | X].
template <class S>
Mat<S> enrich(const Mat<S>& u_hat, const Mat<S>& x) {
  if (u_hat.rows() != x.rows()) throw ShapeError("enrich: row counts differ");
  Mat<S> u(u_hat.rows(), u_hat.cols() + x.cols());
  u << u_hat, x;
  return u;
}

// Reverse of gcn_forward given dU_hat and the forward output (for the ReLU
// gate). Accumulates into dx/dw.
template <class S>
void gcn_backward(const Mat<S>& a_hat, const Mat<S>& x, const Mat<S>& w,
                  const Mat<S>& u_hat, const Mat<S>& d_u_hat,
                  Mat<S>& dx, Mat<S>& dw) {
  Mat<S> dz = (u_hat.array() > S(0)).template cast<S>() * d_u_hat.array();
  Mat<S> ax = a_hat * x;
  dw.noalias() += ax.transpose() * dz;
  dx.noalias() += a_hat.transpose() * (dz * w.transpose());
}

}  // namespace graphcoder
