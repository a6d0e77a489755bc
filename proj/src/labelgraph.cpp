#include "graphcoder/labelgraph.hpp"

#include <cmath>

namespace graphcoder {

double npmi(const CooccurrenceCounts& counts, int i, int j) {
  const int n = counts.n();
  if (i < 0 || j < 0 || i >= n || j >= n) throw ShapeError("npmi: label index out of range");
  const long ni = counts.per_label(i);
  const long nj = counts.per_label(j);
  if (ni == 0 || nj == 0) {
    throw UnseenLabelError("npmi: label unseen in training split");
  }
  const long nij = counts.pair(i, j);
  const long n_docs = counts.total_docs;
  if (nij == n_docs) return 1.0;   // joint probability 1
  if (i == j) return 1.0;          // p(i,i) = p(i) forces the log ratio to 1
  if (nij == 0) return -1.0;       // never co-occur

  // log(p_ij / (p_i p_j)) with an exact integer ratio, so statistical
  // independence (N_ij * N == N_i * N_j) yields exactly zero.
  const double ratio = (static_cast<double>(nij) * static_cast<double>(n_docs)) /
                       (static_cast<double>(ni) * static_cast<double>(nj));
  const double p_ij = static_cast<double>(nij) / static_cast<double>(n_docs);
  const double value = std::log(ratio) / (-std::log(p_ij));
  return value == 0.0 ? 0.0 : value;
}

LabelGraph build_adjacency(const CooccurrenceCounts& counts, double threshold) {
  const int n = counts.n();
  LabelGraph g;
  g.threshold = threshold;
  g.npmi.resize(n, n);
  g.adjacency.resize(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      const double v = npmi(counts, i, j);
      g.npmi(i, j) = v;
      g.npmi(j, i) = v;
      const double edge = v > threshold ? 1.0 : 0.0;
      g.adjacency(i, j) = edge;
      g.adjacency(j, i) = edge;
    }
  }
  g.degrees = g.adjacency.rowwise().sum();
  g.normalized = normalize_adjacency(g.adjacency);
  return g;
}

MatD normalize_adjacency(const MatD& adjacency) {
  if (adjacency.rows() != adjacency.cols()) throw ShapeError("normalize_adjacency: matrix not square");
  const Eigen::Index n = adjacency.rows();
  VecD deg = adjacency.rowwise().sum();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (deg(i) <= 0.0) throw ZeroDegreeError("normalize_adjacency: zero-degree row " + std::to_string(i));
  }
  VecD inv_sqrt = deg.array().rsqrt();
  return inv_sqrt.asDiagonal() * adjacency * inv_sqrt.asDiagonal();
}

}  // namespace graphcoder
