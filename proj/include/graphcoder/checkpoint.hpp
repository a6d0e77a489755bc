// Tensor container: one JSON manifest line followed by raw little-endian
// float32 payloads in manifest order, row-major within each tensor.
#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "graphcoder/common.hpp"

namespace graphcoder {

struct TensorBlob {
  std::string name;
  std::vector<long> shape;
  std::vector<float> data;  // row-major

  long numel() const {
    long n = 1;
    for (const long s : shape) n *= s;
    return n;
  }
};

struct Checkpoint {
  nlohmann::json meta;              // config snapshot, vocab, labels, provenance
  std::vector<TensorBlob> tensors;  // manifest order

  const TensorBlob* find(const std::string& name) const;
  const TensorBlob& require(const std::string& name) const;  // CheckpointError if absent
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Row-major copy helpers between Eigen (column-major) and blob storage.
template <class S>
TensorBlob to_blob(const std::string& name, const Mat<S>& m) {
  TensorBlob b;
  b.name = name;
  b.shape = {static_cast<long>(m.rows()), static_cast<long>(m.cols())};
  b.data.resize(static_cast<std::size_t>(m.size()));
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) b.data[k++] = static_cast<float>(m(r, c));
  }
  return b;
}

template <class S>
TensorBlob to_blob(const std::string& name, const Vec<S>& v) {
  TensorBlob b;
  b.name = name;
  b.shape = {static_cast<long>(v.size())};
  b.data.resize(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) b.data[static_cast<std::size_t>(i)] = static_cast<float>(v(i));
  return b;
}

template <class S>
Mat<S> blob_to_mat(const TensorBlob& b) {
  if (b.shape.size() != 2) throw ShapeError("tensor " + b.name + " is not 2-d");
  Mat<S> m(b.shape[0], b.shape[1]);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = static_cast<S>(b.data[k++]);
  }
  return m;
}

template <class S>
Vec<S> blob_to_vec(const TensorBlob& b) {
  if (b.shape.size() != 1) throw ShapeError("tensor " + b.name + " is not 1-d");
  Vec<S> v(b.shape[0]);
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = static_cast<S>(b.data[static_cast<std::size_t>(i)]);
  return v;
}

}  // namespace graphcoder
