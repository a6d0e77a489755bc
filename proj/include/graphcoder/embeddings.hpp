// Definition-embedding providers for the label matrix X.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "graphcoder/common.hpp"
#include "graphcoder/corpus.hpp"

namespace graphcoder {

enum class XProvider { MeanToken, Hash, Random, File };

XProvider x_provider_from_string(const std::string& s);
std::string to_string(XProvider p);

// Deterministic unit-norm pseudo-random row keyed on the definition text.
MatD hash_embeddings(const LabelSpace& labels, int m, std::uint64_t seed);

// Seeded Gaussian rows, sd 1/sqrt(m) so row norms are comparable to the
// hash provider's unit rows.
MatD random_embeddings(const LabelSpace& labels, int m, std::uint64_t seed);

// Loads X from a tensor container holding exactly one tensor of shape (n, m).
MatD file_embeddings(const std::string& path, int n, int m);

// Definition token ids, one list per label, used by the mean-token provider.
// Definitions run through the same preprocessing as document text.
std::vector<std::vector<int>> definition_token_ids(const LabelSpace& labels, const Vocab& vocab);

// X row l = mean of the token-embedding rows for definition l's tokens. Ties
// X to the trainable token embeddings; see mean_token_backward.
template <class S>
Mat<S> mean_token_embeddings(const Mat<S>& token_emb,
                             const std::vector<std::vector<int>>& def_ids) {
  const int n = static_cast<int>(def_ids.size());
  Mat<S> x = Mat<S>::Zero(n, token_emb.cols());
  for (int l = 0; l < n; ++l) {
    const auto& ids = def_ids[static_cast<std::size_t>(l)];
    if (ids.empty()) throw EmptyDocumentError("definition " + std::to_string(l) + " has no tokens");
    for (const int id : ids) x.row(l) += token_emb.row(id);
    x.row(l) /= static_cast<S>(ids.size());
  }
  return x;
}

template <class S>
void mean_token_backward(const Mat<S>& dx,
                         const std::vector<std::vector<int>>& def_ids,
                         Mat<S>& d_token_emb) {
  for (int l = 0; l < static_cast<int>(def_ids.size()); ++l) {
    const auto& ids = def_ids[static_cast<std::size_t>(l)];
    const S scale = S(1) / static_cast<S>(ids.size());
    for (const int id : ids) d_token_emb.row(id) += dx.row(l) * scale;
  }
}

}  // namespace graphcoder
