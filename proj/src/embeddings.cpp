#include "graphcoder/embeddings.hpp"

#include "graphcoder/checkpoint.hpp"

namespace graphcoder {

XProvider x_provider_from_string(const std::string& s) {
  if (s == "mean-token") return XProvider::MeanToken;
  if (s == "hash") return XProvider::Hash;
  if (s == "random") return XProvider::Random;
  if (s == "file") return XProvider::File;
  throw ConfigError("unknown x provider: " + s);
}

std::string to_string(XProvider p) {
  switch (p) {
    case XProvider::MeanToken: return "mean-token";
    case XProvider::Hash: return "hash";
    case XProvider::Random: return "random";
    case XProvider::File: return "file";
  }
  return "?";
}

MatD hash_embeddings(const LabelSpace& labels, int m, std::uint64_t seed) {
  if (m < 1) throw ConfigError("x dimension must be positive");
  MatD x(labels.n(), m);
  for (int l = 0; l < labels.n(); ++l) {
    Rng rng(derive_seed(seed, labels.label(l).definition));
    for (int c = 0; c < m; ++c) x(l, c) = rng.gaussian();
    const double norm = x.row(l).norm();
    if (norm > 0) x.row(l) /= norm;
  }
  return x;
}

MatD random_embeddings(const LabelSpace& labels, int m, std::uint64_t seed) {
  if (m < 1) throw ConfigError("x dimension must be positive");
  MatD x(labels.n(), m);
  Rng rng(derive_seed(seed, "x-random"));
  const double sd = 1.0 / std::sqrt(static_cast<double>(m));
  for (int l = 0; l < labels.n(); ++l) {
    for (int c = 0; c < m; ++c) x(l, c) = sd * rng.gaussian();
  }
  return x;
}

MatD file_embeddings(const std::string& path, int n, int m) {
  const Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.tensors.size() != 1) {
    throw ShapeError("embedding container must hold exactly one tensor, found " +
                     std::to_string(ckpt.tensors.size()));
  }
  const TensorBlob& t = ckpt.tensors.front();
  if (t.shape.size() != 2 || t.shape[0] != n || t.shape[1] != m) {
    throw ShapeError("embedding tensor " + t.name + " has the wrong shape (want " +
                     std::to_string(n) + " x " + std::to_string(m) + ")");
  }
  return blob_to_mat<double>(t);
}

std::vector<std::vector<int>> definition_token_ids(const LabelSpace& labels, const Vocab& vocab) {
  std::vector<std::vector<int>> ids(static_cast<std::size_t>(labels.n()));
  for (int l = 0; l < labels.n(); ++l) {
    const auto toks = preprocess(labels.label(l).definition, 64);
    for (const auto& t : toks) ids[static_cast<std::size_t>(l)].push_back(vocab.lookup(t));
  }
  return ids;
}

}  // namespace graphcoder
