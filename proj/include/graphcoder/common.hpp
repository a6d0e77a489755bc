// Shared scalar/matrix aliases, error taxonomy, and deterministic RNG.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace graphcoder {

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using MatR = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using MatD = Mat<double>;
using VecD = Vec<double>;
using MatF = Mat<float>;
using VecF = Vec<float>;

// ---------------------------------------------------------------------------
// Errors. One type per failure class so callers can map them to exit codes.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EmptyDocumentError : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct UnknownLabelError : Error { using Error::Error; };
struct SplitError : Error { using Error::Error; };
struct UnseenLabelError : Error { using Error::Error; };
struct ZeroDegreeError : Error { using Error::Error; };
struct ShapeError : Error { using Error::Error; };
struct PatternError : Error { using Error::Error; };
struct VocabError : Error { using Error::Error; };
struct StateError : Error { using Error::Error; };
struct MaskError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct CheckpointError : Error { using Error::Error; };
struct NonFiniteGradientError : Error { using Error::Error; };
struct TrainingDivergedError : Error { using Error::Error; };
struct MetricUndefinedError : Error { using Error::Error; };

// ---------------------------------------------------------------------------
// Deterministic RNG. mt19937_64 is bit-specified by the standard; the
// distributions are hand-rolled because the std distribution templates are
// implementation-defined and would break cross-toolchain reproducibility.
// ---------------------------------------------------------------------------

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t bits() { return eng_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; caches the second draw of each pair.
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = uniform();  // (0,1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  // Unbiased integer in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw ConfigError("Rng::below: n must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = eng_();
    while (x >= limit) x = eng_();
    return x % n;
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Derives an independent stream seed from a master seed and a tag, so that
// init/shuffle/pattern streams do not interact.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag) {
  // FNV-1a over the tag, mixed with the master via splitmix64 finalizers.
  std::uint64_t h = 1469598103934665603ull;
  for (const char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  std::uint64_t z = master + 0x9e3779b97f4a7c15ull + h;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline bool all_finite(const Eigen::Ref<const MatD>& m) {
  return m.allFinite();
}

// In-place row-wise softmax with max-shift stabilization.
template <class S>
void softmax_rows(Mat<S>& m) {
  const Vec<S> mx = m.rowwise().maxCoeff();
  m = (m.colwise() - mx).array().exp().matrix();
  const Vec<S> sums = m.rowwise().sum();
  m.array().colwise() /= sums.array();
}

}  // namespace graphcoder
