#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace ctacl {

using Vec = std::vector<double>;

struct ZeroNormError : std::invalid_argument {
  ZeroNormError()
      : std::invalid_argument("cannot normalize a zero-norm vector") {}
};

struct DimensionError : std::invalid_argument {
  explicit DimensionError(const std::string& what)
      : std::invalid_argument(what) {}
};

/// Unit-norm embedding. Constructed through l2_normalize (or the encoder
/// head), which is what keeps the norm invariant true.
struct FeatureVec {
  Vec v;
  std::size_t dim() const { return v.size(); }
};

/// Discrete probability vector; entries positive, sums to one.
struct ProbVec {
  Vec p;
  std::size_t dim() const { return p.size(); }
};

inline bool all_finite(const Vec& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

inline double norm2(const Vec& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline FeatureVec l2_normalize(const Vec& v) {
  if (!all_finite(v)) {
    throw std::invalid_argument("l2_normalize: non-finite input");
  }
  const double n = norm2(v);
  if (n == 0.0) throw ZeroNormError{};
  FeatureVec out;
  out.v.resize(v.size());
  const double inv = 1.0 / n;
  for (std::size_t i = 0; i < v.size(); ++i) out.v[i] = v[i] * inv;
  return out;
}

/// Pullback of v -> v/|v|: strips the radial component of `upstream` and
/// scales by 1/|v|. Returns J^T * upstream.
inline Vec l2_normalize_jvp(const Vec& v, const Vec& upstream) {
  if (v.size() != upstream.size()) {
    throw DimensionError("l2_normalize_jvp: length mismatch");
  }
  const double n = norm2(v);
  if (n == 0.0) throw ZeroNormError{};
  const double inv = 1.0 / n;
  double radial = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) radial += v[i] * inv * upstream[i];
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = (upstream[i] - radial * v[i] * inv) * inv;
  }
  return out;
}

inline double dot(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw DimensionError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double dot(const FeatureVec& a, const FeatureVec& b) {
  return dot(a.v, b.v);
}

/// Max-shifted softmax; immune to overflow for any finite logits.
inline ProbVec stable_softmax(const Vec& logits) {
  if (logits.empty()) {
    throw std::invalid_argument("stable_softmax: empty logits");
  }
  if (!all_finite(logits)) {
    throw std::invalid_argument("stable_softmax: non-finite logits");
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  ProbVec out;
  out.p.resize(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out.p[i] = std::exp(logits[i] - mx);
    sum += out.p[i];
  }
  const double inv = 1.0 / sum;
  for (double& x : out.p) x *= inv;
  return out;
}

/// Indices of `scores` in descending score order; ties keep ascending
/// original index.
inline std::vector<std::size_t> argsort_desc(const Vec& scores) {
  if (!all_finite(scores)) {
    throw std::invalid_argument("argsort_desc: non-finite scores");
  }
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  return idx;
}

}  // namespace ctacl
