#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ctacl/dataset.hpp"
#include "ctacl/rng.hpp"
#include "ctacl/vecmath.hpp"

namespace ctacl {

/// Fully connected encoder: tanh hidden layers, affine output, and an L2
/// normalization head, so every embedding leaves at unit norm. Weights are
/// row-major (one row per output unit); vW/vb are the matching momentum
/// buffers and travel with the parameters into checkpoints.
struct EncoderParams {
  std::vector<std::size_t> dims;  // [d_in, hidden..., d_out]
  std::vector<Vec> W;
  std::vector<Vec> b;
  std::vector<Vec> vW;
  std::vector<Vec> vb;

  std::size_t n_layers() const { return W.size(); }
  std::size_t d_in() const { return dims.front(); }
  std::size_t d_out() const { return dims.back(); }
};

struct EncoderGrads {
  std::vector<Vec> gW;
  std::vector<Vec> gb;
};

/// Post-activation value of every layer, kept for the backward pass.
/// acts[0] is the input; acts.back() is the pre-normalization output.
struct ForwardCache {
  std::vector<Vec> acts;
  FeatureVec normalized;
};

inline EncoderParams encoder_init(const std::vector<std::size_t>& dims,
                                  std::uint64_t root_seed) {
  if (dims.size() < 2) {
    throw std::invalid_argument("encoder_init: need at least input and output dims");
  }
  for (std::size_t d : dims) {
    if (d == 0) throw std::invalid_argument("encoder_init: zero-width layer");
  }
  Rng rng = Rng::stream(root_seed, "init");
  EncoderParams p;
  p.dims = dims;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::size_t fan_in = dims[l];
    const std::size_t fan_out = dims[l + 1];
    const double std_dev =
        std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
    Vec w(fan_out * fan_in);
    for (double& x : w) x = std_dev * rng.gaussian();
    p.W.push_back(std::move(w));
    p.b.push_back(Vec(fan_out, 0.0));
    p.vW.push_back(Vec(fan_out * fan_in, 0.0));
    p.vb.push_back(Vec(fan_out, 0.0));
  }
  return p;
}

inline FeatureVec encoder_forward(const EncoderParams& p, const Vec& x,
                                  ForwardCache* cache = nullptr) {
  if (x.size() != p.d_in()) {
    throw DimensionError("encoder_forward: input dimension mismatch");
  }
  if (cache != nullptr) {
    cache->acts.clear();
    cache->acts.push_back(x);
  }
  Vec a = x;
  for (std::size_t l = 0; l < p.n_layers(); ++l) {
    const std::size_t in = p.dims[l];
    const std::size_t out = p.dims[l + 1];
    Vec nxt(out);
    for (std::size_t r = 0; r < out; ++r) {
      double s = p.b[l][r];
      const double* row = p.W[l].data() + r * in;
      for (std::size_t c = 0; c < in; ++c) s += row[c] * a[c];
      nxt[r] = s;
    }
    const bool last = (l + 1 == p.n_layers());
    if (!last) {
      for (double& v : nxt) v = std::tanh(v);
    }
    if (!all_finite(nxt)) {
      throw std::runtime_error("encoder_forward: non-finite activation at layer " +
                               std::to_string(l));
    }
    a = std::move(nxt);
    if (cache != nullptr) cache->acts.push_back(a);
  }
  FeatureVec z = l2_normalize(a);
  if (cache != nullptr) cache->normalized = z;
  return z;
}

/// Pulls grad_z back through the normalization head and every layer.
/// The cache must come from a forward pass through these parameters.
inline EncoderGrads encoder_backward(const EncoderParams& p,
                                     const ForwardCache& cache,
                                     const Vec& grad_z) {
  if (cache.acts.size() != p.n_layers() + 1) {
    throw std::invalid_argument("encoder_backward: cache does not match encoder");
  }
  for (std::size_t l = 0; l <= p.n_layers(); ++l) {
    if (cache.acts[l].size() != p.dims[l]) {
      throw std::invalid_argument("encoder_backward: cache does not match encoder");
    }
  }
  if (grad_z.size() != p.d_out()) {
    throw DimensionError("encoder_backward: gradient dimension mismatch");
  }

  EncoderGrads g;
  g.gW.resize(p.n_layers());
  g.gb.resize(p.n_layers());

  Vec delta = l2_normalize_jvp(cache.acts.back(), grad_z);
  for (std::size_t li = p.n_layers(); li-- > 0;) {
    const std::size_t in = p.dims[li];
    const std::size_t out = p.dims[li + 1];
    const bool last = (li + 1 == p.n_layers());
    if (!last) {
      // delta arrives w.r.t. tanh output; cached activation is that output
      const Vec& act = cache.acts[li + 1];
      for (std::size_t r = 0; r < out; ++r) {
        delta[r] *= 1.0 - act[r] * act[r];
      }
    }
    const Vec& prev = cache.acts[li];
    Vec& gw = g.gW[li];
    gw.assign(out * in, 0.0);
    for (std::size_t r = 0; r < out; ++r) {
      double* row = gw.data() + r * in;
      for (std::size_t c = 0; c < in; ++c) row[c] = delta[r] * prev[c];
    }
    g.gb[li] = delta;
    if (li > 0) {
      Vec down(in, 0.0);
      for (std::size_t r = 0; r < out; ++r) {
        const double* row = p.W[li].data() + r * in;
        for (std::size_t c = 0; c < in; ++c) down[c] += row[c] * delta[r];
      }
      delta = std::move(down);
    }
  }
  return g;
}

inline void accumulate(EncoderGrads& into, const EncoderGrads& from) {
  if (into.gW.empty()) {
    into = from;
    return;
  }
  if (into.gW.size() != from.gW.size()) {
    throw std::invalid_argument("accumulate: gradient shape mismatch");
  }
  for (std::size_t l = 0; l < into.gW.size(); ++l) {
    if (into.gW[l].size() != from.gW[l].size() ||
        into.gb[l].size() != from.gb[l].size()) {
      throw std::invalid_argument("accumulate: gradient shape mismatch");
    }
    for (std::size_t i = 0; i < into.gW[l].size(); ++i) {
      into.gW[l][i] += from.gW[l][i];
    }
    for (std::size_t i = 0; i < into.gb[l].size(); ++i) {
      into.gb[l][i] += from.gb[l][i];
    }
  }
}

inline void scale(EncoderGrads& g, double s) {
  for (Vec& w : g.gW) {
    for (double& x : w) x *= s;
  }
  for (Vec& b : g.gb) {
    for (double& x : b) x *= s;
  }
}

/// Classical momentum: buffer <- momentum * buffer + grad,
/// param <- param - lr * buffer.
inline void sgd_step(EncoderParams& p, const EncoderGrads& g, double lr,
                     double momentum) {
  if (g.gW.size() != p.n_layers()) {
    throw std::invalid_argument("sgd_step: gradient shape mismatch");
  }
  for (std::size_t l = 0; l < p.n_layers(); ++l) {
    if (g.gW[l].size() != p.W[l].size() || g.gb[l].size() != p.b[l].size()) {
      throw std::invalid_argument("sgd_step: gradient shape mismatch");
    }
    for (std::size_t i = 0; i < p.W[l].size(); ++i) {
      p.vW[l][i] = momentum * p.vW[l][i] + g.gW[l][i];
      p.W[l][i] -= lr * p.vW[l][i];
    }
    for (std::size_t i = 0; i < p.b[l].size(); ++i) {
      p.vb[l][i] = momentum * p.vb[l][i] + g.gb[l][i];
      p.b[l][i] -= lr * p.vb[l][i];
    }
  }
}

struct OptimConfig {
  double base_lr = 0.1;
  double momentum = 0.9;
  double decay_factor = 0.1;
  std::size_t decay_every = 10;
  std::size_t epochs = 50;
  std::size_t batch_size = 256;
};

inline void check(const OptimConfig& c) {
  if (!(c.base_lr > 0.0)) throw std::invalid_argument("optim: base_lr must be > 0");
  if (c.momentum < 0.0 || c.momentum >= 1.0) {
    throw std::invalid_argument("optim: momentum must be in [0, 1)");
  }
  if (!(c.decay_factor > 0.0 && c.decay_factor <= 1.0)) {
    throw std::invalid_argument("optim: decay_factor must be in (0, 1]");
  }
  if (c.decay_every == 0) throw std::invalid_argument("optim: decay_every must be > 0");
  if (c.epochs == 0) throw std::invalid_argument("optim: epochs must be > 0");
  if (c.batch_size < 2) {
    throw std::invalid_argument("optim: batch_size must be >= 2");
  }
}

/// Stepwise decay on 0-based epochs: base_lr * decay_factor^(epoch / decay_every).
inline double lr_at(std::size_t epoch, const OptimConfig& c) {
  double lr = c.base_lr;
  for (std::size_t i = 0; i < epoch / c.decay_every; ++i) lr *= c.decay_factor;
  return lr;
}

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

struct Checkpoint {
  EncoderParams params;
  std::uint32_t epochs_completed = 0;
  std::array<std::uint64_t, 4> rng_state{};
};

inline void write_checkpoint(std::ostream& os, const Checkpoint& ck) {
  io::put_magic(os, "CTCK");
  io::put_u32(os, kCheckpointFormatVersion);
  io::put_u32(os, ck.epochs_completed);
  for (std::uint64_t w : ck.rng_state) io::put_u64(os, w);
  const EncoderParams& p = ck.params;
  io::put_u32(os, static_cast<std::uint32_t>(p.dims.size()));
  for (std::size_t d : p.dims) io::put_u32(os, static_cast<std::uint32_t>(d));
  for (std::size_t l = 0; l < p.n_layers(); ++l) {
    for (double x : p.W[l]) io::put_f64(os, x);
    for (double x : p.b[l]) io::put_f64(os, x);
    for (double x : p.vW[l]) io::put_f64(os, x);
    for (double x : p.vb[l]) io::put_f64(os, x);
  }
}

inline Checkpoint read_checkpoint(std::istream& is) {
  io::expect_magic(is, "CTCK", "checkpoint");
  const std::uint32_t version = io::get_u32(is);
  if (version != kCheckpointFormatVersion) {
    throw IntegrityError("checkpoint: unsupported format version " +
                         std::to_string(version));
  }
  Checkpoint ck;
  ck.epochs_completed = io::get_u32(is);
  for (std::uint64_t& w : ck.rng_state) w = io::get_u64(is);
  const std::uint32_t nd = io::get_u32(is);
  if (nd < 2) throw IntegrityError("checkpoint: malformed dims");
  ck.params.dims.resize(nd);
  for (std::size_t& d : ck.params.dims) {
    d = io::get_u32(is);
    if (d == 0) throw IntegrityError("checkpoint: zero-width layer");
  }
  EncoderParams& p = ck.params;
  for (std::size_t l = 0; l + 1 < nd; ++l) {
    const std::size_t in = p.dims[l];
    const std::size_t out = p.dims[l + 1];
    Vec w(out * in), b(out), vw(out * in), vb(out);
    for (double& x : w) x = io::get_f64(is);
    for (double& x : b) x = io::get_f64(is);
    for (double& x : vw) x = io::get_f64(is);
    for (double& x : vb) x = io::get_f64(is);
    p.W.push_back(std::move(w));
    p.b.push_back(std::move(b));
    p.vW.push_back(std::move(vw));
    p.vb.push_back(std::move(vb));
  }
  if (!is.good()) throw IntegrityError("checkpoint: truncated stream");
  return ck;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  write_checkpoint(f, ck);
  if (!f.good()) throw std::runtime_error("write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for read: " + path);
  return read_checkpoint(f);
}

}  // namespace ctacl
