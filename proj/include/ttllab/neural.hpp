#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "ttllab/rng.hpp"

namespace ttllab {

/// Dense feed-forward network parameters stored as one flat array.
/// Layer l maps dims[l] -> dims[l+1]; its weights are row-major
/// (dims[l+1] x dims[l]) followed by dims[l+1] biases.
struct MlpParams {
  std::vector<std::size_t> dims;
  std::vector<double> data;

  MlpParams() = default;
  explicit MlpParams(std::vector<std::size_t> layer_dims) : dims(std::move(layer_dims)) {
    if (dims.size() < 2) throw std::invalid_argument("mlp: need at least input and output dims");
    for (std::size_t d : dims)
      if (d == 0) throw std::invalid_argument("mlp: zero-width layer");
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) n += dims[l + 1] * dims[l] + dims[l + 1];
    data.assign(n, 0.0);
  }

  std::size_t layers() const { return dims.size() - 1; }
  std::size_t input_dim() const { return dims.front(); }
  std::size_t output_dim() const { return dims.back(); }
  std::size_t size() const { return data.size(); }

  std::size_t weight_offset(std::size_t layer) const {
    std::size_t off = 0;
    for (std::size_t l = 0; l < layer; ++l) off += dims[l + 1] * dims[l] + dims[l + 1];
    return off;
  }
  std::size_t bias_offset(std::size_t layer) const { return weight_offset(layer) + dims[layer + 1] * dims[layer]; }

  double& weight(std::size_t layer, std::size_t row, std::size_t col) {
    return data[weight_offset(layer) + row * dims[layer] + col];
  }
  double& bias(std::size_t layer, std::size_t row) { return data[bias_offset(layer) + row]; }

  MlpParams zeros_like() const {
    MlpParams z = *this;
    std::fill(z.data.begin(), z.data.end(), 0.0);
    return z;
  }

  bool finite() const {
    return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
  }
};

/// Glorot-uniform weights, zero biases.
inline MlpParams init_mlp(std::vector<std::size_t> dims, Rng& rng) {
  MlpParams p(std::move(dims));
  for (std::size_t l = 0; l < p.layers(); ++l) {
    const double limit = std::sqrt(6.0 / static_cast<double>(p.dims[l] + p.dims[l + 1]));
    const std::size_t off = p.weight_offset(l);
    for (std::size_t i = 0; i < p.dims[l + 1] * p.dims[l]; ++i) p.data[off + i] = rng.uniform(-limit, limit);
  }
  return p;
}

/// Post-activation values of every layer, input first, output last.
struct Activations {
  std::vector<std::vector<double>> values;
  std::span<const double> output() const { return values.back(); }
};

/// Affine layers with ReLU on every hidden layer and a linear output.
inline Activations forward(const MlpParams& p, std::span<const double> x) {
  if (x.size() != p.input_dim()) throw std::invalid_argument("mlp forward: input dimension mismatch");
  Activations acts;
  acts.values.reserve(p.dims.size());
  acts.values.emplace_back(x.begin(), x.end());
  for (std::size_t l = 0; l < p.layers(); ++l) {
    const std::size_t in = p.dims[l];
    const std::size_t out = p.dims[l + 1];
    const double* w = p.data.data() + p.weight_offset(l);
    const double* b = p.data.data() + p.bias_offset(l);
    const std::vector<double>& prev = acts.values.back();
    std::vector<double> next(out);
    const bool hidden = l + 1 < p.layers();
    for (std::size_t r = 0; r < out; ++r) {
      double z = b[r];
      for (std::size_t c = 0; c < in; ++c) z += w[r * in + c] * prev[c];
      next[r] = hidden ? std::max(z, 0.0) : z;
    }
    acts.values.push_back(std::move(next));
  }
  return acts;
}

/// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(output).
inline void backward_accumulate(const MlpParams& p, const Activations& acts, std::span<const double> output_grad,
                                MlpParams& grads) {
  if (output_grad.size() != p.output_dim()) throw std::invalid_argument("mlp backward: output gradient mismatch");
  std::vector<double> delta(output_grad.begin(), output_grad.end());
  for (std::size_t l = p.layers(); l-- > 0;) {
    const std::size_t in = p.dims[l];
    const std::size_t out = p.dims[l + 1];
    const std::vector<double>& prev = acts.values[l];
    double* gw = grads.data.data() + p.weight_offset(l);
    double* gb = grads.data.data() + p.bias_offset(l);
    for (std::size_t r = 0; r < out; ++r) {
      if (delta[r] == 0.0) continue;
      gb[r] += delta[r];
      for (std::size_t c = 0; c < in; ++c) gw[r * in + c] += delta[r] * prev[c];
    }
    if (l == 0) break;
    const double* w = p.data.data() + p.weight_offset(l);
    std::vector<double> below(in, 0.0);
    for (std::size_t r = 0; r < out; ++r)
      for (std::size_t c = 0; c < in; ++c) below[c] += w[r * in + c] * delta[r];
    // ReLU derivative, taken as 0 at the kink.
    for (std::size_t c = 0; c < in; ++c)
      if (prev[c] <= 0.0) below[c] = 0.0;
    delta = std::move(below);
  }
}

inline MlpParams backward(const MlpParams& p, const Activations& acts, std::span<const double> output_grad) {
  MlpParams grads = p.zeros_like();
  backward_accumulate(p, acts, output_grad, grads);
  return grads;
}

enum class ClipMode { Element, GlobalNorm };

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

/// Clips the gradient (element-wise to [-clip, clip], or by global L2 norm),
/// then applies one bias-corrected Adam update.
inline void adam_step(MlpParams& params, const MlpParams& grads, AdamState& state, double lr, double clip,
                      ClipMode mode = ClipMode::Element) {
  const std::size_t n = params.size();
  if (grads.size() != n) throw std::invalid_argument("adam: gradient shape mismatch");
  if (state.m.size() != n) {
    state.m.assign(n, 0.0);
    state.v.assign(n, 0.0);
    state.step = 0;
  }

  double scale = 1.0;
  if (mode == ClipMode::GlobalNorm && std::isfinite(clip)) {
    double sq = 0.0;
    for (double g : grads.data) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > clip) scale = clip / norm;
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < n; ++i) {
    double g = grads.data[i] * scale;
    if (mode == ClipMode::Element) g = std::clamp(g, -clip, clip);
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    // With beta = 0 the correction terms are exactly 1.
    const double m_hat = c1 > 0.0 ? state.m[i] / c1 : state.m[i];
    const double v_hat = c2 > 0.0 ? state.v[i] / c2 : state.v[i];
    params.data[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
  }
}

namespace detail {
template <class T>
void put_le(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}
template <class T>
T get_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw std::runtime_error("snapshot: truncated input");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}
}  // namespace detail

/// Snapshot layout: u32 dim count, u32 dims, then every parameter as a
/// little-endian f64 in flat order.
inline void write_snapshot(std::ostream& out, const MlpParams& p) {
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.dims.size()));
  for (std::size_t d : p.dims) detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  for (double v : p.data) detail::put_le<double>(out, v);
}

inline MlpParams read_snapshot(std::istream& in) {
  const auto count = detail::get_le<std::uint32_t>(in);
  if (count < 2 || count > 64) throw std::runtime_error("snapshot: bad layer count");
  std::vector<std::size_t> dims(count);
  for (auto& d : dims) d = detail::get_le<std::uint32_t>(in);
  MlpParams p(dims);
  for (double& v : p.data) v = detail::get_le<double>(in);
  return p;
}

}  // namespace ttllab
