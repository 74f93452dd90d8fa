#pragma once

// Layer stack over a flat parameter vector with hand-written backward
// passes. Activations are channel-major: value (c, t) lives at c * T + t.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "emgmoe/error.hpp"
#include "emgmoe/format.hpp"

namespace emgmoe::nn {

struct Shape {
  std::size_t channels = 1;
  std::size_t length = 1;
  std::size_t size() const { return channels * length; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

inline std::string to_string(const Shape& s) {
  return "(" + std::to_string(s.channels) + "x" + std::to_string(s.length) + ")";
}

enum class LayerKind { Conv1D, Dense, Recurrent, ReLU, Tanh, GlobalAvgPool, Softmax };

/// Layer description. Conv1D uses "same" padding of (kernel-1)/2 on the
/// left, so the output length is ceil(T / stride).
///
/// Dense(in, out) applies per timestep when `in` equals the incoming
/// channel count, and to the flattened activation when `in` equals
/// channels * length (output shape (out x 1)).
struct LayerSpec {
  LayerKind kind = LayerKind::ReLU;
  std::size_t kernel = 0;
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t stride = 1;
  std::size_t hidden = 0;

  static LayerSpec conv1d(std::size_t kernel, std::size_t in, std::size_t out, std::size_t stride = 1) {
    return {LayerKind::Conv1D, kernel, in, out, stride, 0};
  }
  static LayerSpec dense(std::size_t in, std::size_t out) { return {LayerKind::Dense, 0, in, out, 1, 0}; }
  static LayerSpec recurrent(std::size_t hidden) { return {LayerKind::Recurrent, 0, 0, 0, 1, hidden}; }
  static LayerSpec relu() { return {LayerKind::ReLU}; }
  static LayerSpec tanh() { return {LayerKind::Tanh}; }
  static LayerSpec global_avg_pool() { return {LayerKind::GlobalAvgPool}; }
  static LayerSpec softmax() { return {LayerKind::Softmax}; }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Text form, e.g. "conv1d 7 1 16 1" (kernel in out stride), "dense 512 512",
/// "recurrent 32", "relu".
inline std::string to_string(const LayerSpec& l) {
  switch (l.kind) {
    case LayerKind::Conv1D:
      return "conv1d " + std::to_string(l.kernel) + " " + std::to_string(l.in) + " " + std::to_string(l.out) + " " +
             std::to_string(l.stride);
    case LayerKind::Dense: return "dense " + std::to_string(l.in) + " " + std::to_string(l.out);
    case LayerKind::Recurrent: return "recurrent " + std::to_string(l.hidden);
    case LayerKind::ReLU: return "relu";
    case LayerKind::Tanh: return "tanh";
    case LayerKind::GlobalAvgPool: return "global_avg_pool";
    case LayerKind::Softmax: return "softmax";
  }
  return "?";
}

inline LayerSpec parse_layer(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string name;
  in >> name;
  std::vector<std::size_t> args;
  long long v = 0;
  while (in >> v) {
    if (v <= 0) fail(ErrorKind::Format, "layer arguments must be positive in '" + std::string(text) + "'");
    args.push_back(static_cast<std::size_t>(v));
  }
  if (!in.eof()) fail(ErrorKind::Format, "bad layer description '" + std::string(text) + "'");
  auto expect = [&](std::size_t n) {
    if (args.size() != n) fail(ErrorKind::Format, "wrong argument count in '" + std::string(text) + "'");
  };
  if (name == "conv1d") {
    if (args.size() == 3) args.push_back(1);
    expect(4);
    return LayerSpec::conv1d(args[0], args[1], args[2], args[3]);
  }
  if (name == "dense") {
    expect(2);
    return LayerSpec::dense(args[0], args[1]);
  }
  if (name == "recurrent") {
    expect(1);
    return LayerSpec::recurrent(args[0]);
  }
  expect(0);
  if (name == "relu") return LayerSpec::relu();
  if (name == "tanh") return LayerSpec::tanh();
  if (name == "global_avg_pool") return LayerSpec::global_avg_pool();
  if (name == "softmax") return LayerSpec::softmax();
  fail(ErrorKind::Format, "unknown layer kind '" + name + "'");
}

struct LayerPlan {
  LayerSpec spec;
  Shape in;
  Shape out;
  std::size_t param_offset = 0;
  std::size_t param_count = 0;
  std::size_t fan_in = 1;
};

/// Cached activations from one forward pass; acts[0] is the input and
/// acts[i + 1] the output of layer i.
struct Trace {
  std::vector<std::vector<double>> acts;
  std::vector<double> grad_a;
  std::vector<double> grad_b;
};

namespace detail {

inline void conv_forward(const LayerPlan& p, const double* w, const double* x, double* y) {
  const std::size_t C = p.in.channels, T = p.in.length, O = p.out.channels, To = p.out.length;
  const std::size_t K = p.spec.kernel, S = p.spec.stride;
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>((K - 1) / 2);
  const double* b = w + O * C * K;
  for (std::size_t o = 0; o < O; ++o) {
    double* yo = y + o * To;
    std::fill(yo, yo + To, b[o]);
    for (std::size_t c = 0; c < C; ++c) {
      const double* xc = x + c * T;
      for (std::size_t j = 0; j < K; ++j) {
        const double wv = w[(o * C + c) * K + j];
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - pad;
        // valid t: 0 <= t*S + shift < T
        std::size_t t0 = 0;
        if (shift < 0) t0 = static_cast<std::size_t>((-shift + static_cast<std::ptrdiff_t>(S) - 1) / static_cast<std::ptrdiff_t>(S));
        const std::ptrdiff_t last = static_cast<std::ptrdiff_t>(T) - 1 - shift;
        if (last < 0) continue;
        const std::size_t t1 = std::min(To, static_cast<std::size_t>(last) / S + 1);
        if (S == 1) {
          for (std::size_t t = t0; t < t1; ++t) yo[t] += wv * xc[static_cast<std::ptrdiff_t>(t) + shift];
        } else {
          for (std::size_t t = t0; t < t1; ++t) yo[t] += wv * xc[static_cast<std::ptrdiff_t>(t * S) + shift];
        }
      }
    }
  }
}

inline void conv_backward(const LayerPlan& p, const double* w, const double* x, const double* gy, double* gw,
                          double* gx) {
  const std::size_t C = p.in.channels, T = p.in.length, O = p.out.channels, To = p.out.length;
  const std::size_t K = p.spec.kernel, S = p.spec.stride;
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>((K - 1) / 2);
  double* gb = gw + O * C * K;
  for (std::size_t o = 0; o < O; ++o) {
    const double* go = gy + o * To;
    double acc = 0.0;
    for (std::size_t t = 0; t < To; ++t) acc += go[t];
    gb[o] += acc;
    for (std::size_t c = 0; c < C; ++c) {
      const double* xc = x + c * T;
      double* gxc = gx ? gx + c * T : nullptr;
      for (std::size_t j = 0; j < K; ++j) {
        const std::size_t wi = (o * C + c) * K + j;
        const double wv = w[wi];
        const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - pad;
        std::size_t t0 = 0;
        if (shift < 0) t0 = static_cast<std::size_t>((-shift + static_cast<std::ptrdiff_t>(S) - 1) / static_cast<std::ptrdiff_t>(S));
        const std::ptrdiff_t last = static_cast<std::ptrdiff_t>(T) - 1 - shift;
        if (last < 0) continue;
        const std::size_t t1 = std::min(To, static_cast<std::size_t>(last) / S + 1);
        double gacc = 0.0;
        if (S == 1) {
          for (std::size_t t = t0; t < t1; ++t) gacc += go[t] * xc[static_cast<std::ptrdiff_t>(t) + shift];
          if (gxc) {
            for (std::size_t t = t0; t < t1; ++t) gxc[static_cast<std::ptrdiff_t>(t) + shift] += wv * go[t];
          }
        } else {
          for (std::size_t t = t0; t < t1; ++t) {
            const std::ptrdiff_t xi = static_cast<std::ptrdiff_t>(t * S) + shift;
            gacc += go[t] * xc[xi];
            if (gxc) gxc[xi] += wv * go[t];
          }
        }
        gw[wi] += gacc;
      }
    }
  }
}

// Dense over (I x T) laid out channel-major; flatten mode is T == 1 with
// I = channels * length.
inline void dense_forward(std::size_t I, std::size_t O, std::size_t T, const double* w, const double* x, double* y) {
  const double* b = w + O * I;
  for (std::size_t o = 0; o < O; ++o) {
    double* yo = y + o * T;
    if (T == 1) {
      const double* wo = w + o * I;
      double acc = b[o];
      for (std::size_t i = 0; i < I; ++i) acc += wo[i] * x[i];
      yo[0] = acc;
      continue;
    }
    std::fill(yo, yo + T, b[o]);
    for (std::size_t i = 0; i < I; ++i) {
      const double wv = w[o * I + i];
      const double* xi = x + i * T;
      for (std::size_t t = 0; t < T; ++t) yo[t] += wv * xi[t];
    }
  }
}

inline void dense_backward(std::size_t I, std::size_t O, std::size_t T, const double* w, const double* x,
                           const double* gy, double* gw, double* gx) {
  double* gb = gw + O * I;
  for (std::size_t o = 0; o < O; ++o) {
    const double* go = gy + o * T;
    if (T == 1) {
      const double g = go[0];
      gb[o] += g;
      double* gwo = gw + o * I;
      const double* wo = w + o * I;
      for (std::size_t i = 0; i < I; ++i) gwo[i] += g * x[i];
      if (gx) {
        for (std::size_t i = 0; i < I; ++i) gx[i] += g * wo[i];
      }
      continue;
    }
    double acc = 0.0;
    for (std::size_t t = 0; t < T; ++t) acc += go[t];
    gb[o] += acc;
    for (std::size_t i = 0; i < I; ++i) {
      const double* xi = x + i * T;
      double ga = 0.0;
      for (std::size_t t = 0; t < T; ++t) ga += go[t] * xi[t];
      gw[o * I + i] += ga;
      if (gx) {
        const double wv = w[o * I + i];
        double* gxi = gx + i * T;
        for (std::size_t t = 0; t < T; ++t) gxi[t] += wv * go[t];
      }
    }
  }
}

// Elman cell: h_t = tanh(Wx x_t + Wh h_{t-1} + b), h_{-1} = 0.
// Parameter layout: Wx (H x C), Wh (H x H), b (H).
inline void recurrent_forward(const LayerPlan& p, const double* w, const double* x, double* y) {
  const std::size_t C = p.in.channels, T = p.in.length, H = p.spec.hidden;
  const double* wx = w;
  const double* wh = w + H * C;
  const double* b = wh + H * H;
  std::vector<double> prev(H, 0.0), cur(H), xt(C);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t c = 0; c < C; ++c) xt[c] = x[c * T + t];
    for (std::size_t j = 0; j < H; ++j) {
      double a = b[j];
      const double* wxj = wx + j * C;
      for (std::size_t c = 0; c < C; ++c) a += wxj[c] * xt[c];
      const double* whj = wh + j * H;
      for (std::size_t k = 0; k < H; ++k) a += whj[k] * prev[k];
      cur[j] = std::tanh(a);
    }
    for (std::size_t j = 0; j < H; ++j) y[j * T + t] = cur[j];
    prev.swap(cur);
  }
}

inline void recurrent_backward(const LayerPlan& p, const double* w, const double* x, const double* y,
                               const double* gy, double* gw, double* gx) {
  const std::size_t C = p.in.channels, T = p.in.length, H = p.spec.hidden;
  const double* wx = w;
  const double* wh = w + H * C;
  double* gwx = gw;
  double* gwh = gw + H * C;
  double* gb = gwh + H * H;
  std::vector<double> dh_next(H, 0.0), da(H), ht(H), hprev(H), xt(C);
  for (std::size_t tt = T; tt-- > 0;) {
    for (std::size_t j = 0; j < H; ++j) {
      ht[j] = y[j * T + tt];
      hprev[j] = tt > 0 ? y[j * T + tt - 1] : 0.0;
    }
    for (std::size_t c = 0; c < C; ++c) xt[c] = x[c * T + tt];
    for (std::size_t j = 0; j < H; ++j) {
      const double dh = gy[j * T + tt] + dh_next[j];
      da[j] = dh * (1.0 - ht[j] * ht[j]);
    }
    std::fill(dh_next.begin(), dh_next.end(), 0.0);
    for (std::size_t j = 0; j < H; ++j) {
      const double d = da[j];
      gb[j] += d;
      double* gwxj = gwx + j * C;
      for (std::size_t c = 0; c < C; ++c) gwxj[c] += d * xt[c];
      double* gwhj = gwh + j * H;
      const double* whj = wh + j * H;
      for (std::size_t k = 0; k < H; ++k) {
        gwhj[k] += d * hprev[k];
        dh_next[k] += d * whj[k];
      }
      if (gx) {
        const double* wxj = wx + j * C;
        for (std::size_t c = 0; c < C; ++c) gx[c * T + tt] += d * wxj[c];
      }
    }
  }
}

inline void softmax_forward(const Shape& s, const double* x, double* y) {
  const std::size_t C = s.channels, T = s.length;
  for (std::size_t t = 0; t < T; ++t) {
    double mx = x[t];
    for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, x[c * T + t]);
    double z = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      y[c * T + t] = std::exp(x[c * T + t] - mx);
      z += y[c * T + t];
    }
    for (std::size_t c = 0; c < C; ++c) y[c * T + t] /= z;
  }
}

inline void softmax_backward(const Shape& s, const double* y, const double* gy, double* gx) {
  const std::size_t C = s.channels, T = s.length;
  for (std::size_t t = 0; t < T; ++t) {
    double dot = 0.0;
    for (std::size_t c = 0; c < C; ++c) dot += gy[c * T + t] * y[c * T + t];
    for (std::size_t c = 0; c < C; ++c) gx[c * T + t] += y[c * T + t] * (gy[c * T + t] - dot);
  }
}

}  // namespace detail

class Model {
 public:
  Model() = default;

  /// Builds the layer plan (validating shapes) and initializes parameters
  /// uniformly in +-sqrt(1/fan_in) from `seed`.
  Model(Shape input, std::vector<LayerSpec> layers, std::uint64_t seed) : input_(input), seed_(seed) {
    if (input.size() == 0) fail(ErrorKind::Shape, "empty input shape");
    Shape cur = input;
    std::size_t offset = 0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const LayerSpec& l = layers[i];
      LayerPlan p{l, cur, cur, offset, 0, 1};
      const std::string where = "layer " + std::to_string(i) + " '" + to_string(l) + "' on " + to_string(cur);
      switch (l.kind) {
        case LayerKind::Conv1D:
          if (l.kernel == 0 || l.stride == 0 || l.in == 0 || l.out == 0) fail(ErrorKind::Shape, where + ": zero size");
          if (l.in != cur.channels) fail(ErrorKind::Shape, where + ": input channels mismatch");
          p.out = {l.out, (cur.length + l.stride - 1) / l.stride};
          p.param_count = l.out * l.in * l.kernel + l.out;
          p.fan_in = l.in * l.kernel;
          break;
        case LayerKind::Dense:
          if (l.in == 0 || l.out == 0) fail(ErrorKind::Shape, where + ": zero size");
          if (l.in == cur.channels) {
            p.out = {l.out, cur.length};
          } else if (l.in == cur.size()) {
            p.out = {l.out, 1};
          } else {
            fail(ErrorKind::Shape, where + ": dense input size matches neither channels nor flattened size");
          }
          p.param_count = l.out * l.in + l.out;
          p.fan_in = l.in;
          break;
        case LayerKind::Recurrent:
          if (l.hidden == 0) fail(ErrorKind::Shape, where + ": zero hidden size");
          p.out = {l.hidden, cur.length};
          p.param_count = l.hidden * cur.channels + l.hidden * l.hidden + l.hidden;
          p.fan_in = l.hidden;
          break;
        case LayerKind::GlobalAvgPool:
          p.out = {cur.channels, 1};
          break;
        case LayerKind::ReLU:
        case LayerKind::Tanh:
        case LayerKind::Softmax:
          break;
      }
      offset += p.param_count;
      cur = p.out;
      plan_.push_back(p);
    }
    layers_ = std::move(layers);
    params_.assign(offset, 0.0);
    std::mt19937_64 rng(seed);
    for (const auto& p : plan_) {
      if (p.param_count == 0) continue;
      const double bound = std::sqrt(1.0 / static_cast<double>(p.fan_in));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (std::size_t k = 0; k < p.param_count; ++k) params_[p.param_offset + k] = dist(rng);
    }
  }

  const Shape& input_shape() const { return input_; }
  Shape output_shape() const { return plan_.empty() ? input_ : plan_.back().out; }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  std::span<const LayerPlan> plan() const { return plan_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t num_params() const { return params_.size(); }
  const std::vector<double>& params() const { return params_; }
  std::vector<double>& params() { return params_; }

  void set_params(std::vector<double> p) {
    if (p.size() != params_.size()) {
      fail(ErrorKind::Shape, "parameter vector has " + std::to_string(p.size()) + " entries, model needs " +
                                 std::to_string(params_.size()));
    }
    params_ = std::move(p);
  }

  std::vector<double> forward(std::span<const double> input) const {
    Trace tr;
    forward_trace(input, tr);
    return std::move(tr.acts.back());
  }

  void forward_trace(std::span<const double> input, Trace& tr) const {
    if (input.size() != input_.size()) {
      fail(ErrorKind::Shape, "input has " + std::to_string(input.size()) + " values, model expects " +
                                 std::to_string(input_.size()));
    }
    tr.acts.resize(plan_.size() + 1);
    tr.acts[0].assign(input.begin(), input.end());
    for (std::size_t i = 0; i < plan_.size(); ++i) {
      const LayerPlan& p = plan_[i];
      const double* x = tr.acts[i].data();
      auto& yv = tr.acts[i + 1];
      yv.resize(p.out.size());
      double* y = yv.data();
      const double* w = params_.data() + p.param_offset;
      switch (p.spec.kind) {
        case LayerKind::Conv1D: detail::conv_forward(p, w, x, y); break;
        case LayerKind::Dense:
          detail::dense_forward(p.spec.in, p.spec.out, p.out.length, w, x, y);
          break;
        case LayerKind::Recurrent: detail::recurrent_forward(p, w, x, y); break;
        case LayerKind::ReLU:
          for (std::size_t k = 0; k < yv.size(); ++k) y[k] = x[k] > 0.0 ? x[k] : 0.0;
          break;
        case LayerKind::Tanh:
          for (std::size_t k = 0; k < yv.size(); ++k) y[k] = std::tanh(x[k]);
          break;
        case LayerKind::GlobalAvgPool: {
          const std::size_t T = p.in.length;
          for (std::size_t c = 0; c < p.in.channels; ++c) {
            double acc = 0.0;
            for (std::size_t t = 0; t < T; ++t) acc += x[c * T + t];
            y[c] = acc / static_cast<double>(T);
          }
          break;
        }
        case LayerKind::Softmax: detail::softmax_forward(p.in, x, y); break;
      }
    }
  }

  /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(output).
  void backward(Trace& tr, std::span<const double> grad_out, std::span<double> grad) const {
    if (grad.size() != params_.size()) fail(ErrorKind::Shape, "gradient buffer size mismatch");
    if (grad_out.size() != output_shape().size()) fail(ErrorKind::Shape, "output gradient size mismatch");
    tr.grad_a.assign(grad_out.begin(), grad_out.end());
    for (std::size_t i = plan_.size(); i-- > 0;) {
      const LayerPlan& p = plan_[i];
      const bool first = i == 0;
      tr.grad_b.assign(p.in.size(), 0.0);
      // The input gradient of the first parametrized layer is never needed.
      double* gx = first && p.param_count > 0 ? nullptr : tr.grad_b.data();
      const double* x = tr.acts[i].data();
      const double* y = tr.acts[i + 1].data();
      const double* gy = tr.grad_a.data();
      const double* w = params_.data() + p.param_offset;
      double* gw = grad.data() + p.param_offset;
      switch (p.spec.kind) {
        case LayerKind::Conv1D: detail::conv_backward(p, w, x, gy, gw, gx); break;
        case LayerKind::Dense:
          detail::dense_backward(p.spec.in, p.spec.out, p.out.length, w, x, gy, gw, gx);
          break;
        case LayerKind::Recurrent: detail::recurrent_backward(p, w, x, y, gy, gw, gx); break;
        case LayerKind::ReLU:
          for (std::size_t k = 0; k < p.in.size(); ++k) gx[k] = x[k] > 0.0 ? gy[k] : 0.0;
          break;
        case LayerKind::Tanh:
          for (std::size_t k = 0; k < p.in.size(); ++k) gx[k] = gy[k] * (1.0 - y[k] * y[k]);
          break;
        case LayerKind::GlobalAvgPool: {
          const std::size_t T = p.in.length;
          const double inv = 1.0 / static_cast<double>(T);
          for (std::size_t c = 0; c < p.in.channels; ++c) {
            for (std::size_t t = 0; t < T; ++t) gx[c * T + t] = gy[c] * inv;
          }
          break;
        }
        case LayerKind::Softmax: detail::softmax_backward(p.in, y, gy, gx); break;
      }
      if (first) break;
      tr.grad_a.swap(tr.grad_b);
    }
  }

  friend bool operator==(const Model& a, const Model& b) {
    return a.input_ == b.input_ && a.layers_ == b.layers_ && a.params_ == b.params_ && a.seed_ == b.seed_;
  }

 private:
  Shape input_;
  std::vector<LayerSpec> layers_;
  std::vector<LayerPlan> plan_;
  std::vector<double> params_;
  std::uint64_t seed_ = 0;
};

/// FNV-1a over the exact bit patterns of the parameters.
inline std::uint64_t param_checksum(const Model& m, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto& p = m.params();
  return fnv1a(std::string_view(reinterpret_cast<const char*>(p.data()), p.size() * sizeof(double)), h);
}

}  // namespace emgmoe::nn
