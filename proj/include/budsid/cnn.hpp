#pragma once

// Lightweight 1D CNN: conv(32, k=3, same padding, ReLU) -> maxpool(2) ->
// dense(128, ReLU) -> dense(32, ReLU) -> dense(n_classes) -> softmax.
//
// Parameters live in one flat buffer so optimizers, gradient checks and the
// serializers can treat the model as a vector. Inputs are time-major
// [t][channel] with 3 channels; flattening after pooling is also time-major.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace budsid {

inline constexpr int kChannels = 3;

struct CnnShape {
  int n_samples = 80;
  int n_classes = 3;
  int filters = 32;
  int kernel = 3;
  int dense1 = 128;
  int dense2 = 32;

  int pooled() const { return n_samples / 2; }
  int flat() const { return filters * pooled(); }
  int input_size() const { return n_samples * kChannels; }

  bool valid() const {
    return n_samples >= 4 && n_samples % 2 == 0 && n_classes >= 2 && filters > 0 && kernel > 0 &&
           kernel % 2 == 1 && dense1 > 0 && dense2 > 0;
  }
  friend bool operator==(const CnnShape&, const CnnShape&) = default;
};

enum class Tensor : int { conv_w = 0, conv_b, dense1_w, dense1_b, dense2_w, dense2_b, out_w, out_b };
inline constexpr int kTensorCount = 8;

inline constexpr bool is_bias(Tensor t) { return static_cast<int>(t) % 2 == 1; }

struct TensorSpan {
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// Offsets of each tensor in the flat parameter buffer, in Tensor order.
inline std::array<TensorSpan, kTensorCount> tensor_layout(const CnnShape& s) {
  const std::array<std::size_t, kTensorCount> sizes{
      static_cast<std::size_t>(s.filters) * kChannels * s.kernel,
      static_cast<std::size_t>(s.filters),
      static_cast<std::size_t>(s.dense1) * s.flat(),
      static_cast<std::size_t>(s.dense1),
      static_cast<std::size_t>(s.dense2) * s.dense1,
      static_cast<std::size_t>(s.dense2),
      static_cast<std::size_t>(s.n_classes) * s.dense2,
      static_cast<std::size_t>(s.n_classes)};
  std::array<TensorSpan, kTensorCount> out{};
  std::size_t off = 0;
  for (int i = 0; i < kTensorCount; ++i) {
    out[i] = {off, sizes[i]};
    off += sizes[i];
  }
  return out;
}

inline std::size_t parameter_count(const CnnShape& s) {
  const auto layout = tensor_layout(s);
  return layout.back().offset + layout.back().size;
}

template <typename T>
class CnnModel {
 public:
  using Scalar = T;

  CnnModel() = default;
  explicit CnnModel(const CnnShape& shape)
      : shape_(shape), layout_(tensor_layout(shape)), params_(budsid::parameter_count(shape), T(0)) {
    if (!shape.valid()) throw std::invalid_argument("CnnModel: invalid shape");
  }

  const CnnShape& shape() const { return shape_; }
  std::size_t parameter_count() const { return params_.size(); }

  std::span<T> params() { return params_; }
  std::span<const T> params() const { return params_; }

  std::span<T> tensor(Tensor t) {
    const auto& l = layout_[static_cast<int>(t)];
    return std::span<T>(params_).subspan(l.offset, l.size);
  }
  std::span<const T> tensor(Tensor t) const {
    const auto& l = layout_[static_cast<int>(t)];
    return std::span<const T>(params_).subspan(l.offset, l.size);
  }
  const std::array<TensorSpan, kTensorCount>& layout() const { return layout_; }

  template <typename U>
  CnnModel<U> cast() const {
    CnnModel<U> out(shape_);
    std::transform(params_.begin(), params_.end(), out.params().begin(), [](T v) { return static_cast<U>(v); });
    return out;
  }

  friend bool operator==(const CnnModel& a, const CnnModel& b) {
    return a.shape_ == b.shape_ && a.params_ == b.params_;
  }

 private:
  CnnShape shape_{};
  std::array<TensorSpan, kTensorCount> layout_{};
  std::vector<T> params_;
};

/// Kaiming-style uniform init scaled by fan-in; biases start at zero.
template <typename T = float>
CnnModel<T> build_cnn(int n_samples, int n_classes, std::uint64_t seed) {
  CnnShape shape;
  shape.n_samples = n_samples;
  shape.n_classes = n_classes;
  if (!shape.valid()) throw std::invalid_argument("build_cnn: need even n_samples >= 4 and n_classes >= 2");
  CnnModel<T> model(shape);
  std::mt19937_64 rng(seed);
  const std::array<std::pair<Tensor, int>, 4> weights{{{Tensor::conv_w, kChannels * shape.kernel},
                                                       {Tensor::dense1_w, shape.flat()},
                                                       {Tensor::dense2_w, shape.dense1},
                                                       {Tensor::out_w, shape.dense2}}};
  for (const auto& [t, fan_in] : weights) {
    const double bound = std::sqrt(6.0 / fan_in);
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& w : model.tensor(t)) w = static_cast<T>(dist(rng));
  }
  return model;
}

/// Per-sample activations kept for the backward pass.
template <typename T>
struct CnnWorkspace {
  std::vector<T> conv;     // [t][f] post-ReLU
  std::vector<T> pooled;   // [j][f], the flattened dense1 input
  std::vector<int> argmax; // source t of each pooled value
  std::vector<T> h1, h2, logits, probs;
  // backward scratch
  std::vector<T> d_h2, d_h1, d_pooled, d_conv;

  void resize(const CnnShape& s) {
    conv.assign(static_cast<std::size_t>(s.n_samples) * s.filters, T(0));
    pooled.assign(static_cast<std::size_t>(s.flat()), T(0));
    argmax.assign(static_cast<std::size_t>(s.flat()), 0);
    h1.assign(s.dense1, T(0));
    h2.assign(s.dense2, T(0));
    logits.assign(s.n_classes, T(0));
    probs.assign(s.n_classes, T(0));
    d_h2.assign(s.dense2, T(0));
    d_h1.assign(s.dense1, T(0));
    d_pooled.assign(static_cast<std::size_t>(s.flat()), T(0));
    d_conv.assign(static_cast<std::size_t>(s.n_samples) * s.filters, T(0));
  }
};

namespace detail {

/// Dense weights are stored [in][out]; zero inputs (dead ReLUs) are skipped.
template <typename T>
void dense_forward(std::span<const T> w, std::span<const T> b, std::span<const T> in, std::span<T> out, bool relu) {
  const std::size_t n_out = out.size();
  std::copy(b.begin(), b.end(), out.begin());
  T* o = out.data();
  for (std::size_t i = 0; i < in.size(); ++i) {
    const T x = in[i];
    if (x == T(0)) continue;
    const T* row = w.data() + i * n_out;
    for (std::size_t k = 0; k < n_out; ++k) o[k] += row[k] * x;
  }
  if (relu)
    for (auto& v : out) v = std::max(v, T(0));
}

/// Accumulates weight/bias gradients of a dense layer and, if `d_in` is non-empty,
/// the gradient with respect to its input.
template <typename T>
void dense_backward(std::span<const T> w, std::span<const T> in, std::span<const T> d_out, std::span<T> gw,
                    std::span<T> gb, std::span<T> d_in) {
  const std::size_t n_out = d_out.size();
  for (std::size_t k = 0; k < n_out; ++k) gb[k] += d_out[k];
  const T* d = d_out.data();
  for (std::size_t i = 0; i < in.size(); ++i) {
    const T x = in[i];
    const T* row = w.data() + i * n_out;
    if (x != T(0)) {
      T* grow = gw.data() + i * n_out;
      for (std::size_t k = 0; k < n_out; ++k) grow[k] += d[k] * x;
    }
    if (!d_in.empty()) {
      T acc = 0;
      for (std::size_t k = 0; k < n_out; ++k) acc += row[k] * d[k];
      d_in[i] = acc;
    }
  }
}

template <typename T>
void softmax(std::span<const T> logits, std::span<T> probs) {
  const T mx = *std::max_element(logits.begin(), logits.end());
  T sum = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - mx);
    sum += probs[i];
  }
  for (auto& p : probs) p /= sum;
}

}  // namespace detail

/// Runs one sample through the network, filling the workspace. Returns probabilities.
template <typename T>
std::span<const T> cnn_forward(const CnnModel<T>& model, std::span<const T> input, CnnWorkspace<T>& ws) {
  const CnnShape& s = model.shape();
  if (static_cast<int>(input.size()) != s.input_size())
    throw std::invalid_argument("cnn_forward: input has " + std::to_string(input.size()) + " values, model expects " +
                                std::to_string(s.input_size()));
  if (ws.probs.size() != static_cast<std::size_t>(s.n_classes) || ws.conv.size() != static_cast<std::size_t>(s.n_samples) * s.filters)
    ws.resize(s);

  const auto cw = model.tensor(Tensor::conv_w);
  const auto cb = model.tensor(Tensor::conv_b);
  const int half = s.kernel / 2;
  for (int t = 0; t < s.n_samples; ++t) {
    T* out = ws.conv.data() + static_cast<std::size_t>(t) * s.filters;
    for (int f = 0; f < s.filters; ++f) out[f] = cb[f];
    for (int k = 0; k < s.kernel; ++k) {
      const int src = t + k - half;
      if (src < 0 || src >= s.n_samples) continue;
      for (int c = 0; c < kChannels; ++c) {
        const T x = input[static_cast<std::size_t>(src) * kChannels + c];
        for (int f = 0; f < s.filters; ++f) out[f] += cw[(static_cast<std::size_t>(f) * kChannels + c) * s.kernel + k] * x;
      }
    }
    for (int f = 0; f < s.filters; ++f) out[f] = std::max(out[f], T(0));
  }
  for (int j = 0; j < s.pooled(); ++j) {
    for (int f = 0; f < s.filters; ++f) {
      const T a = ws.conv[static_cast<std::size_t>(2 * j) * s.filters + f];
      const T b = ws.conv[static_cast<std::size_t>(2 * j + 1) * s.filters + f];
      const std::size_t idx = static_cast<std::size_t>(j) * s.filters + f;
      ws.pooled[idx] = a >= b ? a : b;
      ws.argmax[idx] = a >= b ? 2 * j : 2 * j + 1;
    }
  }
  detail::dense_forward<T>(model.tensor(Tensor::dense1_w), model.tensor(Tensor::dense1_b), ws.pooled, ws.h1, true);
  detail::dense_forward<T>(model.tensor(Tensor::dense2_w), model.tensor(Tensor::dense2_b), ws.h1, ws.h2, true);
  detail::dense_forward<T>(model.tensor(Tensor::out_w), model.tensor(Tensor::out_b), ws.h2, ws.logits, false);
  detail::softmax<T>(ws.logits, ws.probs);
  return ws.probs;
}

template <typename T>
std::vector<T> cnn_forward(const CnnModel<T>& model, std::span<const T> input) {
  CnnWorkspace<T> ws;
  ws.resize(model.shape());
  const auto p = cnn_forward(model, input, ws);
  return {p.begin(), p.end()};
}

/// Accumulates d(cross-entropy)/d(params) * scale into `grad` for the sample last run through `ws`.
template <typename T>
void cnn_backward(const CnnModel<T>& model, std::span<const T> input, int label, CnnWorkspace<T>& ws,
                  std::span<T> grad, T scale) {
  const CnnShape& s = model.shape();
  const auto& L = model.layout();
  const auto g = [&](Tensor t) { return grad.subspan(L[static_cast<int>(t)].offset, L[static_cast<int>(t)].size); };

  // Output layer: dL/dlogit = p - onehot.
  std::array<T, 64> d_logit_buf{};
  std::vector<T> d_logit_heap;
  T* d_logit = d_logit_buf.data();
  if (s.n_classes > 64) {
    d_logit_heap.resize(s.n_classes);
    d_logit = d_logit_heap.data();
  }
  for (int k = 0; k < s.n_classes; ++k) d_logit[k] = (ws.probs[k] - (k == label ? T(1) : T(0))) * scale;

  std::span<const T> d_logits(d_logit, static_cast<std::size_t>(s.n_classes));
  detail::dense_backward<T>(model.tensor(Tensor::out_w), ws.h2, d_logits, g(Tensor::out_w), g(Tensor::out_b), ws.d_h2);
  for (int i = 0; i < s.dense2; ++i)
    if (ws.h2[i] <= T(0)) ws.d_h2[i] = T(0);

  detail::dense_backward<T>(model.tensor(Tensor::dense2_w), ws.h1, ws.d_h2, g(Tensor::dense2_w), g(Tensor::dense2_b), ws.d_h1);
  for (int i = 0; i < s.dense1; ++i)
    if (ws.h1[i] <= T(0)) ws.d_h1[i] = T(0);

  // A pooled value of zero means its conv unit was inactive, so its input gradient is never used.
  const std::size_t flat = static_cast<std::size_t>(s.flat());
  {
    const auto w1 = model.tensor(Tensor::dense1_w);
    auto gw1 = g(Tensor::dense1_w);
    auto gb1 = g(Tensor::dense1_b);
    const std::size_t n_out = static_cast<std::size_t>(s.dense1);
    for (std::size_t k = 0; k < n_out; ++k) gb1[k] += ws.d_h1[k];
    const T* d = ws.d_h1.data();
    for (std::size_t i = 0; i < flat; ++i) {
      const T x = ws.pooled[i];
      if (x == T(0)) {
        ws.d_pooled[i] = T(0);
        continue;
      }
      const T* row = w1.data() + i * n_out;
      T* grow = gw1.data() + i * n_out;
      T acc = 0;
      for (std::size_t k = 0; k < n_out; ++k) {
        grow[k] += d[k] * x;
        acc += row[k] * d[k];
      }
      ws.d_pooled[i] = acc;
    }
  }

  // Route pooled gradients back to the winning conv outputs, through ReLU.
  std::fill(ws.d_conv.begin(), ws.d_conv.end(), T(0));
  for (std::size_t idx = 0; idx < flat; ++idx) {
    const int f = static_cast<int>(idx % s.filters);
    const std::size_t src = static_cast<std::size_t>(ws.argmax[idx]) * s.filters + f;
    if (ws.conv[src] > T(0)) ws.d_conv[src] += ws.d_pooled[idx];
  }

  auto gcw = g(Tensor::conv_w);
  auto gcb = g(Tensor::conv_b);
  const int half = s.kernel / 2;
  for (int t = 0; t < s.n_samples; ++t) {
    const T* dz = ws.d_conv.data() + static_cast<std::size_t>(t) * s.filters;
    for (int f = 0; f < s.filters; ++f) gcb[f] += dz[f];
    for (int k = 0; k < s.kernel; ++k) {
      const int src = t + k - half;
      if (src < 0 || src >= s.n_samples) continue;
      for (int c = 0; c < kChannels; ++c) {
        const T x = input[static_cast<std::size_t>(src) * kChannels + c];
        for (int f = 0; f < s.filters; ++f) gcw[(static_cast<std::size_t>(f) * kChannels + c) * s.kernel + k] += dz[f] * x;
      }
    }
  }
}

/// A batch of fixed-length inputs, each n_samples x 3 time-major, with class labels.
template <typename T>
struct LabeledWindows {
  int n_samples = 0;
  std::vector<T> x;
  std::vector<int> y;

  std::size_t size() const { return y.size(); }
  std::span<const T> input(std::size_t i) const {
    const std::size_t stride = static_cast<std::size_t>(n_samples) * kChannels;
    return std::span<const T>(x).subspan(i * stride, stride);
  }
  void push_back(std::span<const T> in, int label) {
    x.insert(x.end(), in.begin(), in.end());
    y.push_back(label);
  }
  LabeledWindows subset(std::span<const std::size_t> idx) const {
    LabeledWindows out;
    out.n_samples = n_samples;
    out.x.reserve(idx.size() * static_cast<std::size_t>(n_samples) * kChannels);
    out.y.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(input(i), y[i]);
    return out;
  }
};

/// Mean cross-entropy over a batch; optionally accumulates the mean gradient.
template <typename T>
double cnn_loss(const CnnModel<T>& model, const LabeledWindows<T>& batch, std::span<T> grad = {}) {
  if (batch.size() == 0) throw std::invalid_argument("cnn_loss: empty batch");
  CnnWorkspace<T> ws;
  ws.resize(model.shape());
  double loss = 0.0;
  const T scale = T(1) / static_cast<T>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto p = cnn_forward(model, batch.input(i), ws);
    loss -= std::log(std::max(static_cast<double>(p[batch.y[i]]), 1e-300));
    if (!grad.empty()) cnn_backward(model, batch.input(i), batch.y[i], ws, grad, scale);
  }
  return loss / static_cast<double>(batch.size());
}

template <typename T>
int argmax(std::span<const T> v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

template <typename T>
std::vector<int> cnn_predict(const CnnModel<T>& model, const LabeledWindows<T>& data) {
  CnnWorkspace<T> ws;
  ws.resize(model.shape());
  std::vector<int> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) out[i] = argmax(cnn_forward(model, data.input(i), ws));
  return out;
}

// ---------------------------------------------------------------------------
// Gradient check

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t worst_index = 0;
};

/// |a - n| / max(|a| + |n|, floor); the floor keeps exactly-zero gradients from dividing by zero.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max(std::abs(analytic) + std::abs(numeric), floor);
}

/// Compares the analytic gradient with central differences on sampled parameters.
/// At least `per_tensor` indices come from every tensor, topped up to `min_total`.
template <typename T>
GradCheckResult grad_check(const CnnModel<T>& model, const LabeledWindows<T>& batch, double epsilon,
                           std::uint64_t seed, std::size_t min_total = 200, std::size_t per_tensor = 20) {
  if (batch.size() == 0) throw std::invalid_argument("grad_check: empty batch");
  if (epsilon < 1e-6 || epsilon > 1e-3) throw std::invalid_argument("grad_check: epsilon outside [1e-6, 1e-3]");

  std::vector<T> grad(model.parameter_count(), T(0));
  cnn_loss(model, batch, std::span<T>(grad));

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> picks;
  for (const auto& l : model.layout()) {
    std::vector<std::size_t> all(l.size);
    std::iota(all.begin(), all.end(), l.offset);
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(std::min(per_tensor, all.size()));
    picks.insert(picks.end(), all.begin(), all.end());
  }
  std::uniform_int_distribution<std::size_t> any(0, model.parameter_count() - 1);
  while (picks.size() < min_total) picks.push_back(any(rng));

  CnnModel<T> probe = model;
  GradCheckResult res;
  for (std::size_t idx : picks) {
    const T orig = probe.params()[idx];
    probe.params()[idx] = orig + static_cast<T>(epsilon);
    const double up = cnn_loss(probe, batch);
    probe.params()[idx] = orig - static_cast<T>(epsilon);
    const double down = cnn_loss(probe, batch);
    probe.params()[idx] = orig;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double err = relative_error(static_cast<double>(grad[idx]), numeric);
    if (err > res.max_relative_error) {
      res.max_relative_error = err;
      res.worst_index = idx;
    }
    ++res.checked;
  }
  return res;
}

}  // namespace budsid
