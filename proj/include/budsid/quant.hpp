#pragma once

// Post-training dynamic-range quantization: per-tensor symmetric int8 weights,
// float biases and float activations.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "budsid/cnn.hpp"
#include "budsid/pipeline.hpp"

namespace budsid {

inline constexpr std::array<Tensor, 4> kWeightTensors{Tensor::conv_w, Tensor::dense1_w, Tensor::dense2_w, Tensor::out_w};
inline constexpr std::array<Tensor, 4> kBiasTensors{Tensor::conv_b, Tensor::dense1_b, Tensor::dense2_b, Tensor::out_b};

struct QuantTensor {
  float scale = 1.0f;
  std::vector<std::int8_t> codes;

  float value(std::size_t i) const { return scale * static_cast<float>(codes[i]); }
  friend bool operator==(const QuantTensor&, const QuantTensor&) = default;
};

/// scale = max|w| / 127 (1 for an all-zero tensor); codes round half away from zero.
inline QuantTensor quantize_tensor(std::span<const float> w) {
  QuantTensor q;
  float mx = 0.0f;
  for (float v : w) mx = std::max(mx, std::abs(v));
  q.scale = mx > 0.0f ? mx / 127.0f : 1.0f;
  q.codes.resize(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const long c = std::lround(static_cast<double>(w[i]) / static_cast<double>(q.scale));
    q.codes[i] = static_cast<std::int8_t>(std::clamp(c, -127L, 127L));
  }
  return q;
}

struct QuantModel {
  CnnShape shape{};
  std::array<QuantTensor, 4> weights{};       // kWeightTensors order
  std::array<std::vector<float>, 4> biases{};  // kBiasTensors order

  const QuantTensor& weight(Tensor t) const {
    for (std::size_t i = 0; i < kWeightTensors.size(); ++i)
      if (kWeightTensors[i] == t) return weights[i];
    throw std::invalid_argument("QuantModel: not a weight tensor");
  }
  std::span<const float> bias(Tensor t) const {
    for (std::size_t i = 0; i < kBiasTensors.size(); ++i)
      if (kBiasTensors[i] == t) return biases[i];
    throw std::invalid_argument("QuantModel: not a bias tensor");
  }
  friend bool operator==(const QuantModel&, const QuantModel&) = default;
};

inline QuantModel quantize_dynamic(const CnnModel<float>& model) {
  QuantModel q;
  q.shape = model.shape();
  for (std::size_t i = 0; i < kWeightTensors.size(); ++i) q.weights[i] = quantize_tensor(model.tensor(kWeightTensors[i]));
  for (std::size_t i = 0; i < kBiasTensors.size(); ++i) {
    const auto b = model.tensor(kBiasTensors[i]);
    q.biases[i].assign(b.begin(), b.end());
  }
  return q;
}

inline CnnModel<float> dequantize(const QuantModel& q) {
  CnnModel<float> m(q.shape);
  for (std::size_t i = 0; i < kWeightTensors.size(); ++i) {
    auto dst = m.tensor(kWeightTensors[i]);
    const auto& src = q.weights[i];
    if (src.codes.size() != dst.size()) throw std::invalid_argument("dequantize: tensor size does not match shape");
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = src.value(k);
  }
  for (std::size_t i = 0; i < kBiasTensors.size(); ++i) {
    auto dst = m.tensor(kBiasTensors[i]);
    if (q.biases[i].size() != dst.size()) throw std::invalid_argument("dequantize: bias size does not match shape");
    std::copy(q.biases[i].begin(), q.biases[i].end(), dst.begin());
  }
  return m;
}

namespace detail {

/// Dense layer on int8 codes: the input is pre-multiplied by the tensor scale.
inline void qdense_forward(const QuantTensor& w, std::span<const float> b, std::span<const float> in,
                           std::span<float> out, bool relu) {
  const std::size_t n_out = out.size();
  std::copy(b.begin(), b.end(), out.begin());
  float* o = out.data();
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (in[i] == 0.0f) continue;
    const float xs = in[i] * w.scale;
    const std::int8_t* row = w.codes.data() + i * n_out;
    for (std::size_t k = 0; k < n_out; ++k) o[k] += static_cast<float>(row[k]) * xs;
  }
  if (relu)
    for (auto& v : out) v = std::max(v, 0.0f);
}

}  // namespace detail

inline std::span<const float> quant_forward(const QuantModel& q, std::span<const float> input, CnnWorkspace<float>& ws) {
  const CnnShape& s = q.shape;
  if (static_cast<int>(input.size()) != s.input_size())
    throw std::invalid_argument("quant_forward: input has " + std::to_string(input.size()) + " values, model expects " +
                                std::to_string(s.input_size()));
  if (ws.probs.size() != static_cast<std::size_t>(s.n_classes) || ws.conv.size() != static_cast<std::size_t>(s.n_samples) * s.filters)
    ws.resize(s);

  const QuantTensor& cw = q.weight(Tensor::conv_w);
  const auto cb = q.bias(Tensor::conv_b);
  const int half = s.kernel / 2;
  for (int t = 0; t < s.n_samples; ++t) {
    float* out = ws.conv.data() + static_cast<std::size_t>(t) * s.filters;
    for (int f = 0; f < s.filters; ++f) out[f] = cb[f];
    for (int k = 0; k < s.kernel; ++k) {
      const int src = t + k - half;
      if (src < 0 || src >= s.n_samples) continue;
      for (int c = 0; c < kChannels; ++c) {
        const float xs = input[static_cast<std::size_t>(src) * kChannels + c] * cw.scale;
        for (int f = 0; f < s.filters; ++f)
          out[f] += static_cast<float>(cw.codes[(static_cast<std::size_t>(f) * kChannels + c) * s.kernel + k]) * xs;
      }
    }
    for (int f = 0; f < s.filters; ++f) out[f] = std::max(out[f], 0.0f);
  }
  for (int j = 0; j < s.pooled(); ++j)
    for (int f = 0; f < s.filters; ++f)
      ws.pooled[static_cast<std::size_t>(j) * s.filters + f] = std::max(ws.conv[static_cast<std::size_t>(2 * j) * s.filters + f],
                                                                      ws.conv[static_cast<std::size_t>(2 * j + 1) * s.filters + f]);
  detail::qdense_forward(q.weight(Tensor::dense1_w), q.bias(Tensor::dense1_b), ws.pooled, ws.h1, true);
  detail::qdense_forward(q.weight(Tensor::dense2_w), q.bias(Tensor::dense2_b), ws.h1, ws.h2, true);
  detail::qdense_forward(q.weight(Tensor::out_w), q.bias(Tensor::out_b), ws.h2, ws.logits, false);
  detail::softmax<float>(ws.logits, ws.probs);
  return ws.probs;
}

inline std::vector<float> quant_forward(const QuantModel& q, std::span<const float> input) {
  CnnWorkspace<float> ws;
  ws.resize(q.shape);
  const auto p = quant_forward(q, input, ws);
  return {p.begin(), p.end()};
}

inline std::vector<int> quant_predict(const QuantModel& q, const LabeledWindows<float>& data) {
  CnnWorkspace<float> ws;
  ws.resize(q.shape);
  std::vector<int> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) out[i] = argmax(quant_forward(q, data.input(i), ws));
  return out;
}

// ---------------------------------------------------------------------------
// Latency

/// Time-major [t][axis] flattening of a window.
template <typename T = float>
std::vector<T> window_input(const Window& w) {
  std::vector<T> out;
  out.reserve(w.data.size() * 3);
  for (const auto& v : w.data) {
    out.push_back(static_cast<T>(v.x));
    out.push_back(static_cast<T>(v.y));
    out.push_back(static_cast<T>(v.z));
  }
  return out;
}

struct StageTiming {
  double mean_ms = 0.0;
  double sd_ms = 0.0;
};

struct LatencyReport {
  StageTiming preprocess;
  StageTiming predict;
  int n_runs = 0;
  int predicted_class = -1;
  std::string note =
      "host wall-clock timings; microcontroller figures are hardware-specific and not comparable";
};

/// One received trace and how to window it.
struct BenchInput {
  ReceivedTrace received;
  double center = 0.0;
  WindowConfig window{};
  Hand hand = Hand::right;
  bool ring_inverted = false;
};

inline Window preprocess(const BenchInput& in) {
  return minmax_normalize(polarity_compensate(extract_window(forward_fill(in.received), in.center, in.window), in.hand,
                                              in.ring_inverted));
}

inline int classify(const CnnModel<float>& m, std::span<const float> x, CnnWorkspace<float>& ws) {
  return argmax(cnn_forward(m, x, ws));
}
inline int classify(const QuantModel& q, std::span<const float> x, CnnWorkspace<float>& ws) {
  return argmax(quant_forward(q, x, ws));
}

namespace detail {
inline StageTiming summarize_ms(const std::vector<double>& xs) {
  StageTiming s;
  for (double x : xs) s.mean_ms += x;
  s.mean_ms /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - s.mean_ms) * (x - s.mean_ms);
  s.sd_ms = xs.size() > 1 ? std::sqrt(ss / static_cast<double>(xs.size() - 1)) : 0.0;
  return s;
}
}  // namespace detail

/// Wall-clock mean/sd of preprocessing and prediction over `n_runs` repetitions.
template <typename Model>
LatencyReport bench_latency(const Model& model, const BenchInput& in, int n_runs) {
  if (n_runs < 100) throw std::invalid_argument("bench_latency: n_runs must be at least 100");
  using clock = std::chrono::steady_clock;
  std::vector<double> pre(n_runs), pred(n_runs);
  CnnWorkspace<float> ws;
  LatencyReport rep;
  rep.n_runs = n_runs;
  for (int r = 0; r < n_runs; ++r) {
    const auto t0 = clock::now();
    const Window w = preprocess(in);
    const auto x = window_input(w);
    const auto t1 = clock::now();
    const int cls = classify(model, x, ws);
    const auto t2 = clock::now();
    if (r > 0 && cls != rep.predicted_class) throw std::logic_error("bench_latency: prediction changed between runs");
    rep.predicted_class = cls;
    pre[r] = std::chrono::duration<double, std::milli>(t1 - t0).count();
    pred[r] = std::chrono::duration<double, std::milli>(t2 - t1).count();
  }
  rep.preprocess = detail::summarize_ms(pre);
  rep.predict = detail::summarize_ms(pred);
  return rep;
}

}  // namespace budsid
