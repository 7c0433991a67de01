#pragma once

// Host-side preprocessing: gap repair, touch-centred windows, polarity
// compensation, per-axis min-max normalization and statistical features.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "budsid/geometry.hpp"
#include "budsid/magsim.hpp"

namespace budsid {

struct UniformSeries {
  double rate = kPollRateHz;
  double t0 = 0.0;
  std::vector<Vec3> samples;

  double time_at(std::size_t i) const { return t0 + static_cast<double>(i) / rate; }
};

/// Holds the most recent received sample at every poll tick.
inline UniformSeries forward_fill(const ReceivedTrace& received, double poll_rate = kPollRateHz) {
  if (received.timestamps.empty()) throw std::invalid_argument("forward_fill: no samples received");
  if (!(poll_rate > 0.0)) throw std::invalid_argument("forward_fill: poll rate must be positive");
  constexpr double eps = 1e-9;
  const double t_start = std::min(received.t_start, received.timestamps.front());
  const double t_end = std::max(received.t_end, received.timestamps.back());
  const auto n_ticks = static_cast<std::size_t>(std::floor((t_end - t_start) * poll_rate + eps)) + 1;

  UniformSeries out;
  out.rate = poll_rate;
  out.t0 = t_start;
  out.samples.reserve(n_ticks);
  std::size_t j = 0;  // first received index not yet consumed
  for (std::size_t k = 0; k < n_ticks; ++k) {
    const double tick = out.time_at(k);
    while (j < received.timestamps.size() && received.timestamps[j] <= tick + eps) ++j;
    out.samples.push_back(received.mag[j == 0 ? 0 : j - 1]);
  }
  return out;
}

struct WindowConfig {
  int n_before = 40;
  int n_after = 40;

  int total() const { return n_before + n_after; }
  double seconds(double rate = kPollRateHz) const { return total() / rate; }
  bool valid() const { return n_before >= 0 && n_after >= 0 && total() > 0; }
  friend bool operator==(const WindowConfig&, const WindowConfig&) = default;
};

struct Window {
  WindowConfig config{};
  double center_time = 0.0;
  std::vector<Vec3> data;

  std::size_t size() const { return data.size(); }
};

/// n_before ticks strictly before the centre tick, n_after from it onward.
/// The centre tick is the first tick at or after `center`.
inline Window extract_window(const UniformSeries& series, double center, const WindowConfig& cfg) {
  if (!cfg.valid()) throw std::invalid_argument("extract_window: invalid window config");
  const double pos = (center - series.t0) * series.rate;
  const auto c = static_cast<long>(std::ceil(pos - 1e-9));
  const long lo = c - cfg.n_before;
  const long hi = c + cfg.n_after;
  if (lo < 0 || hi > static_cast<long>(series.samples.size()))
    throw std::out_of_range("extract_window: series does not cover the requested window around t=" +
                            std::to_string(center));
  Window w;
  w.config = cfg;
  w.center_time = center;
  w.data.assign(series.samples.begin() + lo, series.samples.begin() + hi);
  return w;
}

/// Canonicalizes mounting: the left bud flips Y, an inverted ring flips all three axes.
inline Window polarity_compensate(Window w, Hand hand, bool ring_inverted) {
  const double sx = ring_inverted ? -1.0 : 1.0;
  const double sy = (hand == Hand::left ? -1.0 : 1.0) * sx;
  for (auto& v : w.data) {
    v.x *= sx;
    v.y *= sy;
    v.z *= sx;
  }
  return w;
}

/// Per-axis (v - min) / (max - min); a constant axis becomes 0.5.
inline Window minmax_normalize(Window w) {
  for (int axis = 0; axis < 3; ++axis) {
    const auto get = [axis](Vec3& v) -> double& { return axis == 0 ? v.x : (axis == 1 ? v.y : v.z); };
    double lo = INFINITY, hi = -INFINITY;
    for (auto& v : w.data) {
      lo = std::min(lo, get(v));
      hi = std::max(hi, get(v));
    }
    const double span = hi - lo;
    for (auto& v : w.data) get(v) = span > 0.0 ? (get(v) - lo) / span : 0.5;
  }
  return w;
}

inline constexpr std::size_t kFeaturesPerAxis = 6;
inline constexpr std::size_t kSingleFeatureCount = 18;
inline constexpr std::size_t kDoubleFeatureCount = 36;

using FeatureVector = std::vector<double>;

namespace detail {

/// Linear interpolation between order statistics at position q * (n - 1).
inline double quantile_sorted(std::span<const double> sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

inline void axis_features(std::vector<double> v, std::vector<double>& out) {
  const auto n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double var = 0.0, mag = 0.0;
  for (double x : v) {
    var += (x - mean) * (x - mean);
    mag = std::max(mag, std::abs(x));
  }
  std::sort(v.begin(), v.end());
  out.push_back(mean);
  out.push_back(std::sqrt(var / n));
  out.push_back(quantile_sorted(v, 0.25));
  out.push_back(quantile_sorted(v, 0.50));
  out.push_back(quantile_sorted(v, 0.75));
  out.push_back(mag);
}

inline FeatureVector span_features(std::span<const Vec3> rows) {
  if (rows.empty()) throw std::invalid_argument("stat_features: empty window");
  FeatureVector out;
  out.reserve(kSingleFeatureCount);
  std::vector<double> axis(rows.size());
  for (int a = 0; a < 3; ++a) {
    for (std::size_t i = 0; i < rows.size(); ++i) axis[i] = rows[i][a];
    axis_features(axis, out);
  }
  return out;
}

}  // namespace detail

/// Per axis (X, Y, Z): mean, population std, q25, q50, q75, max |v|.
inline FeatureVector stat_features(const Window& w) { return detail::span_features(w.data); }

/// Features of the first half followed by those of the second half.
inline FeatureVector double_tap_features(const Window& w) {
  if (w.data.size() % 2 != 0) throw std::invalid_argument("double_tap_features: window length must be even");
  const std::span<const Vec3> all(w.data);
  const std::size_t half = all.size() / 2;
  FeatureVector out = detail::span_features(all.first(half));
  const FeatureVector second = detail::span_features(all.subspan(half));
  out.insert(out.end(), second.begin(), second.end());
  return out;
}

inline const std::array<const char*, kFeaturesPerAxis>& feature_names() {
  static const std::array<const char*, kFeaturesPerAxis> names{"mean", "std", "q25", "q50", "q75", "mag"};
  return names;
}

/// One CSV row per window: label columns, then x_i, y_i, z_i per sample.
inline void write_window_csv_header(std::ostream& os, std::size_t n_samples) {
  os << "participant,class";
  for (std::size_t i = 0; i < n_samples; ++i) os << ",x" << i << ",y" << i << ",z" << i;
  os << '\n';
}

inline void write_window_csv_row(std::ostream& os, int participant, int cls, const Window& w) {
  os << participant << ',' << cls;
  for (const auto& v : w.data) os << ',' << v.x << ',' << v.y << ',' << v.z;
  os << '\n';
}

inline void write_feature_csv_header(std::ostream& os, std::size_t n_features) {
  os << "participant,class";
  const char* axes = "xyz";
  for (std::size_t i = 0; i < n_features; ++i) {
    const std::size_t half = i / kSingleFeatureCount;
    const std::size_t within = i % kSingleFeatureCount;
    os << ',' << (n_features > kSingleFeatureCount ? (half == 0 ? "h1_" : "h2_") : "")
       << axes[within / kFeaturesPerAxis] << '_' << feature_names()[within % kFeaturesPerAxis];
  }
  os << '\n';
}

inline void write_feature_csv_row(std::ostream& os, int participant, int cls, const FeatureVector& f) {
  os << participant << ',' << cls;
  for (double v : f) os << ',' << v;
  os << '\n';
}

}  // namespace budsid
