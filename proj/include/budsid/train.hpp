#pragma once

// Stratified splitting and mini-batch training for CnnModel.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "budsid/cnn.hpp"

namespace budsid {

struct SplitRatios {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;

  bool valid() const {
    return train > 0.0 && val >= 0.0 && test >= 0.0 && std::abs(train + val + test - 1.0) < 1e-9;
  }
};

struct TrainConfig {
  SplitRatios split{};
  int folds = 5;
  int epochs = 100;
  int batch_size = 32;
  double learning_rate = 1e-2;
  double momentum = 0.9;
  int patience = 10;
  std::uint64_t seed = 0;

  bool valid() const {
    return split.valid() && folds >= 2 && epochs >= 1 && batch_size >= 1 && learning_rate > 0.0 &&
           momentum >= 0.0 && momentum < 1.0 && patience >= 1;
  }
};

/// Single-tap defaults: 6:2:2, 5 folds.
inline TrainConfig single_tap_config() { return {}; }

/// Double-tap defaults: 8:1:1, 10 folds.
inline TrainConfig double_tap_config() {
  TrainConfig c;
  c.split = {0.8, 0.1, 0.1};
  c.folds = 10;
  return c;
}

struct SplitIndices {
  std::vector<std::size_t> train, val, test;
};

/// Per-class shuffle, then val and test take round(n * ratio) each; the rest train.
inline SplitIndices stratified_split(std::span<const int> labels, const SplitRatios& ratios, std::uint64_t seed) {
  if (!ratios.valid()) throw std::invalid_argument("stratified_split: ratios must be positive and sum to 1");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  std::mt19937_64 rng(seed);
  SplitIndices out;
  for (auto& [cls, idx] : by_class) {
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n = static_cast<double>(idx.size());
    auto n_test = static_cast<std::size_t>(std::llround(n * ratios.test));
    auto n_val = static_cast<std::size_t>(std::llround(n * ratios.val));
    if (n_test + n_val >= idx.size()) {
      throw std::invalid_argument("stratified_split: class " + std::to_string(cls) + " has only " +
                                  std::to_string(idx.size()) + " examples, none left for training");
    }
    out.test.insert(out.test.end(), idx.begin(), idx.begin() + n_test);
    out.val.insert(out.val.end(), idx.begin() + n_test, idx.begin() + n_test + n_val);
    out.train.insert(out.train.end(), idx.begin() + n_test + n_val, idx.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

struct TrainingCurves {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::vector<double> val_accuracy;
  int best_epoch = -1;
};

template <typename T>
struct FitResult {
  CnnModel<T> model;
  TrainingCurves curves;
};

template <typename T>
double accuracy(const CnnModel<T>& model, const LabeledWindows<T>& data) {
  if (data.size() == 0) return 0.0;
  const auto pred = cnn_predict(model, data);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) ok += pred[i] == data.y[i];
  return static_cast<double>(ok) / static_cast<double>(pred.size());
}

/// Mini-batch SGD with momentum on cross-entropy. Keeps the weights with the lowest
/// validation loss (training loss when `val` is empty) and stops after `patience`
/// epochs without improvement.
template <typename T>
FitResult<T> fit_cnn(const LabeledWindows<T>& train, const LabeledWindows<T>& val, int n_classes,
                     const TrainConfig& cfg) {
  if (!cfg.valid()) throw std::invalid_argument("fit_cnn: invalid training config");
  if (train.size() == 0) throw std::invalid_argument("fit_cnn: empty training set");
  std::vector<int> seen(n_classes, 0);
  for (int y : train.y) {
    if (y < 0 || y >= n_classes) throw std::invalid_argument("fit_cnn: label out of range");
    seen[y] = 1;
  }
  for (int c = 0; c < n_classes; ++c)
    if (!seen[c]) throw std::invalid_argument("fit_cnn: class " + std::to_string(c) + " absent from training split");

  FitResult<T> res{build_cnn<T>(train.n_samples, n_classes, cfg.seed), {}};
  CnnModel<T>& model = res.model;
  CnnModel<T> best = model;
  double best_loss = std::numeric_limits<double>::infinity();
  int since_best = 0;

  std::vector<T> grad(model.parameter_count());
  std::vector<T> velocity(model.parameter_count(), T(0));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  CnnWorkspace<T> ws;
  ws.resize(model.shape());

  const T lr = static_cast<T>(cfg.learning_rate);
  const T mu = static_cast<T>(cfg.momentum);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::fill(grad.begin(), grad.end(), T(0));
      const T scale = T(1) / static_cast<T>(end - start);
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t i = order[b];
        const auto p = cnn_forward(model, train.input(i), ws);
        epoch_loss -= std::log(std::max(static_cast<double>(p[train.y[i]]), 1e-300));
        cnn_backward(model, train.input(i), train.y[i], ws, std::span<T>(grad), scale);
      }
      auto w = model.params();
      for (std::size_t k = 0; k < w.size(); ++k) {
        velocity[k] = mu * velocity[k] - lr * grad[k];
        w[k] += velocity[k];
      }
    }
    epoch_loss /= static_cast<double>(train.size());
    res.curves.train_loss.push_back(epoch_loss);

    double monitor = epoch_loss;
    if (val.size() > 0) {
      monitor = cnn_loss(model, val);
      res.curves.val_loss.push_back(monitor);
      res.curves.val_accuracy.push_back(accuracy(model, val));
    }
    if (!std::isfinite(monitor)) break;
    if (monitor < best_loss) {
      best_loss = monitor;
      best = model;
      res.curves.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  model = std::move(best);
  return res;
}

template <typename T>
struct TrainReport {
  CnnModel<T> model;
  TrainingCurves curves;
  SplitIndices split;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::vector<int> test_predictions;
};

/// Stratified split of `data`, fit, and accuracy on each part.
template <typename T>
TrainReport<T> cnn_train(const LabeledWindows<T>& data, int n_classes, const TrainConfig& cfg) {
  std::vector<int> count(n_classes, 0);
  for (int y : data.y) {
    if (y < 0 || y >= n_classes) throw std::invalid_argument("cnn_train: label out of range");
    ++count[y];
  }
  for (int c = 0; c < n_classes; ++c)
    if (count[c] < 2) throw std::invalid_argument("cnn_train: class " + std::to_string(c) + " has fewer than 2 examples");

  TrainReport<T> rep;
  rep.split = stratified_split(data.y, cfg.split, cfg.seed);
  const auto train = data.subset(rep.split.train);
  const auto val = data.subset(rep.split.val);
  const auto test = data.subset(rep.split.test);
  auto fit = fit_cnn(train, val, n_classes, cfg);
  rep.model = std::move(fit.model);
  rep.curves = std::move(fit.curves);
  rep.train_accuracy = accuracy(rep.model, train);
  rep.val_accuracy = accuracy(rep.model, val);
  rep.test_predictions = cnn_predict(rep.model, test);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < test.size(); ++i) ok += rep.test_predictions[i] == test.y[i];
  rep.test_accuracy = test.size() ? static_cast<double>(ok) / static_cast<double>(test.size()) : 0.0;
  return rep;
}

}  // namespace budsid
