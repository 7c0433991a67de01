#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "budsid/svm.hpp"
#include "budsid/train.hpp"

using namespace budsid;

namespace {

// Layer-by-layer parameter sum for the conv/pool/dense/dense/softmax stack.
std::size_t count_oracle(std::size_t n_samples, std::size_t n_classes) {
  const std::size_t conv = 32 * 3 * 3 + 32;
  const std::size_t flat = 32 * (n_samples / 2);
  return conv + (flat * 128 + 128) + (128 * 32 + 32) + (32 * n_classes + n_classes);
}

// Class c raises channel c; n_classes <= 3.
LabeledWindows<double> blobs(int n_samples, int per_class, int n_classes, double sd, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sd);
  LabeledWindows<double> out;
  out.n_samples = n_samples;
  std::vector<double> in(static_cast<std::size_t>(n_samples) * kChannels);
  for (int c = 0; c < n_classes; ++c)
    for (int i = 0; i < per_class; ++i) {
      for (std::size_t k = 0; k < in.size(); ++k)
        in[k] = (static_cast<int>(k % kChannels) == c ? 0.9 : 0.1) + g(rng);
      out.push_back(in, c);
    }
  return out;
}

LabeledWindows<double> random_batch(int n_samples, int n_classes, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> cls(0, n_classes - 1);
  LabeledWindows<double> out;
  out.n_samples = n_samples;
  std::vector<double> in(static_cast<std::size_t>(n_samples) * kChannels);
  for (int i = 0; i < n; ++i) {
    for (auto& v : in) v = u(rng);
    out.push_back(in, cls(rng));
  }
  return out;
}

// Four clusters at the corners of a square, diagonal corners sharing a label.
void xor_set(std::vector<std::vector<double>>& x, std::vector<int>& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.1);
  const double cx[4] = {-1, 1, -1, 1}, cy[4] = {-1, 1, 1, -1};
  for (int q = 0; q < 4; ++q)
    for (int i = 0; i < 10; ++i) {
      x.push_back({cx[q] + g(rng), cy[q] + g(rng)});
      y.push_back(q < 2 ? 0 : 1);
    }
}

// Best accuracy any line w.x + b > 0 reaches, by brute force over directions and thresholds.
double best_linear_accuracy(const std::vector<std::vector<double>>& x, const std::vector<int>& y) {
  double best = 0.0;
  for (int k = 0; k < 360; ++k) {
    const double a = k * std::numbers::pi / 180.0;
    std::vector<double> proj;
    for (const auto& p : x) proj.push_back(std::cos(a) * p[0] + std::sin(a) * p[1]);
    std::vector<double> cuts = proj;
    cuts.push_back(-1e9);
    for (double t : cuts) {
      std::size_t ok = 0;
      for (std::size_t i = 0; i < x.size(); ++i) ok += (proj[i] > t) == (y[i] == 1);
      best = std::max(best, double(ok) / double(x.size()));
    }
  }
  return best;
}

}  // namespace

TEST(CnnShape, PublishedParameterCounts) {
  EXPECT_EQ(count_oracle(80, 3), 168515u);
  EXPECT_EQ(count_oracle(100, 9), 209673u);
  EXPECT_EQ(build_cnn<float>(80, 3, 1).parameter_count(), 168515u);
  EXPECT_EQ(build_cnn<float>(100, 9, 1).parameter_count(), 209673u);
}

TEST(CnnShape, CountMatchesOracleForAnyShape) {
  for (int n = 4; n <= 120; n += 2)
    for (int c = 2; c <= 10; ++c) {
      CnnShape s;
      s.n_samples = n;
      s.n_classes = c;
      EXPECT_EQ(parameter_count(s), count_oracle(n, c));
    }
}

TEST(CnnShape, InvalidDimensionsThrow) {
  EXPECT_THROW(build_cnn<float>(81, 3, 1), std::invalid_argument);
  EXPECT_THROW(build_cnn<float>(2, 3, 1), std::invalid_argument);
  EXPECT_THROW(build_cnn<float>(80, 1, 1), std::invalid_argument);
}

TEST(CnnShape, SeededInitIsDeterministicAndZeroMean) {
  const auto a = build_cnn<float>(80, 3, 5), b = build_cnn<float>(80, 3, 5), c = build_cnn<float>(80, 3, 6);
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(a == c);
  const auto w = a.tensor(Tensor::dense1_w);
  const double mean = std::accumulate(w.begin(), w.end(), 0.0) / double(w.size());
  EXPECT_NEAR(mean, 0.0, 1e-3);
  for (float v : a.tensor(Tensor::conv_b)) EXPECT_EQ(v, 0.0f);
}

TEST(CnnForward, ProbabilitiesSumToOne) {
  const auto m = build_cnn<double>(80, 3, 2);
  const auto batch = random_batch(80, 3, 20, 3);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto p = cnn_forward(m, batch.input(i));
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-6);
    for (double v : p) EXPECT_GE(v, 0.0);
  }
}

TEST(CnnForward, ZeroWeightsGiveUniformOutput) {
  CnnModel<double> m(CnnShape{100, 9});
  const auto batch = random_batch(100, 9, 1, 4);
  for (double v : cnn_forward(m, batch.input(0))) EXPECT_NEAR(v, 1.0 / 9.0, 1e-15);
}

TEST(CnnForward, PureFunction) {
  const auto m = build_cnn<float>(80, 3, 2);
  std::vector<float> in(240, 0.3f);
  EXPECT_EQ(cnn_forward<float>(m, in), cnn_forward<float>(m, in));
}

TEST(CnnForward, ShapeMismatchThrows) {
  const auto m = build_cnn<float>(80, 3, 2);
  std::vector<float> in(239, 0.3f);
  EXPECT_THROW(cnn_forward<float>(m, in), std::invalid_argument);
}

TEST(CnnForward, ConvolutionUsesSamePadding) {
  CnnShape s{8, 2};
  CnnModel<double> m(s);
  auto cw = m.tensor(Tensor::conv_w);
  // Filter 0 sums the left neighbour of channel 0 and the right neighbour of channel 2.
  cw[(0 * kChannels + 0) * 3 + 0] = 1.0;
  cw[(0 * kChannels + 2) * 3 + 2] = 1.0;
  std::vector<double> in(8 * kChannels);
  for (int t = 0; t < 8; ++t) {
    in[t * kChannels + 0] = t + 1;
    in[t * kChannels + 2] = 10 * (t + 1);
  }
  CnnWorkspace<double> ws;
  ws.resize(s);
  cnn_forward<double>(m, in, ws);
  for (int t = 0; t < 8; ++t) {
    const double left = t > 0 ? in[(t - 1) * kChannels] : 0.0;
    const double right = t < 7 ? in[(t + 1) * kChannels + 2] : 0.0;
    EXPECT_EQ(ws.conv[t * s.filters + 0], left + right);
  }
  for (int j = 0; j < 4; ++j)
    EXPECT_EQ(ws.pooled[j * s.filters], std::max(ws.conv[2 * j * s.filters], ws.conv[(2 * j + 1) * s.filters]));
}

TEST(GradCheck, RandomInitWithinTolerance) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto m = build_cnn<double>(20, 3, seed);
    const auto batch = random_batch(20, 3, 4, seed + 10);
    const auto r = grad_check(m, batch, 1e-5, seed);
    EXPECT_GE(r.checked, 200u);
    EXPECT_LE(r.max_relative_error, 1e-3) << "seed " << seed << " index " << r.worst_index;
  }
}

TEST(GradCheck, EpsilonOutOfRangeThrows) {
  const auto m = build_cnn<double>(8, 2, 1);
  const auto batch = random_batch(8, 2, 2, 1);
  EXPECT_THROW(grad_check(m, batch, 1e-2, 1), std::invalid_argument);
  EXPECT_THROW(grad_check(m, LabeledWindows<double>{8, {}, {}}, 1e-5, 1), std::invalid_argument);
}

TEST(GradCheck, UniformOutputGivesZeroOutputBiasGradient) {
  // All-zero network: probabilities are uniform. With every class equally represented,
  // the mean of p - onehot over the batch vanishes.
  CnnModel<double> m(CnnShape{8, 3});
  LabeledWindows<double> batch;
  batch.n_samples = 8;
  std::vector<double> in(24, 0.5);
  for (int c = 0; c < 3; ++c) batch.push_back(in, c);
  std::vector<double> grad(m.parameter_count(), 0.0);
  cnn_loss(m, batch, std::span<double>(grad));
  const auto off = m.layout()[static_cast<int>(Tensor::out_b)].offset;
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(grad[off + c], 0.0, 1e-15);
}

TEST(GradCheck, CentralDifferenceIsSecondOrder) {
  const auto m = build_cnn<double>(8, 2, 9);
  const auto batch = random_batch(8, 2, 3, 9);
  std::vector<double> grad(m.parameter_count(), 0.0);
  cnn_loss(m, batch, std::span<double>(grad));
  const std::size_t idx = m.layout()[static_cast<int>(Tensor::out_w)].offset + 1;
  const auto fd = [&](double eps) {
    auto p = m;
    p.params()[idx] += eps;
    const double up = cnn_loss(p, batch);
    p.params()[idx] -= 2 * eps;
    return (up - cnn_loss(p, batch)) / (2 * eps);
  };
  const double e1 = std::abs(fd(1e-3) - grad[idx]), e2 = std::abs(fd(2e-3) - grad[idx]);
  EXPECT_LT(std::abs(fd(2e-3) - fd(1e-3)), 1e-4);
  EXPECT_LT(e1, 1e-5);
  EXPECT_LT(e2, 1e-5);
}

TEST(Split, StratifiedProportions) {
  std::vector<int> y;
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 100; ++i) y.push_back(c);
  const auto s = stratified_split(y, {0.6, 0.2, 0.2}, 3);
  EXPECT_EQ(s.train.size(), 180u);
  EXPECT_EQ(s.val.size(), 60u);
  EXPECT_EQ(s.test.size(), 60u);
  std::vector<int> seen(300, 0);
  for (auto* part : {&s.train, &s.val, &s.test})
    for (auto i : *part) ++seen[i];
  for (int v : seen) EXPECT_EQ(v, 1);
  EXPECT_THROW(stratified_split(y, {0.5, 0.2, 0.2}, 3), std::invalid_argument);
}

TEST(Train, SeparableBlobsReachFullAccuracy) {
  const auto data = blobs(8, 40, 2, 0.05, 1);
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.seed = 3;
  const auto rep = cnn_train(data, 2, cfg);
  EXPECT_EQ(rep.test_accuracy, 1.0);
}

TEST(Train, DeterministicPerSeed) {
  const auto data = blobs(8, 20, 3, 0.1, 2);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 11;
  const auto a = cnn_train(data, 3, cfg), b = cnn_train(data, 3, cfg);
  EXPECT_TRUE(a.model == b.model);
  EXPECT_EQ(a.curves.train_loss, b.curves.train_loss);
}

TEST(Train, OneEpochLowersTrainingLoss) {
  const auto data = blobs(8, 30, 3, 0.1, 4);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.seed = 5;
  const double before = cnn_loss(build_cnn<double>(8, 3, cfg.seed), data);
  const auto fit = fit_cnn(data, LabeledWindows<double>{8, {}, {}}, 3, cfg);
  EXPECT_LT(cnn_loss(fit.model, data), before);
}

TEST(Train, MissingClassThrows) {
  auto data = blobs(8, 10, 2, 0.1, 4);
  TrainConfig cfg;
  EXPECT_THROW(fit_cnn(data, data, 3, cfg), std::invalid_argument);
  LabeledWindows<double> tiny = data.subset(std::vector<std::size_t>{0, 1, 2, 10});
  EXPECT_THROW(cnn_train(tiny, 2, cfg), std::invalid_argument);
}

TEST(Svm, SeparableSetCrossValidatesPerfectly) {
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 0.2);
  for (int i = 0; i < 20; ++i) {
    x.push_back({-2 + g(rng), g(rng)});
    y.push_back(0);
    x.push_back({2 + g(rng), g(rng)});
    y.push_back(1);
  }
  const auto m = svm_train(x, y, SvmGrid{}, 5, 1);
  EXPECT_EQ(m.cv_accuracy, 1.0);
  for (const auto& mach : m.machines)
    for (const auto& sv : mach.support_vectors) {
      const auto it = std::find(x.begin(), x.end(), sv);
      ASSERT_NE(it, x.end());
      EXPECT_EQ(svm_predict(m, sv), y[it - x.begin()]);
    }
}

TEST(Svm, XorNeedsTheKernel) {
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  xor_set(x, y, 2);
  EXPECT_NEAR(best_linear_accuracy(x, y), 0.75, 1e-12);
  const auto m = svm_fit(x, y, 10.0, 1.0);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < x.size(); ++i) ok += svm_predict(m, x[i]) == y[i];
  EXPECT_EQ(ok, x.size());
}

TEST(Svm, DualFeasibility) {
  std::vector<std::vector<double>> x;
  std::vector<int> lab;
  xor_set(x, lab, 3);
  std::vector<int> y;
  for (int l : lab) y.push_back(l == 0 ? 1 : -1);
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::vector<double> k;
  detail::kernel_from_distance(detail::distance_matrix(x, idx), 0.5, k);
  for (double c : {0.1, 1.0, 100.0}) {
    const auto sol = smo_solve(k, y, c);
    EXPECT_TRUE(sol.converged);
    double sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      EXPECT_GE(sol.alpha[i], 0.0);
      EXPECT_LE(sol.alpha[i], c);
      sum += sol.alpha[i] * y[i];
    }
    EXPECT_NEAR(sum, 0.0, 1e-6);
  }
}

TEST(Svm, CoefficientsBoxedAndMachinesNonEmpty) {
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.0, 0.6);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 15; ++i) {
      x.push_back({c + g(rng), -c + g(rng), g(rng)});
      y.push_back(c);
    }
  const auto m = svm_train(x, y, SvmGrid{}, 3, 4);
  EXPECT_EQ(m.machines.size(), 3u);
  for (const auto& mach : m.machines) {
    EXPECT_FALSE(mach.support_vectors.empty());
    for (double a : mach.coef) {
      EXPECT_GE(a, -m.c - 1e-12);
      EXPECT_LE(a, m.c + 1e-12);
    }
  }
}

TEST(Svm, TiesPreferSmallerCThenGamma) {
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  for (int i = 0; i < 10; ++i) {
    x.push_back({-5.0 - 0.1 * i});
    y.push_back(0);
    x.push_back({5.0 + 0.1 * i});
    y.push_back(1);
  }
  const auto m = svm_train(x, y, SvmGrid{{100.0, 1.0, 10.0}, {1.0, 0.1}}, 2, 0);
  EXPECT_EQ(m.c, 1.0);
  EXPECT_EQ(m.gamma, 0.1);
}

TEST(Svm, DuplicatePointLeavesPredictionsUnchanged) {
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  xor_set(x, y, 5);
  const auto a = svm_fit(x, y, 1.0, 0.5);
  x.push_back(x[3]);
  y.push_back(y[3]);
  const auto b = svm_fit(x, y, 1.0, 0.5);
  for (double u = -1.5; u <= 1.5; u += 0.25)
    for (double v = -1.5; v <= 1.5; v += 0.25) {
      const std::vector<double> p{u, v};
      EXPECT_NEAR(a.machines[0].decision(p, 0.5), b.machines[0].decision(p, 0.5), 1e-2);
      if (std::abs(a.machines[0].decision(p, 0.5)) > 0.05) {
        EXPECT_EQ(svm_predict(a, p), svm_predict(b, p));
      }
    }
}

TEST(Svm, ErrorsAndDeterminism) {
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  xor_set(x, y, 6);
  EXPECT_THROW(svm_train(x, y, SvmGrid{{}, {1.0}}, 5), std::invalid_argument);
  EXPECT_THROW(svm_train(x, y, SvmGrid{{-1.0}, {1.0}}, 5), std::invalid_argument);
  EXPECT_THROW(svm_train(x, y, SvmGrid{}, 1), std::invalid_argument);
  EXPECT_THROW(svm_train(x, y, SvmGrid{}, 25), std::invalid_argument);
  const auto m = svm_fit(x, y, 1.0, 1.0);
  EXPECT_THROW(svm_predict(m, std::vector<double>{1.0}), std::invalid_argument);
  const std::vector<double> p{0.3, -0.2};
  EXPECT_EQ(svm_predict(m, p), svm_predict(m, p));
}
