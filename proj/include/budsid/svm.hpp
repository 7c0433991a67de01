#pragma once

// RBF-kernel support vector machine: SMO dual solver with second-order working
// set selection, one-vs-one multiclass voting, and k-fold grid search.

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

namespace budsid {

struct SvmGrid {
  std::vector<double> c_values{0.1, 1.0, 10.0, 100.0};
  std::vector<double> gamma_values{0.01, 0.1, 1.0 / 18.0, 1.0};

  bool valid() const {
    const auto pos = [](const std::vector<double>& v) {
      return !v.empty() && std::all_of(v.begin(), v.end(), [](double x) { return x > 0.0 && std::isfinite(x); });
    };
    return pos(c_values) && pos(gamma_values);
  }
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline double rbf_kernel(std::span<const double> a, std::span<const double> b, double gamma) {
  return std::exp(-gamma * squared_distance(a, b));
}

struct BinarySolution {
  std::vector<double> alpha;
  double rho = 0.0;  // decision = sum alpha_i y_i K(x_i, x) - rho
  long iterations = 0;
  bool converged = false;
};

/// Solves min 1/2 a'Qa - e'a s.t. 0 <= a_i <= C, y'a = 0 with Q_ij = y_i y_j K_ij.
/// `kernel` is the dense n x n kernel matrix, row-major. Stops when the maximal
/// KKT violation drops below `tol`.
inline BinarySolution smo_solve(std::span<const double> kernel, std::span<const int> y, double c, double tol = 1e-3) {
  const std::size_t n = y.size();
  if (kernel.size() != n * n) throw std::invalid_argument("smo_solve: kernel size mismatch");
  if (!(c > 0.0)) throw std::invalid_argument("smo_solve: C must be positive");
  constexpr double tau = 1e-12;
  BinarySolution sol;
  sol.alpha.assign(n, 0.0);
  std::vector<double> grad(n, -1.0);
  auto& a = sol.alpha;
  const auto K = [&](std::size_t i, std::size_t j) { return kernel[i * n + j]; };
  const long max_iter = std::max<long>(10000000L, 100L * static_cast<long>(n));

  for (sol.iterations = 0; sol.iterations < max_iter; ++sol.iterations) {
    double gmax = -std::numeric_limits<double>::infinity();
    double gmax2 = -std::numeric_limits<double>::infinity();
    std::ptrdiff_t i = -1;
    for (std::size_t t = 0; t < n; ++t) {
      if (y[t] == 1) {
        if (a[t] < c && -grad[t] >= gmax) { gmax = -grad[t]; i = static_cast<std::ptrdiff_t>(t); }
      } else {
        if (a[t] > 0.0 && grad[t] >= gmax) { gmax = grad[t]; i = static_cast<std::ptrdiff_t>(t); }
      }
    }
    std::ptrdiff_t j = -1;
    double obj_min = std::numeric_limits<double>::infinity();
    if (i >= 0) {
      const auto ui = static_cast<std::size_t>(i);
      for (std::size_t t = 0; t < n; ++t) {
        const double qit = y[ui] * y[t] * K(ui, t);
        if (y[t] == 1) {
          if (a[t] > 0.0) {
            const double diff = gmax + grad[t];
            gmax2 = std::max(gmax2, grad[t]);
            if (diff > 0.0) {
              const double quad = std::max(K(ui, ui) + K(t, t) - 2.0 * y[ui] * qit, tau);
              const double obj = -(diff * diff) / quad;
              if (obj <= obj_min) { obj_min = obj; j = static_cast<std::ptrdiff_t>(t); }
            }
          }
        } else {
          if (a[t] < c) {
            const double diff = gmax - grad[t];
            gmax2 = std::max(gmax2, -grad[t]);
            if (diff > 0.0) {
              const double quad = std::max(K(ui, ui) + K(t, t) + 2.0 * y[ui] * qit, tau);
              const double obj = -(diff * diff) / quad;
              if (obj <= obj_min) { obj_min = obj; j = static_cast<std::ptrdiff_t>(t); }
            }
          }
        }
      }
    }
    if (i < 0 || j < 0 || gmax + gmax2 < tol) {
      sol.converged = true;
      break;
    }

    const auto ui = static_cast<std::size_t>(i), uj = static_cast<std::size_t>(j);
    const double qij = y[ui] * y[uj] * K(ui, uj);
    const double old_ai = a[ui], old_aj = a[uj];
    if (y[ui] != y[uj]) {
      const double quad = std::max(K(ui, ui) + K(uj, uj) + 2.0 * qij, tau);
      const double delta = (-grad[ui] - grad[uj]) / quad;
      const double diff = a[ui] - a[uj];
      a[ui] += delta;
      a[uj] += delta;
      if (diff > 0.0) {
        if (a[uj] < 0.0) { a[uj] = 0.0; a[ui] = diff; }
      } else {
        if (a[ui] < 0.0) { a[ui] = 0.0; a[uj] = -diff; }
      }
      if (diff > 0.0) {
        if (a[ui] > c) { a[ui] = c; a[uj] = c - diff; }
      } else {
        if (a[uj] > c) { a[uj] = c; a[ui] = c + diff; }
      }
    } else {
      const double quad = std::max(K(ui, ui) + K(uj, uj) - 2.0 * qij, tau);
      const double delta = (grad[ui] - grad[uj]) / quad;
      const double sum = a[ui] + a[uj];
      a[ui] -= delta;
      a[uj] += delta;
      if (sum > c) {
        if (a[ui] > c) { a[ui] = c; a[uj] = sum - c; }
      } else {
        if (a[uj] < 0.0) { a[uj] = 0.0; a[ui] = sum; }
      }
      if (sum > c) {
        if (a[uj] > c) { a[uj] = c; a[ui] = sum - c; }
      } else {
        if (a[ui] < 0.0) { a[ui] = 0.0; a[uj] = sum; }
      }
    }
    const double dai = a[ui] - old_ai, daj = a[uj] - old_aj;
    for (std::size_t t = 0; t < n; ++t)
      grad[t] += y[t] * (y[ui] * K(ui, t) * dai + y[uj] * K(uj, t) * daj);
  }

  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double sum_free = 0.0;
  long n_free = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y[t] * grad[t];
    if (a[t] >= c) {
      if (y[t] == -1) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else if (a[t] <= 0.0) {
      if (y[t] == 1) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  sol.rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : 0.5 * (ub + lb);
  return sol;
}

/// One binary machine of the one-vs-one ensemble; positive decision votes `class_pos`.
struct BinarySvm {
  int class_pos = 0;
  int class_neg = 1;
  std::vector<std::vector<double>> support_vectors;
  std::vector<double> coef;  // alpha_i * y_i, within [-C, C]
  double rho = 0.0;

  double decision(std::span<const double> x, double gamma) const {
    double s = -rho;
    for (std::size_t i = 0; i < support_vectors.size(); ++i) s += coef[i] * rbf_kernel(support_vectors[i], x, gamma);
    return s;
  }
};

struct SvmModel {
  std::vector<int> classes;  // sorted class labels
  std::size_t n_features = 0;
  double gamma = 0.1;
  double c = 1.0;
  std::vector<BinarySvm> machines;  // pairs (classes[a], classes[b]) with a < b
  double cv_accuracy = 0.0;
};

namespace detail {

/// Squared distances between rows idx of `x`, row-major |idx| x |idx|.
inline std::vector<double> distance_matrix(const std::vector<std::vector<double>>& x, std::span<const std::size_t> idx) {
  const std::size_t n = idx.size();
  std::vector<double> d(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) d[i * n + j] = d[j * n + i] = squared_distance(x[idx[i]], x[idx[j]]);
  return d;
}

inline void kernel_from_distance(std::span<const double> dist, double gamma, std::vector<double>& out) {
  out.resize(dist.size());
  for (std::size_t k = 0; k < dist.size(); ++k) out[k] = std::exp(-gamma * dist[k]);
}

inline BinarySvm make_machine(const std::vector<std::vector<double>>& x, std::span<const std::size_t> idx,
                              std::span<const int> y, const BinarySolution& sol, int pos, int neg) {
  BinarySvm m;
  m.class_pos = pos;
  m.class_neg = neg;
  m.rho = sol.rho;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (sol.alpha[k] > 0.0) {
      m.support_vectors.push_back(x[idx[k]]);
      m.coef.push_back(sol.alpha[k] * y[k]);
    }
  }
  return m;
}

/// Trains every pairwise machine on the rows `rows` for each (C, gamma); result[c][g] is the machine list.
inline std::vector<std::vector<std::vector<BinarySvm>>> train_pairs(const std::vector<std::vector<double>>& x,
                                                                    std::span<const int> labels,
                                                                    std::span<const std::size_t> rows,
                                                                    const std::vector<int>& classes,
                                                                    const SvmGrid& grid) {
  std::vector<std::vector<std::vector<BinarySvm>>> out(
      grid.c_values.size(), std::vector<std::vector<BinarySvm>>(grid.gamma_values.size()));
  std::vector<double> kernel;
  for (std::size_t a = 0; a < classes.size(); ++a) {
    for (std::size_t b = a + 1; b < classes.size(); ++b) {
      std::vector<std::size_t> idx;
      std::vector<int> y;
      for (std::size_t r : rows) {
        if (labels[r] == classes[a]) { idx.push_back(r); y.push_back(1); }
        else if (labels[r] == classes[b]) { idx.push_back(r); y.push_back(-1); }
      }
      const auto dist = distance_matrix(x, idx);
      for (std::size_t g = 0; g < grid.gamma_values.size(); ++g) {
        kernel_from_distance(dist, grid.gamma_values[g], kernel);
        for (std::size_t ci = 0; ci < grid.c_values.size(); ++ci) {
          const auto sol = smo_solve(kernel, y, grid.c_values[ci]);
          out[ci][g].push_back(make_machine(x, idx, y, sol, classes[a], classes[b]));
        }
      }
    }
  }
  return out;
}

inline int vote(const std::vector<BinarySvm>& machines, const std::vector<int>& classes, std::span<const double> x,
                double gamma) {
  std::map<int, std::pair<int, double>> tally;  // class -> (votes, summed margin)
  for (int c : classes) tally[c] = {0, 0.0};
  for (const auto& m : machines) {
    const double f = m.decision(x, gamma);
    auto& pos = tally[m.class_pos];
    auto& neg = tally[m.class_neg];
    if (f > 0.0) ++pos.first; else ++neg.first;
    pos.second += f;
    neg.second -= f;
  }
  int best = classes.front();
  for (int c : classes) {
    const auto& t = tally[c];
    const auto& b = tally[best];
    if (t.first > b.first || (t.first == b.first && t.second > b.second)) best = c;
  }
  return best;
}

}  // namespace detail

/// One-vs-one vote; ties go to the larger summed decision margin.
inline int svm_predict(const SvmModel& model, std::span<const double> x) {
  if (x.size() != model.n_features)
    throw std::invalid_argument("svm_predict: feature vector has " + std::to_string(x.size()) + " values, model expects " +
                                std::to_string(model.n_features));
  return detail::vote(model.machines, model.classes, x, model.gamma);
}

/// Stratified k-fold assignment: fold id per row.
inline std::vector<int> stratified_folds(std::span<const int> labels, int folds, std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  std::mt19937_64 rng(seed);
  std::vector<int> out(labels.size(), 0);
  int offset = 0;
  for (auto& [cls, idx] : by_class) {
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t k = 0; k < idx.size(); ++k) out[idx[k]] = static_cast<int>((k + offset) % folds);
    offset += static_cast<int>(idx.size() % folds);
  }
  return out;
}

/// Fits a fixed (C, gamma) model on all rows.
inline SvmModel svm_fit(const std::vector<std::vector<double>>& features, std::span<const int> labels, double c,
                        double gamma) {
  if (features.empty() || features.size() != labels.size()) throw std::invalid_argument("svm_fit: bad training set");
  SvmModel model;
  model.classes.assign(labels.begin(), labels.end());
  std::sort(model.classes.begin(), model.classes.end());
  model.classes.erase(std::unique(model.classes.begin(), model.classes.end()), model.classes.end());
  if (model.classes.size() < 2) throw std::invalid_argument("svm_fit: need at least two classes");
  model.n_features = features.front().size();
  model.c = c;
  model.gamma = gamma;
  std::vector<std::size_t> rows(features.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  SvmGrid single{{c}, {gamma}};
  model.machines = std::move(detail::train_pairs(features, labels, rows, model.classes, single)[0][0]);
  return model;
}

/// Grid search over (C, gamma) by stratified k-fold CV accuracy, then refit on all rows.
/// Ties prefer smaller C, then smaller gamma.
inline SvmModel svm_train(const std::vector<std::vector<double>>& features, std::span<const int> labels,
                          const SvmGrid& grid, int folds, std::uint64_t seed = 0) {
  if (!grid.valid()) throw std::invalid_argument("svm_train: degenerate grid");
  if (folds < 2) throw std::invalid_argument("svm_train: need at least 2 folds");
  if (features.empty() || features.size() != labels.size()) throw std::invalid_argument("svm_train: bad training set");
  const std::size_t n_features = features.front().size();
  for (const auto& f : features)
    if (f.size() != n_features) throw std::invalid_argument("svm_train: ragged feature vectors");

  std::map<int, int> count;
  for (int y : labels) ++count[y];
  if (count.size() < 2) throw std::invalid_argument("svm_train: need at least two classes");
  for (const auto& [cls, n] : count)
    if (n < folds) throw std::invalid_argument("svm_train: class " + std::to_string(cls) + " has fewer examples than folds");
  std::vector<int> classes;
  for (const auto& [cls, n] : count) classes.push_back(cls);

  SvmGrid sorted = grid;
  std::sort(sorted.c_values.begin(), sorted.c_values.end());
  std::sort(sorted.gamma_values.begin(), sorted.gamma_values.end());

  const auto fold_of = stratified_folds(labels, folds, seed);
  std::vector<std::vector<std::size_t>> correct(sorted.c_values.size(), std::vector<std::size_t>(sorted.gamma_values.size(), 0));
  for (int f = 0; f < folds; ++f) {
    std::vector<std::size_t> train_rows, test_rows;
    for (std::size_t i = 0; i < labels.size(); ++i) (fold_of[i] == f ? test_rows : train_rows).push_back(i);
    const auto machines = detail::train_pairs(features, labels, train_rows, classes, sorted);
    for (std::size_t ci = 0; ci < sorted.c_values.size(); ++ci)
      for (std::size_t g = 0; g < sorted.gamma_values.size(); ++g)
        for (std::size_t r : test_rows)
          correct[ci][g] += detail::vote(machines[ci][g], classes, features[r], sorted.gamma_values[g]) == labels[r];
  }

  std::size_t best_c = 0, best_g = 0;
  for (std::size_t ci = 0; ci < sorted.c_values.size(); ++ci)
    for (std::size_t g = 0; g < sorted.gamma_values.size(); ++g)
      if (correct[ci][g] > correct[best_c][best_g]) { best_c = ci; best_g = g; }

  SvmModel model = svm_fit(features, labels, sorted.c_values[best_c], sorted.gamma_values[best_g]);
  model.cv_accuracy = static_cast<double>(correct[best_c][best_g]) / static_cast<double>(labels.size());
  return model;
}

}  // namespace budsid
