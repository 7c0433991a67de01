#pragma once

// Evaluation regimes (general, individual, leave-one-participant-out), window
// sweeps and report assembly.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "budsid/cnn.hpp"
#include "budsid/dataset.hpp"
#include "budsid/magsim.hpp"
#include "budsid/pipeline.hpp"
#include "budsid/quant.hpp"
#include "budsid/svm.hpp"
#include "budsid/trace_io.hpp"
#include "budsid/train.hpp"

namespace budsid {

enum class ClassifierKind { cnn, svm };
enum class Regime { general, individual, loocv };

inline constexpr std::string_view to_string(ClassifierKind k) { return k == ClassifierKind::cnn ? "cnn" : "svm"; }
inline ClassifierKind classifier_from_string(std::string_view s) {
  if (s == "cnn") return ClassifierKind::cnn;
  if (s == "svm") return ClassifierKind::svm;
  throw std::invalid_argument("unknown classifier: " + std::string(s));
}
inline constexpr std::string_view to_string(Regime r) {
  return r == Regime::general ? "general" : (r == Regime::individual ? "individual" : "loocv");
}
inline Regime regime_from_string(std::string_view s) {
  if (s == "general") return Regime::general;
  if (s == "individual") return Regime::individual;
  if (s == "loocv") return Regime::loocv;
  throw std::invalid_argument("unknown regime: " + std::string(s));
}

// ---------------------------------------------------------------------------
// Pair validation

enum class PairVerdict { accepted, rejected };

/// Accepted iff the second press follows the first by at most 1 s (inclusive).
inline PairVerdict validate_pair(const std::vector<TouchEvent>& events, double max_gap_s = 1.0) {
  std::vector<double> presses;
  for (const auto& e : events)
    if (e.kind == TouchKind::press) presses.push_back(e.time);
  if (presses.size() != 2)
    throw std::invalid_argument("validate_pair: expected 2 presses, got " + std::to_string(presses.size()));
  return presses[1] - presses[0] <= max_gap_s + 1e-12 ? PairVerdict::accepted : PairVerdict::rejected;
}

// ---------------------------------------------------------------------------
// Configuration

struct EvalConfig {
  ClassifierKind classifier = ClassifierKind::cnn;
  WindowConfig window{40, 40};
  TrainConfig train = single_tap_config();
  SvmGrid grid{};
  LinkProfile link = single_tap_link();
  std::uint64_t seed = 7;
  std::optional<Posture> posture;  // single-tap filter
  std::optional<Hand> hand;        // filter
  int threads = 1;
};

/// Window, split and link defaults for a design.
inline EvalConfig default_eval_config(DesignKind kind) {
  EvalConfig c;
  if (kind == DesignKind::double_tap) {
    c.window = {50, 50};
    c.train = double_tap_config();
    c.link = double_tap_link();
  }
  return c;
}

// ---------------------------------------------------------------------------
// Trials in memory

struct TrialSet {
  DesignKind kind = DesignKind::single_tap;
  int n_participants = 0;
  std::vector<RawTrace> traces;

  int n_classes() const { return kind == DesignKind::single_tap ? 3 : 9; }
};

inline TrialSet simulate_trials(const DesignSpec& design, const PopulationParams& pop, std::uint64_t seed) {
  TrialSet set{design.kind, design.participants, {}};
  const auto profiles = sample_population(design.participants, pop, seed);
  const auto specs = enumerate_trials(design, seed);
  set.traces.reserve(specs.size());
  for (const auto& s : specs) set.traces.push_back(simulate_spec(s, profiles[s.participant_id]));
  return set;
}

inline TrialSet load_trials(const DatasetManifest& m) {
  TrialSet set{m.design.kind, m.design.participants, {}};
  set.traces.reserve(m.records.size());
  for (const auto& r : m.records) set.traces.push_back(read_trace(m.root / r.path));
  return set;
}

// ---------------------------------------------------------------------------
// Preprocessing

/// One trial after the link and forward-fill, ready to be windowed at any size.
struct FilledTrial {
  UniformSeries series;
  double center = 0.0;
  int label = 0;
  int participant = 0;
  Hand hand = Hand::right;
  bool ring_inverted = false;
};

struct FilledSet {
  DesignKind kind = DesignKind::single_tap;
  int n_classes = 3;
  std::vector<FilledTrial> trials;
  std::vector<std::size_t> rejected;  // trace indices failing validate_pair
};

/// Window centre: touch centre for single taps, mean of both touch centres for pairs.
inline double window_center(const RawTrace& tr) {
  const auto centers = touch_centers(tr.touch_events);
  if (centers.empty()) throw std::invalid_argument("window_center: trace has no complete touch");
  return std::accumulate(centers.begin(), centers.end(), 0.0) / static_cast<double>(centers.size());
}

/// Applies filters, the lossy link (seeded per trial) and forward-fill.
inline FilledSet receive_trials(const TrialSet& set, const EvalConfig& cfg) {
  FilledSet out{set.kind, set.n_classes(), {}, {}};
  for (std::size_t i = 0; i < set.traces.size(); ++i) {
    const RawTrace& tr = set.traces[i];
    if (const auto* tap = std::get_if<TapLabel>(&tr.label); tap && cfg.posture && tap->posture != *cfg.posture) continue;
    if (cfg.hand && tr.hand != *cfg.hand) continue;
    if (set.kind == DesignKind::double_tap && validate_pair(tr.touch_events) == PairVerdict::rejected) {
      out.rejected.push_back(i);
      continue;
    }
    const auto rx = ble_channel(tr, cfg.link, mix_seed(cfg.seed ^ 0xb1e0b1e0ULL, tr.seed));
    out.trials.push_back({forward_fill(rx, cfg.link.poll_rate), window_center(tr), class_index(tr.label),
                          tr.participant_id, tr.hand, tr.ring_inverted});
  }
  return out;
}

/// Windowed, compensated and normalized examples with their bookkeeping.
struct Examples {
  DesignKind kind = DesignKind::single_tap;
  int n_classes = 3;
  WindowConfig window{};
  std::vector<Window> windows;
  std::vector<int> labels;
  std::vector<int> participants;

  std::size_t size() const { return labels.size(); }
};

inline Examples make_examples(const FilledSet& filled, const WindowConfig& window) {
  Examples ex{filled.kind, filled.n_classes, window, {}, {}, {}};
  ex.windows.reserve(filled.trials.size());
  for (const auto& t : filled.trials) {
    ex.windows.push_back(
        minmax_normalize(polarity_compensate(extract_window(t.series, t.center, window), t.hand, t.ring_inverted)));
    ex.labels.push_back(t.label);
    ex.participants.push_back(t.participant);
  }
  return ex;
}

inline LabeledWindows<float> cnn_inputs(const Examples& ex, const std::vector<std::size_t>& rows) {
  LabeledWindows<float> out;
  out.n_samples = ex.window.total();
  for (std::size_t r : rows) out.push_back(window_input<float>(ex.windows[r]), ex.labels[r]);
  return out;
}

inline FeatureVector example_features(const Examples& ex, std::size_t r) {
  return ex.kind == DesignKind::double_tap ? double_tap_features(ex.windows[r]) : stat_features(ex.windows[r]);
}

// ---------------------------------------------------------------------------
// Reports

struct ConfusionMatrix {
  int n_classes = 0;
  std::vector<std::size_t> counts;  // row = true class, column = predicted

  explicit ConfusionMatrix(int n = 0) : n_classes(n), counts(static_cast<std::size_t>(n) * n, 0) {}

  void add(int truth, int predicted) { ++counts[static_cast<std::size_t>(truth) * n_classes + predicted]; }
  std::size_t at(int truth, int predicted) const { return counts[static_cast<std::size_t>(truth) * n_classes + predicted]; }
  std::size_t row_sum(int truth) const {
    std::size_t s = 0;
    for (int p = 0; p < n_classes; ++p) s += at(truth, p);
    return s;
  }
  std::size_t total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }
  std::size_t trace() const {
    std::size_t s = 0;
    for (int c = 0; c < n_classes; ++c) s += at(c, c);
    return s;
  }
  double accuracy() const { return total() ? static_cast<double>(trace()) / static_cast<double>(total()) : 0.0; }
  std::vector<double> row_normalized() const {
    std::vector<double> out(counts.size(), 0.0);
    for (int t = 0; t < n_classes; ++t) {
      const auto rs = row_sum(t);
      for (int p = 0; p < n_classes; ++p)
        out[static_cast<std::size_t>(t) * n_classes + p] = rs ? static_cast<double>(at(t, p)) / static_cast<double>(rs) : 0.0;
    }
    return out;
  }
  ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
    for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += o.counts[i];
    return *this;
  }
};

struct ModelResult {
  std::string name;
  int participant = -1;  // held-out or owning participant; -1 for the pooled model
  std::vector<int> train_participants;
  std::vector<int> test_participants;
  std::size_t n_train = 0, n_val = 0, n_test = 0;
  std::vector<std::size_t> test_class_counts;
  ConfusionMatrix confusion;
  double accuracy = 0.0;
  int best_epoch = -1;     // cnn
  double svm_c = 0.0;      // svm
  double svm_gamma = 0.0;  // svm
  double svm_cv_accuracy = 0.0;
};

struct EvalReport {
  Regime regime = Regime::general;
  ClassifierKind classifier = ClassifierKind::cnn;
  DesignKind design = DesignKind::single_tap;
  WindowConfig window{};
  std::uint64_t seed = 0;
  int n_classes = 0;
  std::vector<ModelResult> models;
  ConfusionMatrix confusion;  // summed over models
  double accuracy = 0.0;      // trace / total of the summed confusion
  double mean_accuracy = 0.0;
  double sd_accuracy = 0.0;  // sample sd across models
  std::vector<int> skipped_participants;
  std::vector<std::string> warnings;
  std::size_t rejected_trials = 0;
};

inline void finalize(EvalReport& rep) {
  rep.confusion = ConfusionMatrix(rep.n_classes);
  for (const auto& m : rep.models) rep.confusion += m.confusion;
  rep.accuracy = rep.confusion.accuracy();
  const auto n = static_cast<double>(rep.models.size());
  rep.mean_accuracy = 0.0;
  for (const auto& m : rep.models) rep.mean_accuracy += m.accuracy;
  rep.mean_accuracy = rep.models.empty() ? 0.0 : rep.mean_accuracy / n;
  double ss = 0.0;
  for (const auto& m : rep.models) ss += (m.accuracy - rep.mean_accuracy) * (m.accuracy - rep.mean_accuracy);
  rep.sd_accuracy = rep.models.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
}

inline std::vector<std::string> class_names(DesignKind kind) {
  const std::vector<std::string> fingers{"index", "middle", "ring"};
  if (kind == DesignKind::single_tap) return fingers;
  std::vector<std::string> out;
  for (const auto& a : fingers)
    for (const auto& b : fingers) out.push_back(a + "-" + b);
  return out;
}

inline nlohmann::json confusion_json(const ConfusionMatrix& cm) {
  nlohmann::json counts = nlohmann::json::array(), norm = nlohmann::json::array();
  const auto rn = cm.row_normalized();
  for (int t = 0; t < cm.n_classes; ++t) {
    nlohmann::json row = nlohmann::json::array(), nrow = nlohmann::json::array();
    for (int p = 0; p < cm.n_classes; ++p) {
      row.push_back(cm.at(t, p));
      nrow.push_back(rn[static_cast<std::size_t>(t) * cm.n_classes + p]);
    }
    counts.push_back(row);
    norm.push_back(nrow);
  }
  return {{"counts", counts}, {"row_normalized", norm}};
}

inline nlohmann::json report_json(const EvalReport& r) {
  nlohmann::json models = nlohmann::json::array(), provenance = nlohmann::json::array();
  for (const auto& m : r.models) {
    nlohmann::json j = {{"name", m.name},
                        {"participant", m.participant},
                        {"accuracy", m.accuracy},
                        {"n_train", m.n_train},
                        {"n_val", m.n_val},
                        {"n_test", m.n_test},
                        {"test_class_counts", m.test_class_counts},
                        {"confusion", confusion_json(m.confusion)}};
    if (r.classifier == ClassifierKind::cnn) {
      j["best_epoch"] = m.best_epoch;
    } else {
      j["svm_c"] = m.svm_c;
      j["svm_gamma"] = m.svm_gamma;
      j["svm_cv_accuracy"] = m.svm_cv_accuracy;
    }
    models.push_back(j);
    provenance.push_back({{"model", m.name},
                          {"train_participants", m.train_participants},
                          {"test_participants", m.test_participants}});
  }
  return {{"regime", to_string(r.regime)},
          {"classifier", to_string(r.classifier)},
          {"design", to_string(r.design)},
          {"window", {{"n_before", r.window.n_before}, {"n_after", r.window.n_after}}},
          {"seed", r.seed},
          {"class_names", class_names(r.design)},
          {"accuracy", r.accuracy},
          {"mean_accuracy", r.mean_accuracy},
          {"sd_accuracy", r.sd_accuracy},
          {"model_count", r.models.size()},
          {"models", models},
          {"confusion", confusion_json(r.confusion)},
          {"skipped_participants", r.skipped_participants},
          {"rejected_trials", r.rejected_trials},
          {"warnings", r.warnings},
          {"provenance", provenance}};
}

inline std::string confusion_csv(const ConfusionMatrix& cm, DesignKind kind) {
  const auto names = class_names(kind);
  std::ostringstream os;
  os << "true\\predicted";
  for (int p = 0; p < cm.n_classes; ++p) os << ',' << names[p];
  os << '\n';
  for (int t = 0; t < cm.n_classes; ++t) {
    os << names[t];
    for (int p = 0; p < cm.n_classes; ++p) os << ',' << cm.at(t, p);
    os << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Regimes

/// The model a regime trained, when the caller wants to keep it.
struct TrainedModel {
  std::optional<CnnModel<float>> cnn;
  std::optional<SvmModel> svm;
  std::vector<std::size_t> test_rows;
};

namespace detail {

/// Runs `fn(i)` for i in [0, n) on up to `threads` workers; each call owns its own output slot.
inline void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline std::vector<int> participants_of(const Examples& ex, const std::vector<std::size_t>& rows) {
  std::set<int> s;
  for (std::size_t r : rows) s.insert(ex.participants[r]);
  return {s.begin(), s.end()};
}

inline std::vector<std::size_t> pick(const std::vector<std::size_t>& rows, const std::vector<std::size_t>& idx) {
  std::vector<std::size_t> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(rows[i]);
  return out;
}

/// Splits `pool` rows into train/val (and test when `test_rows` is empty) and fits one model.
inline ModelResult fit_and_test(const Examples& ex, const std::vector<std::size_t>& pool,
                                std::optional<std::vector<std::size_t>> test_rows, const EvalConfig& cfg,
                                std::uint64_t seed, TrainedModel* keep = nullptr) {
  std::vector<int> pool_labels;
  for (std::size_t r : pool) pool_labels.push_back(ex.labels[r]);

  SplitRatios ratios = cfg.train.split;
  if (test_rows) {
    const double tv = ratios.train + ratios.val;
    ratios = {ratios.train / tv, ratios.val / tv, 0.0};
  }
  const auto split = stratified_split(pool_labels, ratios, seed);
  const auto train_rows = pick(pool, split.train);
  const auto val_rows = pick(pool, split.val);
  const auto tests = test_rows ? *test_rows : pick(pool, split.test);

  ModelResult res;
  res.n_train = train_rows.size();
  res.n_val = val_rows.size();
  res.n_test = tests.size();
  res.confusion = ConfusionMatrix(ex.n_classes);
  res.test_class_counts.assign(ex.n_classes, 0);
  for (std::size_t r : tests) ++res.test_class_counts[ex.labels[r]];
  {
    auto tr = train_rows;
    tr.insert(tr.end(), val_rows.begin(), val_rows.end());
    res.train_participants = participants_of(ex, tr);
    res.test_participants = participants_of(ex, tests);
  }

  std::vector<int> predicted;
  if (cfg.classifier == ClassifierKind::cnn) {
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    auto fit = fit_cnn(cnn_inputs(ex, train_rows), cnn_inputs(ex, val_rows), ex.n_classes, tc);
    res.best_epoch = fit.curves.best_epoch;
    predicted = cnn_predict(fit.model, cnn_inputs(ex, tests));
    if (keep) keep->cnn = std::move(fit.model);
  } else {
    // Grid search runs its own k-fold CV over train + val.
    auto rows = train_rows;
    rows.insert(rows.end(), val_rows.begin(), val_rows.end());
    std::sort(rows.begin(), rows.end());
    std::vector<FeatureVector> x;
    std::vector<int> y;
    for (std::size_t r : rows) {
      x.push_back(example_features(ex, r));
      y.push_back(ex.labels[r]);
    }
    const auto model = svm_train(x, y, cfg.grid, cfg.train.folds, seed);
    res.svm_c = model.c;
    res.svm_gamma = model.gamma;
    res.svm_cv_accuracy = model.cv_accuracy;
    for (std::size_t r : tests) predicted.push_back(svm_predict(model, example_features(ex, r)));
    if (keep) keep->svm = model;
  }
  if (keep) keep->test_rows = tests;
  for (std::size_t i = 0; i < tests.size(); ++i) res.confusion.add(ex.labels[tests[i]], predicted[i]);
  res.accuracy = res.confusion.accuracy();
  return res;
}

inline EvalReport report_header(const Examples& ex, Regime regime, const EvalConfig& cfg) {
  EvalReport rep;
  rep.regime = regime;
  rep.classifier = cfg.classifier;
  rep.design = ex.kind;
  rep.window = ex.window;
  rep.seed = cfg.seed;
  rep.n_classes = ex.n_classes;
  rep.confusion = ConfusionMatrix(ex.n_classes);
  return rep;
}

inline std::map<int, std::vector<std::size_t>> rows_by_participant(const Examples& ex) {
  std::map<int, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < ex.size(); ++i) out[ex.participants[i]].push_back(i);
  return out;
}

}  // namespace detail

/// One model on all participants pooled.
inline EvalReport run_general(const Examples& ex, const EvalConfig& cfg, TrainedModel* keep = nullptr) {
  if (ex.size() == 0) throw std::invalid_argument("run_general: no examples");
  auto rep = detail::report_header(ex, Regime::general, cfg);
  std::vector<std::size_t> all(ex.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  auto res = detail::fit_and_test(ex, all, std::nullopt, cfg, cfg.seed, keep);
  res.name = "general";
  rep.models.push_back(std::move(res));
  finalize(rep);
  return rep;
}

/// One model per participant on their own data. Undersized participants are skipped.
inline EvalReport run_individual(const Examples& ex, const EvalConfig& cfg) {
  auto rep = detail::report_header(ex, Regime::individual, cfg);
  const auto groups = detail::rows_by_participant(ex);
  std::vector<int> ids;
  for (const auto& [p, rows] : groups) ids.push_back(p);
  std::vector<std::optional<ModelResult>> slots(ids.size());
  std::vector<std::string> skip_reason(ids.size());

  detail::parallel_for(ids.size(), cfg.threads, [&](std::size_t k) {
    const auto& rows = groups.at(ids[k]);
    std::vector<int> count(ex.n_classes, 0);
    for (std::size_t r : rows) ++count[ex.labels[r]];
    const int need = cfg.classifier == ClassifierKind::svm ? std::max(2, cfg.train.folds) : 2;
    for (int c = 0; c < ex.n_classes; ++c) {
      if (count[c] < need) {
        skip_reason[k] = "participant " + std::to_string(ids[k]) + " skipped: class " + std::to_string(c) + " has " +
                         std::to_string(count[c]) + " examples (needs " + std::to_string(need) + ")";
        return;
      }
      if (std::llround(count[c] * cfg.train.split.test) < 1) {
        skip_reason[k] = "participant " + std::to_string(ids[k]) + " skipped: class " + std::to_string(c) + " has " +
                         std::to_string(count[c]) + " examples, too few for a test split";
        return;
      }
    }
    try {
      auto res = detail::fit_and_test(ex, rows, std::nullopt, cfg, mix_seed(cfg.seed, 100 + static_cast<std::uint64_t>(ids[k])));
      res.name = "participant-" + std::to_string(ids[k]);
      res.participant = ids[k];
      slots[k] = std::move(res);
    } catch (const std::invalid_argument& e) {
      skip_reason[k] = "participant " + std::to_string(ids[k]) + " skipped: " + e.what();
    }
  });
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (slots[k]) {
      rep.models.push_back(std::move(*slots[k]));
    } else {
      rep.skipped_participants.push_back(ids[k]);
      rep.warnings.push_back(skip_reason[k]);
    }
  }
  finalize(rep);
  return rep;
}

/// Leave-one-participant-out: fold p trains on everyone else and tests on p only.
inline EvalReport run_loocv(const Examples& ex, const EvalConfig& cfg) {
  const auto groups = detail::rows_by_participant(ex);
  if (groups.size() < 2) throw std::invalid_argument("run_loocv: need at least 2 participants");
  auto rep = detail::report_header(ex, Regime::loocv, cfg);
  std::vector<int> ids;
  for (const auto& [p, rows] : groups) ids.push_back(p);
  std::vector<ModelResult> slots(ids.size());

  detail::parallel_for(ids.size(), cfg.threads, [&](std::size_t k) {
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < ex.size(); ++i)
      if (ex.participants[i] != ids[k]) pool.push_back(i);
    auto res = detail::fit_and_test(ex, pool, groups.at(ids[k]), cfg, mix_seed(cfg.seed, 10000 + static_cast<std::uint64_t>(ids[k])));
    res.name = "holdout-" + std::to_string(ids[k]);
    res.participant = ids[k];
    slots[k] = std::move(res);
  });
  rep.models = std::move(slots);
  finalize(rep);
  return rep;
}

inline EvalReport run_regime(Regime regime, const Examples& ex, const EvalConfig& cfg) {
  switch (regime) {
    case Regime::general: return run_general(ex, cfg);
    case Regime::individual: return run_individual(ex, cfg);
    case Regime::loocv: return run_loocv(ex, cfg);
  }
  throw std::invalid_argument("run_regime: unknown regime");
}

/// True when no fold's training participants include one of its test participants.
inline bool loocv_disjoint(const EvalReport& rep) {
  for (const auto& m : rep.models)
    for (int p : m.test_participants)
      if (std::binary_search(m.train_participants.begin(), m.train_participants.end(), p)) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Window sweep

inline std::vector<WindowConfig> default_sweep_configs() {
  return {{30, 30}, {40, 40}, {50, 50}, {30, 0}, {40, 0}, {50, 0}, {0, 30}, {0, 40}, {0, 50}};
}

inline double round_seconds(const WindowConfig& w) { return std::round(w.seconds() * 100.0) / 100.0; }

struct SweepRow {
  WindowConfig window{};
  double seconds = 0.0;
  std::optional<double> accuracy;
  std::string error;
};

using SweepTable = std::vector<SweepRow>;

/// One general-model run per window config; coverage failures become error rows.
inline SweepTable window_sweep(const FilledSet& filled, const std::vector<WindowConfig>& configs, const EvalConfig& cfg) {
  if (configs.empty()) throw std::invalid_argument("window_sweep: no window configs");
  SweepTable table(configs.size());
  detail::parallel_for(configs.size(), cfg.threads, [&](std::size_t k) {
    SweepRow& row = table[k];
    row.window = configs[k];
    row.seconds = round_seconds(configs[k]);
    try {
      EvalConfig c = cfg;
      c.window = configs[k];
      c.threads = 1;
      row.accuracy = run_general(make_examples(filled, configs[k]), c).accuracy;
    } catch (const std::out_of_range& e) {
      row.error = e.what();
    }
  });
  return table;
}

inline std::string sweep_csv(const SweepTable& t) {
  std::ostringstream os;
  os << "n_before,n_after,seconds,accuracy,error\n";
  for (const auto& r : t) {
    char secs[32];
    std::snprintf(secs, sizeof secs, "%.2f", r.seconds);
    os << r.window.n_before << ',' << r.window.n_after << ',' << secs << ','
       << (r.accuracy ? format_double(*r.accuracy) : std::string()) << ',' << r.error << '\n';
  }
  return os.str();
}

}  // namespace budsid
