#pragma once

// Plain `key = value` run configuration. Blank lines and lines starting with
// '#' are ignored. Unknown keys are rejected so typos do not pass silently.
//
//   design         single-tap | double-tap
//   participants   participant count
//   reps           repetitions per design cell
//   seed           master seed (BUDSID_SEED in the environment overrides it)
//   classifier     cnn | svm
//   regime         general | individual | loocv
//   window         n_before/n_after, e.g. 40/40
//   split          train:val:test ratios, e.g. 0.6:0.2:0.2
//   folds epochs batch_size learning_rate momentum patience
//   svm.c          comma-separated C grid
//   svm.gamma      comma-separated gamma grid
//   link.rate      mean delivered rate in Hz; link.sd its per-second spread
//   posture hand   evaluation filters
//   scenario.sit scenario.stand scenario.walk scenario.pairs
//                  static | car | music | walking | rotating
//   noise_sigma    sensor noise in uT
//   threads        worker threads for folds and sweeps

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "budsid/dataset.hpp"
#include "budsid/harness.hpp"
#include "budsid/trace_io.hpp"

namespace budsid {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using KeyValues = std::map<std::string, std::string>;

inline const std::set<std::string>& known_config_keys() {
  static const std::set<std::string> keys{
      "design",        "participants", "reps",       "seed",           "classifier",     "regime",
      "window",        "split",        "folds",      "epochs",         "batch_size",     "learning_rate",
      "momentum",      "patience",     "svm.c",      "svm.gamma",      "link.rate",      "link.sd",
      "posture",       "hand",         "threads",    "scenario.sit",   "scenario.stand", "scenario.walk",
      "scenario.pairs", "noise_sigma"};
  return keys;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline KeyValues parse_config(const std::string& text, const std::string& origin = "config") {
  KeyValues kv;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (!known_config_keys().count(key)) throw ConfigError(origin + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
    if (value.empty()) throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty value for '" + key + "'");
    kv[key] = value;
  }
  return kv;
}

inline KeyValues load_config(const std::filesystem::path& path) {
  return parse_config(read_text(path), path.string());
}

namespace detail {

inline double to_double(const std::string& key, const std::string& v) {
  try {
    return parse_double(v);
  } catch (const std::invalid_argument&) {
    throw ConfigError("config key '" + key + "': not a number: " + v);
  }
}

inline long to_long(const std::string& key, const std::string& v) {
  const double d = to_double(key, v);
  if (d != static_cast<double>(static_cast<long>(d))) throw ConfigError("config key '" + key + "': not an integer: " + v);
  return static_cast<long>(d);
}

inline std::vector<double> to_list(const std::string& key, const std::string& v, char sep) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(to_double(key, trim(item)));
  return out;
}

template <typename F>
auto checked(const std::string& key, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

}  // namespace detail

inline WindowConfig parse_window(const std::string& v) {
  const auto slash = v.find('/');
  if (slash == std::string::npos) throw ConfigError("window must look like n_before/n_after, got " + v);
  WindowConfig w{static_cast<int>(detail::to_long("window", trim(v.substr(0, slash)))),
                 static_cast<int>(detail::to_long("window", trim(v.substr(slash + 1))))};
  if (!w.valid()) throw ConfigError("window needs non-negative sizes, not both zero: " + v);
  return w;
}

/// Seed precedence: explicit override, then BUDSID_SEED, then the config file, then `fallback`.
inline std::uint64_t resolve_seed(const KeyValues& kv, std::optional<std::uint64_t> override_seed,
                                  std::uint64_t fallback = 7) {
  if (override_seed) return *override_seed;
  if (const char* env = std::getenv("BUDSID_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument("trailing characters");
      return v;
    } catch (const std::exception&) {
      throw ConfigError(std::string("BUDSID_SEED is not an unsigned integer: ") + env);
    }
  }
  if (auto it = kv.find("seed"); it != kv.end()) return static_cast<std::uint64_t>(detail::to_long("seed", it->second));
  return fallback;
}

inline DesignSpec design_from_config(const KeyValues& kv, std::optional<DesignKind> kind_override = std::nullopt) {
  DesignKind kind = DesignKind::single_tap;
  if (auto it = kv.find("design"); it != kv.end()) kind = detail::checked("design", [&] { return design_from_string(it->second); });
  if (kind_override) kind = *kind_override;
  DesignSpec d = kind == DesignKind::single_tap ? single_tap_design() : double_tap_design();
  if (auto it = kv.find("participants"); it != kv.end()) d.participants = static_cast<int>(detail::to_long("participants", it->second));
  if (auto it = kv.find("reps"); it != kv.end()) d.reps = static_cast<int>(detail::to_long("reps", it->second));
  const auto scenario = [&](const char* key, ScenarioKind& slot) {
    if (auto it = kv.find(key); it != kv.end()) slot = detail::checked(key, [&] { return scenario_from_string(it->second); });
  };
  scenario("scenario.sit", d.scenarios.sit);
  scenario("scenario.stand", d.scenarios.stand);
  scenario("scenario.walk", d.scenarios.walk);
  scenario("scenario.pairs", d.scenarios.pairs);
  if (auto it = kv.find("noise_sigma"); it != kv.end()) d.noise_sigma_ut = detail::to_double("noise_sigma", it->second);
  if (d.participants < 1 || d.reps < 1) throw ConfigError("participants and reps must be at least 1");
  return d;
}

/// Design defaults for `kind`, then any overrides from the config.
inline EvalConfig eval_config_from(const KeyValues& kv, DesignKind kind) {
  EvalConfig c = default_eval_config(kind);
  const auto get = [&](const char* key) -> const std::string* {
    const auto it = kv.find(key);
    return it == kv.end() ? nullptr : &it->second;
  };
  if (auto v = get("classifier")) c.classifier = detail::checked("classifier", [&] { return classifier_from_string(*v); });
  if (auto v = get("window")) c.window = parse_window(*v);
  if (auto v = get("split")) {
    const auto r = detail::to_list("split", *v, ':');
    if (r.size() != 3) throw ConfigError("split needs three ratios train:val:test");
    c.train.split = {r[0], r[1], r[2]};
  }
  if (auto v = get("folds")) c.train.folds = static_cast<int>(detail::to_long("folds", *v));
  if (auto v = get("epochs")) c.train.epochs = static_cast<int>(detail::to_long("epochs", *v));
  if (auto v = get("batch_size")) c.train.batch_size = static_cast<int>(detail::to_long("batch_size", *v));
  if (auto v = get("learning_rate")) c.train.learning_rate = detail::to_double("learning_rate", *v);
  if (auto v = get("momentum")) c.train.momentum = detail::to_double("momentum", *v);
  if (auto v = get("patience")) c.train.patience = static_cast<int>(detail::to_long("patience", *v));
  if (auto v = get("svm.c")) c.grid.c_values = detail::to_list("svm.c", *v, ',');
  if (auto v = get("svm.gamma")) c.grid.gamma_values = detail::to_list("svm.gamma", *v, ',');
  if (auto v = get("link.rate")) c.link.target_mean_rate = detail::to_double("link.rate", *v);
  if (auto v = get("link.sd")) c.link.rate_sd = detail::to_double("link.sd", *v);
  if (auto v = get("posture")) c.posture = detail::checked("posture", [&] { return posture_from_string(*v); });
  if (auto v = get("hand")) c.hand = detail::checked("hand", [&] { return hand_from_string(*v); });
  if (auto v = get("threads")) c.threads = static_cast<int>(detail::to_long("threads", *v));
  c.seed = resolve_seed(kv, std::nullopt, c.seed);

  if (!c.train.valid()) throw ConfigError("invalid training settings (split must sum to 1, folds >= 2, ...)");
  if (!c.grid.valid()) throw ConfigError("svm grid values must be positive");
  if (!c.link.valid()) throw ConfigError("link.rate must be in (0, 80] and link.sd >= 0");
  if (c.threads < 1) throw ConfigError("threads must be at least 1");
  return c;
}

}  // namespace budsid
