#pragma once

// On-disk datasets: one CSV (`t,x,y,z`) plus a JSON sidecar per trial, a
// JSON-lines manifest with one record per trial, and design.json.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include "json.hpp"

#include "budsid/dataset.hpp"
#include "budsid/magsim.hpp"

namespace budsid {

namespace fs = std::filesystem;
using json = nlohmann::json;

class IoError : public std::runtime_error {
 public:
  IoError(const std::string& what, const fs::path& path)
      : std::runtime_error(what + ": " + path.string()), path_(path) {}
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

/// Shortest decimal form that round-trips.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw std::invalid_argument("not a number: '" + std::string(s) + "'");
  return v;
}

inline json label_to_json(const TrialLabel& label) {
  if (const auto* t = std::get_if<TapLabel>(&label))
    return {{"type", "tap"},
            {"finger", to_string(t->finger)},
            {"hand", to_string(t->hand)},
            {"posture", to_string(t->posture)}};
  const auto& p = std::get<PairLabel>(label);
  return {{"type", "pair"},
          {"first", to_string(p.first)},
          {"second", to_string(p.second)},
          {"inter_touch_time", p.inter_touch_time}};
}

inline TrialLabel label_from_json(const json& j) {
  const auto type = j.at("type").get<std::string>();
  if (type == "tap")
    return TapLabel{finger_from_string(j.at("finger").get<std::string>()),
                    hand_from_string(j.at("hand").get<std::string>()),
                    posture_from_string(j.at("posture").get<std::string>())};
  if (type == "pair")
    return PairLabel{finger_from_string(j.at("first").get<std::string>()),
                     finger_from_string(j.at("second").get<std::string>()), j.at("inter_touch_time").get<double>()};
  throw std::invalid_argument("unknown label type: " + type);
}

inline json events_to_json(const std::vector<TouchEvent>& events) {
  json arr = json::array();
  for (const auto& e : events) arr.push_back({{"t", e.time}, {"kind", e.kind == TouchKind::press ? "press" : "release"}});
  return arr;
}

inline std::vector<TouchEvent> events_from_json(const json& arr) {
  std::vector<TouchEvent> out;
  for (const auto& e : arr) {
    const auto kind = e.at("kind").get<std::string>();
    if (kind != "press" && kind != "release") throw std::invalid_argument("unknown touch event kind: " + kind);
    out.push_back({e.at("t").get<double>(), kind == "press" ? TouchKind::press : TouchKind::release});
  }
  return out;
}

inline json sidecar_json(const RawTrace& tr) {
  return {{"label", label_to_json(tr.label)},
          {"participant", tr.participant_id},
          {"scenario", to_string(tr.scenario)},
          {"hand", to_string(tr.hand)},
          {"ring_inverted", tr.ring_inverted},
          {"sample_rate", tr.sample_rate},
          {"touch_events", events_to_json(tr.touch_events)},
          {"seed", tr.seed}};
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing", path);
  os << text;
  if (!os) throw IoError("write failed", path);
}

inline std::string read_text(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading", path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

/// Writes `<stem>.csv` and `<stem>.json`.
inline void write_trace(const fs::path& csv_path, const RawTrace& tr) {
  std::string out = "t,x,y,z\n";
  out.reserve(tr.mag.size() * 64);
  for (std::size_t i = 0; i < tr.mag.size(); ++i) {
    out += format_double(tr.timestamps[i]);
    out += ',';
    out += format_double(tr.mag[i].x);
    out += ',';
    out += format_double(tr.mag[i].y);
    out += ',';
    out += format_double(tr.mag[i].z);
    out += '\n';
  }
  write_text(csv_path, out);
  auto sidecar = csv_path;
  sidecar.replace_extension(".json");
  write_text(sidecar, sidecar_json(tr).dump(2) + "\n");
}

inline RawTrace read_trace(const fs::path& csv_path) {
  auto sidecar_path = csv_path;
  sidecar_path.replace_extension(".json");
  RawTrace tr;
  try {
    const json side = json::parse(read_text(sidecar_path));
    tr.label = label_from_json(side.at("label"));
    tr.participant_id = side.at("participant").get<int>();
    tr.scenario = scenario_from_string(side.at("scenario").get<std::string>());
    tr.hand = hand_from_string(side.at("hand").get<std::string>());
    tr.ring_inverted = side.at("ring_inverted").get<bool>();
    tr.sample_rate = side.at("sample_rate").get<double>();
    tr.touch_events = events_from_json(side.at("touch_events"));
    tr.seed = side.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed sidecar (") + e.what() + ")", sidecar_path);
  }

  std::istringstream is(read_text(csv_path));
  std::string line;
  if (!std::getline(is, line) || line != "t,x,y,z") throw IoError("missing header t,x,y,z", csv_path);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    double v[4];
    std::size_t start = 0;
    for (int k = 0; k < 4; ++k) {
      const std::size_t end = k < 3 ? line.find(',', start) : line.size();
      if (end == std::string::npos) throw IoError("short row in trace", csv_path);
      try {
        v[k] = parse_double(std::string_view(line).substr(start, end - start));
      } catch (const std::invalid_argument&) {
        throw IoError("bad number in trace", csv_path);
      }
      start = end + 1;
    }
    tr.timestamps.push_back(v[0]);
    tr.mag.push_back({v[1], v[2], v[3]});
  }
  return tr;
}

// ---------------------------------------------------------------------------
// Manifest

struct ManifestRecord {
  std::string path;  // relative to the dataset root
  int participant_id = 0;
  TrialLabel label = TapLabel{};
  Hand hand = Hand::right;
  ScenarioKind scenario = ScenarioKind::static_;
  std::uint64_t seed = 0;
  bool ring_inverted = false;
};

struct DatasetManifest {
  fs::path root;
  DesignSpec design{};
  std::uint64_t seed = 0;
  std::vector<ManifestRecord> records;
  std::vector<ParticipantProfile> participants;

  int n_classes() const { return design.n_classes(); }
};

inline json record_to_json(const ManifestRecord& r) {
  return {{"path", r.path},
          {"participant", r.participant_id},
          {"label", label_to_json(r.label)},
          {"hand", to_string(r.hand)},
          {"scenario", to_string(r.scenario)},
          {"seed", r.seed},
          {"ring_inverted", r.ring_inverted}};
}

inline ManifestRecord record_from_json(const json& j) {
  return {j.at("path").get<std::string>(),
          j.at("participant").get<int>(),
          label_from_json(j.at("label")),
          hand_from_string(j.at("hand").get<std::string>()),
          scenario_from_string(j.at("scenario").get<std::string>()),
          j.at("seed").get<std::uint64_t>(),
          j.at("ring_inverted").get<bool>()};
}

inline json profile_to_json(const ParticipantProfile& p) {
  return {{"participant_id", p.participant_id},
          {"finger_lengths_cm", {{"index", p.finger_lengths_cm.index}, {"middle", p.finger_lengths_cm.middle}, {"ring", p.finger_lengths_cm.ring}}},
          {"ring_offset_from_fingertip_cm", p.ring_offset_from_fingertip_cm},
          {"sensor_tilt_deg", p.sensor_tilt_deg},
          {"motor_noise_scale", p.motor_noise_scale},
          {"rng_stream_id", p.rng_stream_id},
          {"knuckle_spacing_cm", p.knuckle_spacing_cm},
          {"lateral_offset_cm", p.lateral_offset_cm},
          {"rest_distance_cm", p.rest_distance_cm},
          {"rest_forward_cm", p.rest_forward_cm},
          {"tempo", p.tempo},
          {"hover_lift_cm", p.hover_lift_cm},
          {"hand_shift_cm", p.hand_shift_cm},
          {"finger_shift_cm", {{"index", p.finger_shift_cm.index}, {"middle", p.finger_shift_cm.middle}, {"ring", p.finger_shift_cm.ring}}},
          {"ring_roll_deg", p.ring_roll_deg},
          {"ring_inverted", p.ring_inverted}};
}

inline ParticipantProfile profile_from_json(const json& j) {
  ParticipantProfile p;
  p.participant_id = j.at("participant_id").get<int>();
  const auto& f = j.at("finger_lengths_cm");
  p.finger_lengths_cm = {f.at("index").get<double>(), f.at("middle").get<double>(), f.at("ring").get<double>()};
  p.ring_offset_from_fingertip_cm = j.at("ring_offset_from_fingertip_cm").get<double>();
  p.sensor_tilt_deg = j.at("sensor_tilt_deg").get<double>();
  p.motor_noise_scale = j.at("motor_noise_scale").get<double>();
  p.rng_stream_id = j.at("rng_stream_id").get<std::uint64_t>();
  p.knuckle_spacing_cm = j.at("knuckle_spacing_cm").get<double>();
  p.lateral_offset_cm = j.at("lateral_offset_cm").get<double>();
  p.rest_distance_cm = j.at("rest_distance_cm").get<double>();
  p.rest_forward_cm = j.at("rest_forward_cm").get<double>();
  p.tempo = j.at("tempo").get<double>();
  p.hover_lift_cm = j.at("hover_lift_cm").get<double>();
  p.hand_shift_cm = j.at("hand_shift_cm").get<double>();
  const auto& fs = j.at("finger_shift_cm");
  p.finger_shift_cm = {fs.at("index").get<double>(), fs.at("middle").get<double>(), fs.at("ring").get<double>()};
  p.ring_roll_deg = j.at("ring_roll_deg").get<double>();
  p.ring_inverted = j.at("ring_inverted").get<bool>();
  return p;
}

inline std::string trial_path(const TrialSpec& spec) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "traces/p%02d/trial_%05zu.csv", spec.participant_id, spec.trial_id);
  return buf;
}

/// Simulates every trial of `design` and writes traces, manifest.jsonl and design.json under `out_dir`.
inline DatasetManifest simulate_dataset(const DesignSpec& design, const PopulationParams& population,
                                        std::uint64_t seed, const fs::path& out_dir) {
  DatasetManifest m;
  m.root = out_dir;
  m.design = design;
  m.seed = seed;
  m.participants = sample_population(design.participants, population, seed);
  const auto trials = enumerate_trials(design, seed);

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create directory (" + ec.message() + ")", out_dir);
  std::string manifest_text;
  for (const auto& spec : trials) {
    const auto& profile = m.participants[spec.participant_id];
    const RawTrace tr = simulate_spec(spec, profile);
    ManifestRecord rec{trial_path(spec), spec.participant_id, spec.label, spec.hand, spec.scenario, spec.seed,
                       profile.ring_inverted};
    const fs::path csv = out_dir / rec.path;
    fs::create_directories(csv.parent_path(), ec);
    if (ec) throw IoError("cannot create directory (" + ec.message() + ")", csv.parent_path());
    write_trace(csv, tr);
    manifest_text += record_to_json(rec).dump() + "\n";
    m.records.push_back(std::move(rec));
  }
  write_text(out_dir / "manifest.jsonl", manifest_text);

  json design_json = {{"design", to_string(design.kind)},
                      {"participants", design.participants},
                      {"reps", design.reps},
                      {"seed", seed},
                      {"trials", trials.size()},
                      {"noise_sigma", design.noise_sigma_ut},
                      {"scenarios",
                       {{"sit", to_string(design.scenarios.sit)},
                        {"stand", to_string(design.scenarios.stand)},
                        {"walk", to_string(design.scenarios.walk)},
                        {"pairs", to_string(design.scenarios.pairs)}}},
                      {"profiles", json::array()}};
  for (const auto& p : m.participants) design_json["profiles"].push_back(profile_to_json(p));
  write_text(out_dir / "design.json", design_json.dump(2) + "\n");
  return m;
}

/// Reads design.json and manifest.jsonl and checks the manifest invariants.
inline DatasetManifest load_manifest(const fs::path& dir) {
  DatasetManifest m;
  m.root = dir;
  try {
    const json d = json::parse(read_text(dir / "design.json"));
    m.design = {design_from_string(d.at("design").get<std::string>()), d.at("participants").get<int>(),
                d.at("reps").get<int>()};
    m.seed = d.at("seed").get<std::uint64_t>();
    m.design.noise_sigma_ut = d.at("noise_sigma").get<double>();
    const auto& sc = d.at("scenarios");
    m.design.scenarios = {scenario_from_string(sc.at("sit").get<std::string>()),
                          scenario_from_string(sc.at("stand").get<std::string>()),
                          scenario_from_string(sc.at("walk").get<std::string>()),
                          scenario_from_string(sc.at("pairs").get<std::string>())};
    for (const auto& p : d.at("profiles")) m.participants.push_back(profile_from_json(p));
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed design.json (") + e.what() + ")", dir / "design.json");
  }

  std::istringstream is(read_text(dir / "manifest.jsonl"));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      m.records.push_back(record_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw IoError("malformed manifest record on line " + std::to_string(line_no) + " (" + e.what() + ")",
                    dir / "manifest.jsonl");
    }
  }

  std::vector<std::string> missing;
  for (const auto& r : m.records)
    if (!fs::exists(dir / r.path)) missing.push_back(r.path);
  if (!missing.empty()) {
    std::string msg = std::to_string(missing.size()) + " trace file(s) missing:";
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) msg += " " + missing[i];
    throw IoError(msg, dir);
  }

  std::map<int, std::map<int, int>> per_participant_class;
  for (const auto& r : m.records) ++per_participant_class[r.participant_id][class_index(r.label)];
  int expected_id = 0;
  for (const auto& [pid, counts] : per_participant_class) {
    if (pid != expected_id++) throw IoError("participant ids are not contiguous from 0", dir / "manifest.jsonl");
    const int per_class = m.design.reps * m.design.cells_per_participant() / m.design.n_classes();
    for (int c = 0; c < m.design.n_classes(); ++c) {
      const auto it = counts.find(c);
      if (it == counts.end() || it->second != per_class)
        throw IoError("participant " + std::to_string(pid) + " class " + std::to_string(c) +
                          " count does not match the design",
                      dir / "manifest.jsonl");
    }
  }
  if (static_cast<int>(per_participant_class.size()) != m.design.participants)
    throw IoError("participant count does not match the design", dir / "manifest.jsonl");
  return m;
}

}  // namespace budsid
