#pragma once

// Synthetic magnetometer traces of finger taps on an instrumented earbud.
//
// Frames: the head frame has x pointing forward (toward the face), y pointing
// laterally away from the head and z up. The bud frame is the head frame
// translated to the touch surface of the bud. The magnetometer sits a fixed
// distance behind the touch surface and is rotated by the mount rotation.
// Lengths are metres internally; profile fields use the units they name.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "budsid/geometry.hpp"

namespace budsid {

inline constexpr double kMu0 = 4.0e-7 * std::numbers::pi;
inline constexpr double kSourceRateHz = 80.0;
inline constexpr double kPollRateHz = 60.0;

class SingularityError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// ---------------------------------------------------------------------------
// Point dipole

/// Field of a point dipole `moment` (A*m^2) at displacement `r` (m) from it, in microtesla.
inline Vec3 dipole_field(const Vec3& moment, const Vec3& r) {
  const double dist = norm(r);
  if (!(dist >= 1e-3)) throw SingularityError("dipole_field: |r| below 1 mm");
  const Vec3 u = r * (1.0 / dist);
  constexpr double k = kMu0 / (4.0 * std::numbers::pi) * 1e6;  // T -> uT
  return (3.0 * dot(moment, u) * u - moment) * (k / (dist * dist * dist));
}

struct MagnetSpec {
  double length_mm = 10.0;
  double diameter_mm = 8.0;
  double remanence_t = 1.19;  // N35 nominal

  double volume_m3() const {
    const double r = diameter_mm * 0.5e-3;
    return std::numbers::pi * r * r * length_mm * 1e-3;
  }
  bool valid() const { return length_mm > 0 && diameter_mm > 0 && remanence_t >= 0; }
};

inline MagnetSpec ring_magnet() { return {10.0, 8.0, 1.19}; }
inline MagnetSpec small_magnet() { return {5.0, 4.0, 1.19}; }

/// Dipole moment magnitude of a uniformly magnetized cylinder, Br * V / mu0.
inline double derive_moment(const MagnetSpec& spec) {
  if (!spec.valid()) throw std::invalid_argument("derive_moment: invalid magnet spec");
  return spec.remanence_t * spec.volume_m3() / kMu0;
}

/// Probe standoff of a handheld gaussmeter: the Hall element sits behind the probe face.
inline constexpr double kGaussProbeStandoffMm = 0.75;

/// On-axis field of a finite cylinder at `standoff_mm` from its pole face, in gauss.
inline double surface_field_gauss(const MagnetSpec& spec,
                                  double standoff_mm = kGaussProbeStandoffMm) {
  const double r = spec.diameter_mm * 0.5;
  const double l = spec.length_mm;
  const double z = standoff_mm;
  const double tesla = spec.remanence_t * 0.5 *
                       ((l + z) / std::sqrt(r * r + (l + z) * (l + z)) - z / std::sqrt(r * r + z * z));
  return tesla * 1e4;
}

/// Remanence that makes surface_field_gauss hit `target_gauss`.
inline double calibrate_remanence(MagnetSpec spec, double target_gauss,
                                  double standoff_mm = kGaussProbeStandoffMm) {
  spec.remanence_t = 1.0;
  return target_gauss / surface_field_gauss(spec, standoff_mm);
}

// ---------------------------------------------------------------------------
// Labels and profiles

enum class Finger { index = 0, middle = 1, ring = 2 };
enum class Hand { left = 0, right = 1 };
enum class Posture { sit = 0, stand = 1, walk = 2 };
enum class ScenarioKind { static_ = 0, car, music, walking, rotating };

inline constexpr std::string_view to_string(Finger f) {
  switch (f) {
    case Finger::index: return "index";
    case Finger::middle: return "middle";
    case Finger::ring: return "ring";
  }
  return "?";
}
inline constexpr std::string_view to_string(Hand h) { return h == Hand::left ? "left" : "right"; }
inline constexpr std::string_view to_string(Posture p) {
  switch (p) {
    case Posture::sit: return "sit";
    case Posture::stand: return "stand";
    case Posture::walk: return "walk";
  }
  return "?";
}
inline constexpr std::string_view to_string(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::static_: return "static";
    case ScenarioKind::car: return "car";
    case ScenarioKind::music: return "music";
    case ScenarioKind::walking: return "walking";
    case ScenarioKind::rotating: return "rotating";
  }
  return "?";
}

inline Finger finger_from_string(std::string_view s) {
  if (s == "index") return Finger::index;
  if (s == "middle") return Finger::middle;
  if (s == "ring") return Finger::ring;
  throw std::invalid_argument("unknown finger: " + std::string(s));
}
inline Hand hand_from_string(std::string_view s) {
  if (s == "left") return Hand::left;
  if (s == "right") return Hand::right;
  throw std::invalid_argument("unknown hand: " + std::string(s));
}
inline Posture posture_from_string(std::string_view s) {
  if (s == "sit") return Posture::sit;
  if (s == "stand") return Posture::stand;
  if (s == "walk") return Posture::walk;
  throw std::invalid_argument("unknown posture: " + std::string(s));
}
inline ScenarioKind scenario_from_string(std::string_view s) {
  if (s == "static") return ScenarioKind::static_;
  if (s == "car") return ScenarioKind::car;
  if (s == "music") return ScenarioKind::music;
  if (s == "walking") return ScenarioKind::walking;
  if (s == "rotating") return ScenarioKind::rotating;
  throw std::invalid_argument("unknown scenario: " + std::string(s));
}

struct FingerLengths {
  double index = 7.20;
  double middle = 7.83;
  double ring = 7.08;

  double of(Finger f) const {
    switch (f) {
      case Finger::index: return index;
      case Finger::middle: return middle;
      case Finger::ring: return ring;
    }
    throw std::invalid_argument("unknown finger");
  }
};

/// Any per-finger triple.
using PerFinger = FingerLengths;

struct ParticipantProfile {
  int participant_id = 0;
  FingerLengths finger_lengths_cm{};
  double ring_offset_from_fingertip_cm = 5.0;
  double sensor_tilt_deg = 30.0;
  double motor_noise_scale = 1.0;
  std::uint64_t rng_stream_id = 0;
  // Geometry the simulator needs beyond the anthropometrics above.
  double knuckle_spacing_cm = 2.0;  // forward offset between adjacent fingers
  double lateral_offset_cm = 1.0;   // ring distance from the head plane at contact
  double rest_distance_cm = 15.0;   // hand lowered below the ear between taps
  double rest_forward_cm = 0.0;     // where the hand rests relative to the ear, along x
  double tempo = 1.0;               // scales approach and retract durations
  double hover_lift_cm = 1.5;       // lift between the two touches of a pair
  double hand_shift_cm = 0.0;       // habitual forward shift of all contact points
  PerFinger finger_shift_cm{0.0, 0.0, 0.0};  // per-finger forward shift of the contact point
  double ring_roll_deg = 0.0;       // ring rotated about the finger axis
  bool ring_inverted = false;

  bool valid() const {
    const auto in = [](double v) { return v >= 5.0 && v <= 10.0; };
    const auto& f = finger_lengths_cm;
    return in(f.index) && in(f.middle) && in(f.ring) && f.index < f.middle && f.ring < f.middle &&
           motor_noise_scale >= 0.0 && knuckle_spacing_cm > 0.0 && rest_distance_cm > 0.0 && tempo > 0.0 &&
           hover_lift_cm >= 0.0;
  }
};

struct HeadingProcess {
  double yaw_rate_deg_s = 0.0;   // deterministic turn rate
  double drift_sd_deg_s = 0.0;   // per-trial random drift rate
  bool active() const { return yaw_rate_deg_s != 0.0 || drift_sd_deg_s != 0.0; }
};

struct GaitSway {
  double amplitude_deg = 0.0;
  double frequency_hz = 0.0;
  bool active() const { return amplitude_deg != 0.0 && frequency_hz != 0.0; }
};

struct ScenarioProfile {
  ScenarioKind kind = ScenarioKind::static_;
  Vec3 ambient_field_ut{25.0, 0.0, -43.30127018922193};  // 50 uT, 60 deg inclination
  HeadingProcess heading{};
  GaitSway gait_sway{};
  double sensor_noise_sigma_ut = 0.4;

  bool valid() const {
    const bool moving = kind == ScenarioKind::walking || kind == ScenarioKind::rotating;
    if (moving) return heading.active() && sensor_noise_sigma_ut >= 0.0;
    return !heading.active() && !gait_sway.active() && sensor_noise_sigma_ut >= 0.0;
  }
};

inline ScenarioProfile scenario_preset(ScenarioKind kind) {
  ScenarioProfile s;
  s.kind = kind;
  switch (kind) {
    case ScenarioKind::static_:
    case ScenarioKind::car:
    case ScenarioKind::music:
      break;
    case ScenarioKind::walking:
      s.heading.drift_sd_deg_s = 6.0;
      s.gait_sway = {5.0, 2.0};
      break;
    case ScenarioKind::rotating:
      s.heading.yaw_rate_deg_s = 45.0;
      break;
  }
  return s;
}

inline ScenarioKind scenario_for_posture(Posture p) {
  return p == Posture::walk ? ScenarioKind::walking : ScenarioKind::static_;
}

struct TapLabel {
  Finger finger = Finger::index;
  Hand hand = Hand::right;
  Posture posture = Posture::sit;
  friend bool operator==(const TapLabel&, const TapLabel&) = default;
};

inline constexpr double kMaxInterTouchS = 1.0;

struct PairLabel {
  Finger first = Finger::index;
  Finger second = Finger::index;
  double inter_touch_time = 0.40;
  friend bool operator==(const PairLabel&, const PairLabel&) = default;

  bool valid() const { return inter_touch_time > 0.0 && inter_touch_time <= kMaxInterTouchS; }
};

using TrialLabel = std::variant<TapLabel, PairLabel>;

/// Class index: finger for single taps, first*3+second for pairs.
inline int class_index(const TrialLabel& label) {
  if (const auto* t = std::get_if<TapLabel>(&label)) return static_cast<int>(t->finger);
  const auto& p = std::get<PairLabel>(label);
  return static_cast<int>(p.first) * 3 + static_cast<int>(p.second);
}

enum class TouchKind { press, release };

struct TouchEvent {
  double time = 0.0;
  TouchKind kind = TouchKind::press;
  friend bool operator==(const TouchEvent&, const TouchEvent&) = default;
};

struct RawTrace {
  double sample_rate = kSourceRateHz;
  std::vector<double> timestamps;
  std::vector<Vec3> mag;
  std::vector<TouchEvent> touch_events;
  TrialLabel label = TapLabel{};
  Hand hand = Hand::right;
  bool ring_inverted = false;
  int participant_id = 0;
  ScenarioKind scenario = ScenarioKind::static_;
  std::uint64_t seed = 0;

  std::vector<double> press_times() const {
    std::vector<double> out;
    for (const auto& e : touch_events)
      if (e.kind == TouchKind::press) out.push_back(e.time);
    return out;
  }
};

/// Temporal centres of each touch: midpoint of press and its release.
inline std::vector<double> touch_centers(const std::vector<TouchEvent>& events) {
  std::vector<double> centers;
  std::optional<double> open;
  for (const auto& e : events) {
    if (e.kind == TouchKind::press) {
      open = e.time;
    } else if (open) {
      centers.push_back(0.5 * (*open + e.time));
      open.reset();
    }
  }
  return centers;
}

/// Checks the RawTrace contract: uniform 1/rate spacing, paired press/release, press count.
inline bool trace_is_well_formed(const RawTrace& tr) {
  if (tr.timestamps.size() != tr.mag.size() || tr.timestamps.empty()) return false;
  const double dt = 1.0 / tr.sample_rate;
  for (std::size_t i = 1; i < tr.timestamps.size(); ++i) {
    const double d = tr.timestamps[i] - tr.timestamps[i - 1];
    if (!(d > 0.0) || std::abs(d - dt) > 1e-9) return false;
  }
  int open = 0, presses = 0;
  for (const auto& e : tr.touch_events) {
    if (e.kind == TouchKind::press) {
      if (open) return false;
      open = 1;
      ++presses;
    } else {
      if (!open) return false;
      open = 0;
    }
  }
  if (open) return false;
  const int want = std::holds_alternative<TapLabel>(tr.label) ? 1 : 2;
  return presses == want;
}

// ---------------------------------------------------------------------------
// Hand kinematics

/// Minimum-jerk displacement fraction for normalized time tau in [0, 1].
inline double min_jerk_fraction(double tau) {
  tau = std::clamp(tau, 0.0, 1.0);
  const double t3 = tau * tau * tau;
  return t3 * (10.0 - 15.0 * tau + 6.0 * tau * tau);
}

struct Pose {
  Vec3 position{};  // metres, bud frame
  Mat3 orientation{};
};

/// Piecewise minimum-jerk path: holds the first pose before the first segment
/// and the last pose after the final one.
class Trajectory {
 public:
  struct Segment {
    double t0 = 0.0;
    double t1 = 0.0;
    Vec3 from{};
    Vec3 to{};
  };

  Trajectory() = default;
  Trajectory(Vec3 start, Mat3 orientation) : start_(start), orientation_(orientation) {}

  void move_to(double t0, double t1, Vec3 target) {
    if (!(t1 > t0)) throw std::invalid_argument("Trajectory: segment must have positive duration");
    if (!segments_.empty() && t0 < segments_.back().t1 - 1e-12)
      throw std::invalid_argument("Trajectory: segments must be time ordered");
    segments_.push_back({t0, t1, end_position(), target});
  }

  Vec3 end_position() const { return segments_.empty() ? start_ : segments_.back().to; }

  Vec3 position(double t) const {
    Vec3 p = start_;
    for (const auto& s : segments_) {
      if (t < s.t0) return p;
      if (t <= s.t1) return s.from + (s.to - s.from) * min_jerk_fraction((t - s.t0) / (s.t1 - s.t0));
      p = s.to;
    }
    return p;
  }

  Pose pose(double t) const { return {position(t), orientation_}; }
  const std::vector<Segment>& segments() const { return segments_; }

 private:
  Vec3 start_{};
  Mat3 orientation_{};
  std::vector<Segment> segments_;
};

/// Forward offset of the ring (on the middle finger) when `finger` touches the bud.
inline double forward_offset_m(Finger finger, const ParticipantProfile& profile) {
  const double delta = 0.5 * profile.knuckle_spacing_cm * 1e-2;
  switch (finger) {
    case Finger::index: return -delta;
    case Finger::middle: return 0.0;
    case Finger::ring: return delta;
  }
  throw std::invalid_argument("forward_offset_m: unknown finger");
}

/// Ring position in the bud frame at the moment `finger` touches the bud.
inline Vec3 contact_position(Finger finger, const ParticipantProfile& profile) {
  const double rise = (profile.finger_lengths_cm.middle - profile.finger_lengths_cm.of(finger)) * 1e-2;
  const double shift = profile.hand_shift_cm + profile.finger_shift_cm.of(finger);
  return {forward_offset_m(finger, profile) + shift * 1e-2, profile.lateral_offset_cm * 1e-2,
          -profile.ring_offset_from_fingertip_cm * 1e-2 + rise};
}

inline Vec3 rest_position(const ParticipantProfile& profile) {
  const double d = profile.rest_distance_cm * 1e-2;
  return {profile.rest_forward_cm * 1e-2, profile.lateral_offset_cm * 1e-2 + 0.25 * d,
          -profile.ring_offset_from_fingertip_cm * 1e-2 - d};
}

/// Single tap: rest -> contact (minimum jerk over `duration`), dwell, retract to rest.
inline Trajectory tap_trajectory(Finger finger, const ParticipantProfile& profile, double t_contact,
                                 double duration, double dwell = 0.1) {
  if (!(duration > 0.0)) throw std::invalid_argument("tap_trajectory: duration must be positive");
  if (dwell < 0.08) throw std::invalid_argument("tap_trajectory: dwell must be at least 80 ms");
  const int f = static_cast<int>(finger);
  if (f < 0 || f > 2) throw std::invalid_argument("tap_trajectory: unknown finger");
  const Vec3 rest = rest_position(profile);
  Trajectory traj(rest, Mat3::identity());
  traj.move_to(t_contact - duration, t_contact, contact_position(finger, profile));
  traj.move_to(t_contact + dwell, t_contact + dwell + duration, rest);
  return traj;
}

// ---------------------------------------------------------------------------
// Sensor model

/// Distance from the touch surface back to the magnetometer, along the forward axis.
inline constexpr double kSensorSetbackM = 0.005;

/// Board yaw inside the bud housing, applied before the pitch toward the mouth.
inline constexpr double kBoardYawDeg = 90.0;

inline Mat3 mount_rotation(double tilt_deg) {
  return rot_z(deg2rad(kBoardYawDeg)) * rot_y(deg2rad(tilt_deg));
}

/// Head orientation in the world at time t for a scenario.
struct HeadMotion {
  double initial_heading_rad = 0.0;
  double yaw_rate_rad_s = 0.0;
  double sway_amplitude_rad = 0.0;
  double sway_frequency_hz = 0.0;
  double sway_phase = 0.0;

  Mat3 orientation(double t) const {
    const double yaw = initial_heading_rad + yaw_rate_rad_s * t;
    const double w = 2.0 * std::numbers::pi * sway_frequency_hz * t + sway_phase;
    const double roll = sway_amplitude_rad * std::sin(w);
    const double pitch = 0.5 * sway_amplitude_rad * std::sin(2.0 * w);
    return rot_z(yaw) * rot_y(pitch) * rot_x(roll);
  }
};

/// Sensor-frame reading given world ambient field, head orientation, mount and magnet state.
inline Vec3 sensor_reading(const Vec3& ambient_world_ut, const Mat3& head_to_world, const Mat3& mount,
                           const Vec3& magnet_bud_m, const Vec3& moment) {
  const Vec3 ambient_head = head_to_world.transposed() * ambient_world_ut;
  const Vec3 sensor_pos{-kSensorSetbackM, 0.0, 0.0};
  const Vec3 dip = dipole_field(moment, sensor_pos - magnet_bud_m);
  return mount.transposed() * (ambient_head + dip);
}

/// Largest per-axis reading of the magnetometer at its default ±4 gauss setting:
/// int16 full scale at 0.14 mgauss per LSB. Stronger fields clip.
inline constexpr double kSensorRangeUt = 32767 * 0.014;

struct SimOptions {
  MagnetSpec magnet = ring_magnet();
  double sensor_range_ut = kSensorRangeUt;  // 0 disables clipping
  double lead_s = 1.5;   // first press time
  double tail_s = 1.5;   // after the last press
  Hand pair_hand = Hand::right;  // pair labels do not carry a hand
};

namespace detail {

inline double posture_noise_factor(Posture p) {
  switch (p) {
    case Posture::sit: return 1.0;
    case Posture::stand: return 1.15;
    case Posture::walk: return 1.5;
  }
  return 1.0;
}

struct TrialKinematics {
  Trajectory trajectory;
  std::vector<TouchEvent> events;
  Vec3 moment{};
};

}  // namespace detail

/// Deterministic synthetic trace for one trial.
inline RawTrace simulate_trial(const TrialLabel& label, const ParticipantProfile& profile,
                               const ScenarioProfile& scenario, std::uint64_t seed,
                               const SimOptions& opt = {}) {
  if (!profile.valid()) throw std::invalid_argument("simulate_trial: invalid participant profile");
  if (!scenario.valid()) throw std::invalid_argument("simulate_trial: invalid scenario profile");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  Hand hand = Hand::right;
  Posture posture = Posture::sit;
  std::vector<Finger> fingers;
  double gap = 0.0;
  if (const auto* tap = std::get_if<TapLabel>(&label)) {
    hand = tap->hand;
    posture = tap->posture;
    fingers = {tap->finger};
  } else {
    const auto& pair = std::get<PairLabel>(label);
    if (!pair.valid()) throw std::invalid_argument("simulate_trial: inter-touch time outside (0, 1] s");
    fingers = {pair.first, pair.second};
    gap = pair.inter_touch_time;
    hand = opt.pair_hand;
  }

  const double motor = profile.motor_noise_scale * detail::posture_noise_factor(posture);
  const double contact_sd = 0.0007 * motor;
  const double rest_sd = 0.01 * motor;

  // Per-trial hand kinematics.
  const double approach = profile.tempo * uniform(0.40, 0.50);
  const double retract = profile.tempo * uniform(0.40, 0.50);
  const auto jitter = [&](double sd) { return Vec3{sd * gauss(rng), sd * gauss(rng), sd * gauss(rng)}; };

  const Vec3 rest = rest_position(profile) + jitter(rest_sd);
  Trajectory traj(rest, Mat3::identity());
  std::vector<TouchEvent> events;
  double t = opt.lead_s;
  for (std::size_t k = 0; k < fingers.size(); ++k) {
    const double dwell = uniform(0.08, 0.12);
    const Vec3 contact = contact_position(fingers[k], profile) + jitter(contact_sd);
    if (k == 0) {
      traj.move_to(t - approach, t, contact);
    } else {
      // Lift off to a hover point between the two contacts, then come back down.
      const double prev_release = events.back().time;
      const double span = t - prev_release;
      const Vec3 prev = traj.end_position();
      const Vec3 hover = (prev + contact) * 0.5 + Vec3{0.0, 0.012, -profile.hover_lift_cm * 1e-2} + jitter(0.3 * contact_sd);
      traj.move_to(prev_release, prev_release + 0.5 * span, hover);
      traj.move_to(prev_release + 0.5 * span, t, contact);
    }
    events.push_back({t, TouchKind::press});
    events.push_back({t + dwell, TouchKind::release});
    if (k + 1 < fingers.size()) t += gap;
  }
  // The hand drops back to a slightly different place than it came from.
  traj.move_to(events.back().time, events.back().time + retract, rest_position(profile) + jitter(rest_sd));

  // Hand attitude wobble rotates the ring's moment a little from trial to trial.
  const double att_sd = deg2rad(1.5) * motor;
  const Mat3 attitude = rot_x(att_sd * gauss(rng)) * rot_y(att_sd * gauss(rng)) * rot_z(att_sd * gauss(rng));
  const double m = derive_moment(opt.magnet) * (profile.ring_inverted ? -1.0 : 1.0);
  const Vec3 moment = attitude * (rot_z(deg2rad(profile.ring_roll_deg)) * Vec3{-m, 0.0, 0.0});

  const Mat3 mount = mount_rotation(profile.sensor_tilt_deg);

  HeadMotion head;
  head.initial_heading_rad = uniform(0.0, 2.0 * std::numbers::pi);
  head.yaw_rate_rad_s = deg2rad(scenario.heading.yaw_rate_deg_s + scenario.heading.drift_sd_deg_s * gauss(rng));
  head.sway_amplitude_rad = deg2rad(scenario.gait_sway.amplitude_deg);
  head.sway_frequency_hz = scenario.gait_sway.frequency_hz;
  head.sway_phase = uniform(0.0, 2.0 * std::numbers::pi);

  // Walking bobs the hand relative to the head at the gait frequency.
  const double bob_amp = scenario.gait_sway.active() ? 0.002 * motor : 0.0;
  const double bob_phase = uniform(0.0, 2.0 * std::numbers::pi);

  const double end_time = opt.lead_s + gap + opt.tail_s;
  const auto n = static_cast<std::size_t>(std::llround(end_time * kSourceRateHz));

  RawTrace tr;
  tr.sample_rate = kSourceRateHz;
  tr.timestamps.resize(n);
  tr.mag.resize(n);
  tr.touch_events = events;
  tr.label = label;
  tr.hand = hand;
  tr.ring_inverted = profile.ring_inverted;
  tr.participant_id = profile.participant_id;
  tr.scenario = scenario.kind;
  tr.seed = seed;

  const double sigma = scenario.sensor_noise_sigma_ut;
  for (std::size_t i = 0; i < n; ++i) {
    const double ti = static_cast<double>(i) / kSourceRateHz;
    Vec3 pos = traj.position(ti);
    if (bob_amp > 0.0)
      pos.z += bob_amp * std::sin(2.0 * std::numbers::pi * scenario.gait_sway.frequency_hz * ti + bob_phase);
    Vec3 b = sensor_reading(scenario.ambient_field_ut, head.orientation(ti), mount, pos, moment);
    if (sigma > 0.0) b += Vec3{sigma * gauss(rng), sigma * gauss(rng), sigma * gauss(rng)};
    if (hand == Hand::left) b.y = -b.y;  // the left bud carries a mirrored board
    if (const double r = opt.sensor_range_ut; r > 0.0) b = {std::clamp(b.x, -r, r), std::clamp(b.y, -r, r), std::clamp(b.z, -r, r)};
    tr.timestamps[i] = ti;
    tr.mag[i] = b;
  }
  return tr;
}

// ---------------------------------------------------------------------------
// Wireless link

struct LinkProfile {
  double target_mean_rate = 41.0;
  double rate_sd = 3.02;
  double poll_rate = kPollRateHz;

  bool valid() const { return target_mean_rate > 0.0 && target_mean_rate <= kSourceRateHz && rate_sd >= 0.0; }
};

inline LinkProfile single_tap_link() { return {34.0, 2.7, kPollRateHz}; }
inline LinkProfile double_tap_link() { return {41.0, 3.02, kPollRateHz}; }

struct ReceivedTrace {
  double t_start = 0.0;
  double t_end = 0.0;
  std::vector<double> timestamps;
  std::vector<Vec3> mag;
  std::vector<std::size_t> source_index;
};

/// Thins the trace with a per-second delivery rate drawn around the link's target.
inline ReceivedTrace ble_channel(const RawTrace& trace, const LinkProfile& link, std::uint64_t seed) {
  if (!link.valid()) throw std::invalid_argument("ble_channel: invalid link profile");
  ReceivedTrace out;
  if (trace.timestamps.empty()) return out;
  out.t_start = trace.timestamps.front();
  out.t_end = trace.timestamps.back();

  const bool identity = link.target_mean_rate >= trace.sample_rate;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> rate_dist(link.target_mean_rate, link.rate_sd);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  long block = -1;
  double keep_p = 1.0;
  for (std::size_t i = 0; i < trace.timestamps.size(); ++i) {
    if (!identity) {
      const auto b = static_cast<long>(std::floor(trace.timestamps[i] - out.t_start));
      if (b != block) {
        block = b;
        keep_p = std::clamp(rate_dist(rng), 0.0, trace.sample_rate) / trace.sample_rate;
      }
      if (unit(rng) >= keep_p) continue;
    }
    out.timestamps.push_back(trace.timestamps[i]);
    out.mag.push_back(trace.mag[i]);
    out.source_index.push_back(i);
  }
  return out;
}

}  // namespace budsid
