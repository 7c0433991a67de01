#pragma once

// Synthetic participant populations and full-factorial trial designs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "budsid/magsim.hpp"

namespace budsid {

/// splitmix64 finalizer; derives independent child seeds from (seed, stream).
inline constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

struct Normal {
  double mean = 0.0;
  double sd = 0.0;
};

/// Anthropometrics of the recruited sample, plus simulator geometry spreads.
struct PopulationParams {
  Normal index_cm{7.20, 0.37};
  Normal middle_cm{7.83, 0.44};
  Normal ring_cm{7.08, 0.41};
  double finger_length_correlation = 0.3;
  double max_middle_ring_gap_cm = 2.0;
  Normal palm_width_cm{8.0, 0.46};
  Normal sensor_tilt_deg{30.0, 4.0};
  Normal ring_offset_cm{5.0, 0.3};
  Normal lateral_offset_cm{1.0, 0.15};
  Normal rest_distance_cm{15.0, 2.0};
  Normal rest_forward_cm{0.0, 3.0};
  Normal tempo{1.0, 0.2};
  Normal hover_lift_cm{1.5, 0.6};
  Normal hand_shift_cm{0.0, 0.1};
  Normal index_shift_cm{0.0, 0.1};
  Normal middle_shift_cm{0.1, 0.2};
  Normal ring_shift_cm{0.0, 0.25};
  Normal ring_roll_deg{0.0, 2.0};
  double motor_noise_log_sd = 0.25;
  double ring_inverted_probability = 0.25;
};

inline ParticipantProfile sample_participant(int participant_id, const PopulationParams& pop, std::uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(participant_id)));
  std::normal_distribution<double> z(0.0, 1.0);
  const auto draw = [&](const Normal& n) { return n.mean + n.sd * z(rng); };
  ParticipantProfile p;
  p.participant_id = participant_id;
  p.rng_stream_id = mix_seed(seed, 1000003ULL + static_cast<std::uint64_t>(participant_id));
  // Finger lengths share a hand-size factor; each keeps its own marginal mean and sd.
  const double rho = pop.finger_length_correlation;
  const auto lengths_ok = [&] {
    return p.valid() && p.finger_lengths_cm.middle - p.finger_lengths_cm.ring <= pop.max_middle_ring_gap_cm;
  };
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const double common = z(rng);
    const auto length = [&](const Normal& n) { return n.mean + n.sd * (std::sqrt(rho) * common + std::sqrt(1.0 - rho) * z(rng)); };
    p.finger_lengths_cm.index = length(pop.index_cm);
    p.finger_lengths_cm.middle = length(pop.middle_cm);
    p.finger_lengths_cm.ring = length(pop.ring_cm);
    if (lengths_ok()) break;
  }
  if (!lengths_ok()) throw std::runtime_error("sample_participant: could not draw valid finger lengths");
  p.knuckle_spacing_cm = std::max(1.0, draw(pop.palm_width_cm) / 4.0);
  p.sensor_tilt_deg = draw(pop.sensor_tilt_deg);
  p.ring_offset_from_fingertip_cm = std::clamp(draw(pop.ring_offset_cm), 3.5, 6.5);
  p.lateral_offset_cm = std::clamp(draw(pop.lateral_offset_cm), 0.5, 1.6);
  p.rest_distance_cm = std::clamp(draw(pop.rest_distance_cm), 8.0, 25.0);
  p.rest_forward_cm = std::clamp(draw(pop.rest_forward_cm), -6.0, 6.0);
  p.tempo = std::clamp(draw(pop.tempo), 0.7, 1.4);
  p.hover_lift_cm = std::clamp(draw(pop.hover_lift_cm), 0.5, 3.0);
  p.hand_shift_cm = std::clamp(draw(pop.hand_shift_cm), -0.2, 0.2);
  // Index and middle stay on their side of the sensor midline; the ring finger may overlap the middle.
  {
    const double delta = 0.5 * p.knuckle_spacing_cm;
    // The index contact stays at least 8 mm behind the sensor midline.
    const double index_hi = std::min(0.1, delta - 0.8 - p.hand_shift_cm);
    const double index = std::clamp(draw(pop.index_shift_cm), std::min(-0.2, index_hi), index_hi);
    const double middle = std::clamp(draw(pop.middle_shift_cm), std::max(-0.1, -p.hand_shift_cm), 0.6);
    // Keep at least 8 mm between one person's middle and ring contacts.
    const double ring = std::clamp(draw(pop.ring_shift_cm), std::min(0.5, middle + 0.8 - delta), 0.5);
    p.finger_shift_cm = {index, middle, ring};
  }
  p.ring_roll_deg = std::clamp(draw(pop.ring_roll_deg), -4.0, 4.0);
  p.motor_noise_scale = std::exp(pop.motor_noise_log_sd * z(rng));
  p.ring_inverted = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < pop.ring_inverted_probability;
  return p;
}

inline std::vector<ParticipantProfile> sample_population(int count, const PopulationParams& pop, std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("sample_population: need at least one participant");
  std::vector<ParticipantProfile> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) out.push_back(sample_participant(i, pop, seed));
  return out;
}

enum class DesignKind { single_tap, double_tap };

inline constexpr std::string_view to_string(DesignKind k) {
  return k == DesignKind::single_tap ? "single-tap" : "double-tap";
}
inline DesignKind design_from_string(std::string_view s) {
  if (s == "single-tap" || s == "single") return DesignKind::single_tap;
  if (s == "double-tap" || s == "double") return DesignKind::double_tap;
  throw std::invalid_argument("unknown design: " + std::string(s));
}

/// Scenario used for each posture of the single-tap design and for double-tap trials.
struct ScenarioMix {
  ScenarioKind sit = ScenarioKind::static_;
  ScenarioKind stand = ScenarioKind::static_;
  ScenarioKind walk = ScenarioKind::walking;
  ScenarioKind pairs = ScenarioKind::static_;

  ScenarioKind for_posture(Posture p) const { return p == Posture::sit ? sit : (p == Posture::stand ? stand : walk); }
};

struct DesignSpec {
  DesignKind kind = DesignKind::single_tap;
  int participants = 24;
  int reps = 20;  // per cell
  ScenarioMix scenarios{};
  double noise_sigma_ut = 0.4;

  int n_classes() const { return kind == DesignKind::single_tap ? 3 : 9; }
  int cells_per_participant() const { return kind == DesignKind::single_tap ? 2 * 3 * 3 : 9; }
  std::size_t trial_count() const {
    return static_cast<std::size_t>(participants) * cells_per_participant() * reps;
  }
};

/// 24 participants x 2 hands x 3 postures x 3 fingers x 20 reps.
inline DesignSpec single_tap_design(int participants = 24) { return {DesignKind::single_tap, participants, 20}; }
/// 16 participants x 9 ordered pairs x 40 reps.
inline DesignSpec double_tap_design(int participants = 16) { return {DesignKind::double_tap, participants, 40}; }

struct TrialSpec {
  std::size_t trial_id = 0;
  int participant_id = 0;
  TrialLabel label = TapLabel{};
  Hand hand = Hand::right;
  ScenarioKind scenario = ScenarioKind::static_;
  std::uint64_t seed = 0;
  double noise_sigma_ut = 0.4;
};

/// Full factorial enumeration with per-trial seeds; deterministic in `seed`.
inline std::vector<TrialSpec> enumerate_trials(const DesignSpec& design, std::uint64_t seed) {
  if (design.participants < 1 || design.reps < 1) throw std::invalid_argument("enumerate_trials: counts must be >= 1");
  std::vector<TrialSpec> out;
  out.reserve(design.trial_count());
  std::size_t id = 0;
  const auto push = [&](int p, TrialLabel label, Hand hand, ScenarioKind sc) {
    out.push_back({id, p, label, hand, sc, mix_seed(seed ^ 0x5bd1e995ULL, id), design.noise_sigma_ut});
    ++id;
  };
  for (int p = 0; p < design.participants; ++p) {
    if (design.kind == DesignKind::single_tap) {
      for (Hand h : {Hand::right, Hand::left})
        for (Posture po : {Posture::sit, Posture::stand, Posture::walk})
          for (Finger f : {Finger::index, Finger::middle, Finger::ring})
            for (int r = 0; r < design.reps; ++r) push(p, TapLabel{f, h, po}, h, design.scenarios.for_posture(po));
    } else {
      std::mt19937_64 rng(mix_seed(seed, 7000ULL + static_cast<std::uint64_t>(p)));
      std::normal_distribution<double> z(0.0, 1.0);
      for (Finger a : {Finger::index, Finger::middle, Finger::ring})
        for (Finger b : {Finger::index, Finger::middle, Finger::ring})
          for (int r = 0; r < design.reps; ++r) {
            // Repeated fingers come back faster than alternating ones.
            const double mean = a == b ? 0.34 : 0.425;
            const double gap = std::clamp(mean + 0.05 * z(rng), 0.2, 0.95);
            const Hand h = r < design.reps / 2 ? Hand::left : Hand::right;
            push(p, PairLabel{a, b, gap}, h, design.scenarios.pairs);
          }
    }
  }
  return out;
}

inline RawTrace simulate_spec(const TrialSpec& spec, const ParticipantProfile& profile) {
  SimOptions opt;
  opt.pair_hand = spec.hand;
  ScenarioProfile scenario = scenario_preset(spec.scenario);
  scenario.sensor_noise_sigma_ut = spec.noise_sigma_ut;
  return simulate_trial(spec.label, profile, scenario, spec.seed, opt);
}

}  // namespace budsid
