#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "trajeval/core.hpp"

namespace trajeval {

enum class Waveform { rest, sinusoid, ramp_hold_return, ramp_hold };

std::string_view to_string(Waveform w);
Waveform parse_waveform(std::string_view token);

// One motion primitive per behaviour class. The deviation from rest_pose on
// the active channels over a chunk of duration T:
//   rest              0
//   sinusoid          amplitude * (1 - cos(2*pi*t / period_s)) / 2
//   ramp_hold         ramp to amplitude over r = clamp(T - hold_s, T/10, T),
//                     then hold
//   ramp_hold_return  ramp up over r = clamp((T - hold_s)/2, T/20, T/2),
//                     hold amplitude, ramp back down over the final r
// Base sensor noise is added to every channel and clipped at +/-3 sigma so
// still frames stay inside the documented envelope.
struct BehaviorPrimitive {
  BehaviorLabel label = BehaviorLabel::still;
  std::vector<int> active_channels;
  Waveform waveform = Waveform::rest;
  double amplitude = 0.0;
  double period_s = 1.0;
  double hold_s = 0.0;
  double base_noise_sigma = 0.0;
};

struct GenConfig {
  int dim = 24;
  double rate_hz = 10.0;
  int episodes = 700;
  std::uint64_t seed = 0;
  int num_subjects = 5;
  Vec rest_pose;  // empty means zeros(dim)
  std::array<BehaviorPrimitive, kNumBehaviors> primitives{};
  std::array<std::pair<double, double>, kNumBehaviors> duration_range_s{};
  std::array<double, kNumBehaviors> class_weights{};
  std::pair<double, double> padding_range_s{0.5, 1.5};  // still lead-in / return
};

// Default 24-channel teleoperation-style layout:
//   0-2 neck, 3-5 torso, 6-9 left shoulder+elbow, 10-12 left wrist,
//   13-16 right shoulder+elbow, 17-19 right wrist, 20 gaze tilt,
//   21-23 motor currents.
// Primitives give every class a distinct channel signature so the classes
// are mutually distinguishable (enforced by the separability tests).
GenConfig default_gen_config();

void validate(const GenConfig& cfg);

// GenConfig from a JSON object; absent fields keep their defaults. Schema
// documented in the README. Throws std::invalid_argument on bad fields.
GenConfig gen_config_from_json(const std::string& json_text);
std::string gen_config_to_json(const GenConfig& cfg);

// Deviation from rest on the primitive's active channels at time t within
// a chunk of the given duration.
double waveform_value(const BehaviorPrimitive& p, double t, double chunk_duration_s);

// One episode: still lead-in, the class primitive, still return, labeled per
// frame. A `still` request is rest pose plus base noise for the whole
// episode. Deterministic under `seed`.
JointTrajectory generate_trajectory(BehaviorLabel cls, const GenConfig& cfg,
                                    std::uint64_t seed,
                                    const std::string& id = "",
                                    const std::string& subject = "");

// cfg.episodes trajectories with classes drawn from class_weights.
// Deterministic under cfg.seed and independent of the thread count (each
// episode uses its own derived seed).
std::vector<JointTrajectory> generate_dataset(const GenConfig& cfg, int threads = 1);

}  // namespace trajeval
