#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "trajeval/core.hpp"
#include "trajeval/synthgen.hpp"

namespace trajeval {

// Parameterized corruption of reference trajectories, standing in for an
// imitation-learning policy of known quality.
struct DegradationSpec {
  double jitter_sigma = 0.0;     // Gaussian noise on joints
  int lag_frames = 0;            // temporal delay, edge-padded
  double amplitude_scale = 1.0;  // motion amplitude about rest pose, (0, 2]
  double confusion_prob = 0.0;   // chance a chunk's motion is swapped for
                                 // a different class's primitive
  std::uint64_t seed = 0;
};

void validate(const DegradationSpec& spec);

DegradationSpec degradation_from_json(const std::string& json_text);
std::string degradation_to_json(const DegradationSpec& spec);

// Closed-form ground-truth score in (0, 1], equal to 1 exactly for the
// identity spec and strictly decreasing in each degradation parameter:
//   quality = exp(-(4*jitter_sigma + 0.15*lag_frames
//                   + 2*|amplitude_scale - 1| + 3*confusion_prob))
// The seed does not enter the formula.
double quality(const DegradationSpec& spec);

struct SimulatedPolicy {
  std::string name;
  DegradationSpec spec;
  double quality = 1.0;
};

// Chunk-wise degradation of a reference trajectory. With probability
// confusion_prob a chunk's joints are regenerated as a uniformly different
// class's primitive (reference labels are kept: the corruption is in the
// motion, not the annotation). Then amplitude scaling about the rest pose,
// the lag shift and jitter are applied, in that order. Frame count,
// timestamps and labels never change. Deterministic under spec.seed.
JointTrajectory apply(const DegradationSpec& spec, const JointTrajectory& ref,
                      const GenConfig& primitives);

// Applies the spec to every trajectory with per-trajectory derived seeds;
// result is independent of the thread count.
std::vector<JointTrajectory> apply_all(const DegradationSpec& spec,
                                       const std::vector<JointTrajectory>& refs,
                                       const GenConfig& primitives, int threads = 1);

// The single degradation knob moved when inverting a quality target.
enum class DegradationKnob { confusion, jitter, amplitude };

DegradationKnob parse_knob(std::string_view token);
std::string_view to_string(DegradationKnob knob);

// Solves for the spec on the given ray reaching the target quality exactly.
// Throws std::invalid_argument when the target is outside the ray's range.
DegradationSpec spec_for_quality(double target, DegradationKnob knob, std::uint64_t seed);

struct EpochFamily {
  std::vector<SimulatedPolicy> policies;               // one per pseudo-epoch
  std::vector<double> quality_curve;                   // intended profile
  std::vector<std::vector<JointTrajectory>> predictions;  // per epoch
};

// One simulated policy per curve entry, each applied to every base
// trajectory. Deterministic under seed.
EpochFamily make_epoch_family(const std::vector<JointTrajectory>& base,
                              const std::vector<double>& curve, std::uint64_t seed,
                              const GenConfig& primitives,
                              DegradationKnob knob = DegradationKnob::confusion,
                              int threads = 1);

}  // namespace trajeval
