#include "trajeval/policysim.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "trajeval/parallel.hpp"
#include "trajeval/rng.hpp"

namespace trajeval {

using nlohmann::json;

namespace {

// Penalty rates of the quality formula; documented in the header.
constexpr double kJitterRate = 4.0;
constexpr double kLagRate = 0.15;
constexpr double kAmplitudeRate = 2.0;
constexpr double kConfusionRate = 3.0;

}  // namespace

void validate(const DegradationSpec& spec) {
  if (spec.jitter_sigma < 0.0) throw std::invalid_argument("degradation: jitter_sigma < 0");
  if (spec.lag_frames < 0) throw std::invalid_argument("degradation: lag_frames < 0");
  if (!(spec.amplitude_scale > 0.0) || spec.amplitude_scale > 2.0) {
    throw std::invalid_argument("degradation: amplitude_scale must be in (0, 2]");
  }
  if (spec.confusion_prob < 0.0 || spec.confusion_prob > 1.0) {
    throw std::invalid_argument("degradation: confusion_prob must be in [0, 1]");
  }
}

double quality(const DegradationSpec& spec) {
  validate(spec);
  const double penalty = kJitterRate * spec.jitter_sigma + kLagRate * spec.lag_frames +
                         kAmplitudeRate * std::abs(spec.amplitude_scale - 1.0) +
                         kConfusionRate * spec.confusion_prob;
  return std::exp(-penalty);
}

DegradationSpec degradation_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("degradation spec: ") + e.what());
  }
  DegradationSpec spec;
  try {
    if (j.contains("jitter_sigma")) spec.jitter_sigma = j["jitter_sigma"].get<double>();
    if (j.contains("lag_frames")) spec.lag_frames = j["lag_frames"].get<int>();
    if (j.contains("amplitude_scale")) spec.amplitude_scale = j["amplitude_scale"].get<double>();
    if (j.contains("confusion_prob")) spec.confusion_prob = j["confusion_prob"].get<double>();
    if (j.contains("seed")) spec.seed = j["seed"].get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("degradation spec: ") + e.what());
  }
  validate(spec);
  return spec;
}

std::string degradation_to_json(const DegradationSpec& spec) {
  return json{{"jitter_sigma", spec.jitter_sigma},
              {"lag_frames", spec.lag_frames},
              {"amplitude_scale", spec.amplitude_scale},
              {"confusion_prob", spec.confusion_prob},
              {"seed", spec.seed}}
      .dump(2);
}

JointTrajectory apply(const DegradationSpec& spec, const JointTrajectory& ref,
                      const GenConfig& primitives) {
  validate(spec);
  JointTrajectory out = ref;
  const int dim = ref.dim();
  const Vec rest = primitives.rest_pose.empty() ? Vec(dim, 0.0) : primitives.rest_pose;
  const std::uint64_t traj_seed = mix_seed(spec.seed, ref.id);

  // 1. Behaviour confusion, chunk by chunk.
  if (spec.confusion_prob > 0.0) {
    const std::vector<ActionChunk> chunks = segment_chunks(ref);
    for (std::size_t ci = 0; ci < chunks.size(); ++ci) {
      Rng rng(mix_seed(mix_seed(traj_seed, "confusion"), ci));
      if (rng.uniform() >= spec.confusion_prob) continue;
      const ActionChunk& chunk = chunks[ci];
      // Uniform draw over the six other classes.
      const int own = label_index(chunk.label);
      int other = static_cast<int>(rng.uniform_index(kNumBehaviors - 1));
      if (other >= own) ++other;
      const BehaviorPrimitive& prim = primitives.primitives[other];
      const double chunk_T = chunk.length() / ref.rate_hz;
      for (int i = chunk.start_index; i < chunk.end_index; ++i) {
        Vec& joints = out.frames[i].joints;
        joints = rest;
        const double tc = (i - chunk.start_index) / ref.rate_hz;
        const double dev = waveform_value(prim, tc, chunk_T);
        for (int c : prim.active_channels) joints[c] += dev;
        for (int c = 0; c < dim; ++c) {
          if (prim.base_noise_sigma > 0.0) {
            joints[c] += std::clamp(rng.normal(0.0, prim.base_noise_sigma),
                                    -3.0 * prim.base_noise_sigma, 3.0 * prim.base_noise_sigma);
          }
        }
      }
    }
  }

  // 2. Amplitude scaling about the rest pose.
  if (spec.amplitude_scale != 1.0) {
    for (JointFrame& f : out.frames) {
      for (int c = 0; c < dim; ++c) {
        f.joints[c] = rest[c] + spec.amplitude_scale * (f.joints[c] - rest[c]);
      }
    }
  }

  // 3. Lag shift (edge-padded), joints only; timestamps stay put.
  if (spec.lag_frames > 0) {
    const int n = static_cast<int>(out.frames.size());
    std::vector<Vec> shifted(n);
    for (int i = 0; i < n; ++i) {
      shifted[i] = out.frames[std::max(0, i - spec.lag_frames)].joints;
    }
    for (int i = 0; i < n; ++i) out.frames[i].joints = std::move(shifted[i]);
  }

  // 4. Jitter.
  if (spec.jitter_sigma > 0.0) {
    Rng rng(mix_seed(traj_seed, "jitter"));
    for (JointFrame& f : out.frames) {
      for (int c = 0; c < dim; ++c) f.joints[c] += rng.normal(0.0, spec.jitter_sigma);
    }
  }
  return out;
}

std::vector<JointTrajectory> apply_all(const DegradationSpec& spec,
                                       const std::vector<JointTrajectory>& refs,
                                       const GenConfig& primitives, int threads) {
  std::vector<JointTrajectory> out(refs.size());
  parallel_for(refs.size(), threads,
               [&](std::size_t i) { out[i] = apply(spec, refs[i], primitives); });
  return out;
}

DegradationKnob parse_knob(std::string_view token) {
  if (token == "confusion") return DegradationKnob::confusion;
  if (token == "jitter") return DegradationKnob::jitter;
  if (token == "amplitude") return DegradationKnob::amplitude;
  throw std::invalid_argument("unknown degradation knob '" + std::string(token) + "'");
}

std::string_view to_string(DegradationKnob knob) {
  switch (knob) {
    case DegradationKnob::confusion: return "confusion";
    case DegradationKnob::jitter: return "jitter";
    case DegradationKnob::amplitude: return "amplitude";
  }
  return "?";
}

DegradationSpec spec_for_quality(double target, DegradationKnob knob, std::uint64_t seed) {
  if (!(target > 0.0) || target > 1.0) {
    throw std::invalid_argument("quality target must be in (0, 1]");
  }
  const double penalty = -std::log(target);
  DegradationSpec spec;
  spec.seed = seed;
  switch (knob) {
    case DegradationKnob::confusion:
      spec.confusion_prob = penalty / kConfusionRate;
      if (spec.confusion_prob > 1.0) {
        throw std::invalid_argument("quality target " + format_double(target) +
                                    " unreachable on the confusion ray (minimum " +
                                    format_double(std::exp(-kConfusionRate)) + ")");
      }
      break;
    case DegradationKnob::jitter:
      spec.jitter_sigma = penalty / kJitterRate;
      break;
    case DegradationKnob::amplitude:
      spec.amplitude_scale = 1.0 - penalty / kAmplitudeRate;
      if (!(spec.amplitude_scale > 0.0)) {
        throw std::invalid_argument("quality target " + format_double(target) +
                                    " unreachable on the amplitude ray (minimum above " +
                                    format_double(std::exp(-kAmplitudeRate)) + ")");
      }
      break;
  }
  return spec;
}

EpochFamily make_epoch_family(const std::vector<JointTrajectory>& base,
                              const std::vector<double>& curve, std::uint64_t seed,
                              const GenConfig& primitives, DegradationKnob knob, int threads) {
  if (curve.size() < 2) throw std::invalid_argument("epoch family needs >= 2 curve entries");
  if (base.empty()) throw std::invalid_argument("epoch family needs base trajectories");
  EpochFamily family;
  family.quality_curve = curve;
  for (std::size_t e = 0; e < curve.size(); ++e) {
    DegradationSpec spec = spec_for_quality(curve[e], knob, mix_seed(seed, e));
    SimulatedPolicy policy;
    policy.name = "epoch" + std::to_string(e + 1);
    policy.spec = spec;
    policy.quality = quality(spec);
    family.policies.push_back(policy);
    family.predictions.push_back(apply_all(spec, base, primitives, threads));
  }
  return family;
}

}  // namespace trajeval
