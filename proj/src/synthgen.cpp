#include "trajeval/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include <json.hpp>

#include "trajeval/parallel.hpp"
#include "trajeval/rng.hpp"

namespace trajeval {

using nlohmann::json;

std::string_view to_string(Waveform w) {
  switch (w) {
    case Waveform::rest: return "rest";
    case Waveform::sinusoid: return "sinusoid";
    case Waveform::ramp_hold_return: return "ramp_hold_return";
    case Waveform::ramp_hold: return "ramp_hold";
  }
  return "?";
}

Waveform parse_waveform(std::string_view token) {
  for (Waveform w : {Waveform::rest, Waveform::sinusoid, Waveform::ramp_hold_return,
                     Waveform::ramp_hold}) {
    if (token == to_string(w)) return w;
  }
  throw std::invalid_argument("unknown waveform '" + std::string(token) + "'");
}

GenConfig default_gen_config() {
  GenConfig cfg;
  auto prim = [&](BehaviorLabel label, std::vector<int> channels, Waveform w, double amp,
                  double period, double hold) {
    BehaviorPrimitive p;
    p.label = label;
    p.active_channels = std::move(channels);
    p.waveform = w;
    p.amplitude = amp;
    p.period_s = period;
    p.hold_s = hold;
    p.base_noise_sigma = 0.01;
    cfg.primitives[label_index(label)] = std::move(p);
  };
  prim(BehaviorLabel::wave, {13, 14, 15, 16}, Waveform::sinusoid, 0.8, 1.2, 0.0);
  prim(BehaviorLabel::shake, {16, 17, 18, 19}, Waveform::ramp_hold_return, 0.7, 1.0, 1.0);
  prim(BehaviorLabel::pick, {6, 7, 8, 9, 13, 14, 15, 16}, Waveform::ramp_hold, 0.6, 1.0, 2.0);
  prim(BehaviorLabel::walk, {3, 4, 5, 21}, Waveform::sinusoid, 0.5, 0.8, 0.0);
  prim(BehaviorLabel::pick_walk, {3, 4, 5, 6, 7, 8, 9, 13, 14, 15, 16, 21},
       Waveform::ramp_hold, 0.55, 1.0, 2.0);
  prim(BehaviorLabel::still, {}, Waveform::rest, 0.0, 1.0, 0.0);
  prim(BehaviorLabel::pick_still, {6, 7, 8, 9, 13, 14, 15, 16, 20}, Waveform::ramp_hold,
       0.65, 1.0, 2.0);
  for (int k = 0; k < kNumBehaviors; ++k) {
    cfg.duration_range_s[k] = {1.0, 6.0};
    cfg.class_weights[k] = 1.0;
  }
  return cfg;
}

void validate(const GenConfig& cfg) {
  if (cfg.dim < 1) throw std::invalid_argument("gen config: dim must be >= 1");
  if (!(cfg.rate_hz > 0.0)) throw std::invalid_argument("gen config: rate_hz must be positive");
  if (cfg.episodes < 0) throw std::invalid_argument("gen config: episodes must be >= 0");
  if (cfg.num_subjects < 1) throw std::invalid_argument("gen config: num_subjects must be >= 1");
  if (!cfg.rest_pose.empty() && static_cast<int>(cfg.rest_pose.size()) != cfg.dim) {
    throw std::invalid_argument("gen config: rest_pose size does not match dim");
  }
  double weight_sum = 0.0;
  for (int k = 0; k < kNumBehaviors; ++k) {
    const BehaviorPrimitive& p = cfg.primitives[k];
    if (label_index(p.label) != k) {
      throw std::invalid_argument("gen config: primitive for class " +
                                  std::string(to_string(static_cast<BehaviorLabel>(k))) +
                                  " is missing");
    }
    if (p.label != BehaviorLabel::still && p.active_channels.empty()) {
      throw std::invalid_argument("gen config: class " + std::string(to_string(p.label)) +
                                  " has no active channels");
    }
    for (int c : p.active_channels) {
      if (c < 0 || c >= cfg.dim) {
        throw std::invalid_argument("gen config: channel index " + std::to_string(c) +
                                    " out of range for class " + std::string(to_string(p.label)));
      }
    }
    if (p.waveform == Waveform::sinusoid && !(p.period_s > 0.0)) {
      throw std::invalid_argument("gen config: sinusoid period must be positive");
    }
    if (p.hold_s < 0.0 || p.base_noise_sigma < 0.0) {
      throw std::invalid_argument("gen config: negative hold_s or base_noise_sigma");
    }
    const auto [lo, hi] = cfg.duration_range_s[k];
    if (!(lo > 0.0) || lo > hi) {
      throw std::invalid_argument("gen config: bad duration range for class " +
                                  std::string(to_string(p.label)));
    }
    if (cfg.class_weights[k] < 0.0) {
      throw std::invalid_argument("gen config: class weights must be non-negative");
    }
    weight_sum += cfg.class_weights[k];
  }
  // Distinct classes must differ in active channels or waveform.
  for (int i = 0; i < kNumBehaviors; ++i) {
    for (int j = i + 1; j < kNumBehaviors; ++j) {
      const BehaviorPrimitive& a = cfg.primitives[i];
      const BehaviorPrimitive& b = cfg.primitives[j];
      if (a.waveform == b.waveform && a.active_channels == b.active_channels) {
        throw std::invalid_argument("gen config: classes " + std::string(to_string(a.label)) +
                                    " and " + std::string(to_string(b.label)) +
                                    " are indistinguishable");
      }
    }
  }
  if (!(weight_sum > 0.0)) throw std::invalid_argument("gen config: class weights sum to zero");
  if (!(cfg.padding_range_s.first >= 0.0) ||
      cfg.padding_range_s.first > cfg.padding_range_s.second) {
    throw std::invalid_argument("gen config: bad padding range");
  }
}

double waveform_value(const BehaviorPrimitive& p, double t, double chunk_duration_s) {
  const double T = chunk_duration_s;
  if (T <= 0.0) return 0.0;
  switch (p.waveform) {
    case Waveform::rest:
      return 0.0;
    case Waveform::sinusoid:
      return p.amplitude * 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * t / p.period_s));
    case Waveform::ramp_hold: {
      const double r = std::clamp(T - p.hold_s, T / 10.0, T);
      return p.amplitude * std::min(1.0, t / r);
    }
    case Waveform::ramp_hold_return: {
      const double r = std::clamp((T - p.hold_s) / 2.0, T / 20.0, T / 2.0);
      if (t < r) return p.amplitude * (t / r);
      if (t > T - r) return p.amplitude * std::max(0.0, (T - t) / r);
      return p.amplitude;
    }
  }
  return 0.0;
}

namespace {

double clipped_noise(Rng& rng, double sigma) {
  if (sigma <= 0.0) return 0.0;
  return std::clamp(rng.normal(0.0, sigma), -3.0 * sigma, 3.0 * sigma);
}

int frames_for(double seconds, double rate_hz) {
  return std::max(1, static_cast<int>(std::llround(seconds * rate_hz)));
}

}  // namespace

JointTrajectory generate_trajectory(BehaviorLabel cls, const GenConfig& cfg,
                                    std::uint64_t seed, const std::string& id,
                                    const std::string& subject) {
  const BehaviorPrimitive& prim = cfg.primitives[label_index(cls)];
  const BehaviorPrimitive& still = cfg.primitives[label_index(BehaviorLabel::still)];
  Rng rng(mix_seed(seed, "episode"));

  const auto [dmin, dmax] = cfg.duration_range_s[label_index(cls)];
  const double action_s = rng.uniform(dmin, dmax);
  const double lead_s = rng.uniform(cfg.padding_range_s.first, cfg.padding_range_s.second);
  const double tail_s = rng.uniform(cfg.padding_range_s.first, cfg.padding_range_s.second);

  int lead_n = frames_for(lead_s, cfg.rate_hz);
  int action_n = frames_for(action_s, cfg.rate_hz);
  int tail_n = frames_for(tail_s, cfg.rate_hz);
  if (cls == BehaviorLabel::still) {
    // One homogeneous still episode; padding folds into the duration.
    action_n = lead_n + action_n + tail_n;
    lead_n = tail_n = 0;
  }

  Vec rest = cfg.rest_pose.empty() ? Vec(cfg.dim, 0.0) : cfg.rest_pose;

  JointTrajectory traj;
  traj.id = id.empty() ? "traj-" + std::to_string(seed) : id;
  traj.subject = subject.empty() ? "s0" : subject;
  traj.rate_hz = cfg.rate_hz;
  const int total = lead_n + action_n + tail_n;
  traj.frames.reserve(total);

  const double dt = 1.0 / cfg.rate_hz;
  const double action_T = action_n * dt;
  for (int i = 0; i < total; ++i) {
    JointFrame f;
    f.t = i * dt;
    f.joints = rest;
    const bool in_action = i >= lead_n && i < lead_n + action_n;
    const BehaviorPrimitive& active = in_action ? prim : still;
    f.label = in_action ? cls : BehaviorLabel::still;
    if (in_action) {
      const double tc = (i - lead_n) * dt;
      const double dev = waveform_value(active, tc, action_T);
      for (int c : active.active_channels) f.joints[c] += dev;
    }
    for (int c = 0; c < cfg.dim; ++c) f.joints[c] += clipped_noise(rng, active.base_noise_sigma);
    traj.frames.push_back(std::move(f));
  }
  return traj;
}

std::vector<JointTrajectory> generate_dataset(const GenConfig& cfg, int threads) {
  validate(cfg);
  // Class draws come from one stream so the episode mix depends only on
  // cfg.seed, not on the thread count.
  Rng pick(mix_seed(cfg.seed, "classes"));
  double weight_sum = 0.0;
  for (double w : cfg.class_weights) weight_sum += w;
  std::vector<BehaviorLabel> classes(cfg.episodes);
  for (int i = 0; i < cfg.episodes; ++i) {
    double u = pick.uniform() * weight_sum;
    int k = 0;
    for (; k < kNumBehaviors - 1; ++k) {
      u -= cfg.class_weights[k];
      if (u < 0.0) break;
    }
    while (cfg.class_weights[k] == 0.0 && k > 0) --k;  // guard fp edge on zero-weight tail
    classes[i] = static_cast<BehaviorLabel>(k);
  }

  std::vector<JointTrajectory> out(cfg.episodes);
  parallel_for(static_cast<std::size_t>(cfg.episodes), threads, [&](std::size_t i) {
    char id[32];
    std::snprintf(id, sizeof(id), "ep%05zu", i);
    const std::string subject = "subj" + std::to_string(i % cfg.num_subjects);
    out[i] = generate_trajectory(classes[i], cfg, mix_seed(cfg.seed, i), id, subject);
  });
  return out;
}

namespace {

json primitive_to_json(const BehaviorPrimitive& p) {
  return json{{"class", to_string(p.label)},
              {"active_channels", p.active_channels},
              {"waveform", to_string(p.waveform)},
              {"amplitude", p.amplitude},
              {"period_s", p.period_s},
              {"hold_s", p.hold_s},
              {"base_noise_sigma", p.base_noise_sigma}};
}

void primitive_from_json(const json& j, BehaviorPrimitive& p) {
  if (j.contains("active_channels")) p.active_channels = j["active_channels"].get<std::vector<int>>();
  if (j.contains("waveform")) p.waveform = parse_waveform(j["waveform"].get<std::string>());
  if (j.contains("amplitude")) p.amplitude = j["amplitude"].get<double>();
  if (j.contains("period_s")) p.period_s = j["period_s"].get<double>();
  if (j.contains("hold_s")) p.hold_s = j["hold_s"].get<double>();
  if (j.contains("base_noise_sigma")) p.base_noise_sigma = j["base_noise_sigma"].get<double>();
}

}  // namespace

std::string gen_config_to_json(const GenConfig& cfg) {
  json j;
  j["dim"] = cfg.dim;
  j["rate_hz"] = cfg.rate_hz;
  j["episodes"] = cfg.episodes;
  j["seed"] = cfg.seed;
  j["num_subjects"] = cfg.num_subjects;
  if (!cfg.rest_pose.empty()) j["rest_pose"] = cfg.rest_pose;
  j["padding_range_s"] = {cfg.padding_range_s.first, cfg.padding_range_s.second};
  json prims = json::object();
  json durations = json::object();
  json weights = json::object();
  for (BehaviorLabel b : all_behaviors()) {
    const int k = label_index(b);
    prims[std::string(to_string(b))] = primitive_to_json(cfg.primitives[k]);
    durations[std::string(to_string(b))] = {cfg.duration_range_s[k].first,
                                            cfg.duration_range_s[k].second};
    weights[std::string(to_string(b))] = cfg.class_weights[k];
  }
  j["primitives"] = std::move(prims);
  j["duration_range_s"] = std::move(durations);
  j["class_weights"] = std::move(weights);
  return j.dump(2);
}

GenConfig gen_config_from_json(const std::string& json_text) {
  GenConfig cfg = default_gen_config();
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("gen config: ") + e.what());
  }
  try {
    if (j.contains("dim")) cfg.dim = j["dim"].get<int>();
    if (j.contains("rate_hz")) cfg.rate_hz = j["rate_hz"].get<double>();
    if (j.contains("episodes")) cfg.episodes = j["episodes"].get<int>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("num_subjects")) cfg.num_subjects = j["num_subjects"].get<int>();
    if (j.contains("rest_pose")) cfg.rest_pose = j["rest_pose"].get<Vec>();
    if (j.contains("padding_range_s")) {
      auto v = j["padding_range_s"].get<std::vector<double>>();
      if (v.size() != 2) throw std::invalid_argument("padding_range_s needs [min, max]");
      cfg.padding_range_s = {v[0], v[1]};
    }
    for (BehaviorLabel b : all_behaviors()) {
      const std::string name(to_string(b));
      const int k = label_index(b);
      if (j.contains("primitives") && j["primitives"].contains(name)) {
        primitive_from_json(j["primitives"][name], cfg.primitives[k]);
      }
      if (j.contains("duration_range_s") && j["duration_range_s"].contains(name)) {
        auto v = j["duration_range_s"][name].get<std::vector<double>>();
        if (v.size() != 2) throw std::invalid_argument("duration_range_s needs [min, max]");
        cfg.duration_range_s[k] = {v[0], v[1]};
      }
      if (j.contains("class_weights") && j["class_weights"].contains(name)) {
        cfg.class_weights[k] = j["class_weights"][name].get<double>();
      }
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("gen config: ") + e.what());
  }
  validate(cfg);
  return cfg;
}

}  // namespace trajeval
