#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "trajeval/core.hpp"
#include "trajeval/synthgen.hpp"

using namespace trajeval;

namespace {

GenConfig noiseless_config() {
  GenConfig cfg = default_gen_config();
  for (auto& p : cfg.primitives) p.base_noise_sigma = 0.0;
  return cfg;
}

bool same_trajectory(const JointTrajectory& a, const JointTrajectory& b) {
  if (a.id != b.id || a.subject != b.subject || a.frames.size() != b.frames.size()) return false;
  for (std::size_t i = 0; i < a.frames.size(); ++i) {
    if (a.frames[i].t != b.frames[i].t) return false;
    if (a.frames[i].label != b.frames[i].label) return false;
    if (a.frames[i].joints != b.frames[i].joints) return false;
  }
  return true;
}

// Nearest-centroid classifier over per-window channel means, fit and
// evaluated on windows lying fully inside single-label chunks. Independent
// of the neural evaluator; guards that the generated classes are separable.
double centroid_accuracy(const std::vector<JointTrajectory>& trajs, int window_len, int stride) {
  struct Sample {
    Vec feature;
    int label;
  };
  std::vector<Sample> samples;
  for (const JointTrajectory& t : trajs) {
    for (const ActionChunk& c : segment_chunks(t)) {
      for (int start = c.start_index; start + window_len <= c.end_index; start += stride) {
        Vec mean(t.dim(), 0.0);
        for (int i = start; i < start + window_len; ++i) {
          for (int d = 0; d < t.dim(); ++d) mean[d] += t.frames[i].joints[d];
        }
        for (double& v : mean) v /= window_len;
        samples.push_back({std::move(mean), label_index(c.label)});
      }
    }
  }
  REQUIRE(!samples.empty());

  const int dim = static_cast<int>(samples.front().feature.size());
  std::array<Vec, kNumBehaviors> centroid{};
  std::array<long, kNumBehaviors> counts{};
  for (auto& c : centroid) c.assign(dim, 0.0);
  for (const Sample& s : samples) {
    for (int d = 0; d < dim; ++d) centroid[s.label][d] += s.feature[d];
    counts[s.label]++;
  }
  for (int k = 0; k < kNumBehaviors; ++k) {
    if (counts[k] == 0) continue;
    for (double& v : centroid[k]) v /= static_cast<double>(counts[k]);
  }

  long correct = 0;
  for (const Sample& s : samples) {
    int best = -1;
    double best_d = 0.0;
    for (int k = 0; k < kNumBehaviors; ++k) {
      if (counts[k] == 0) continue;
      double d2 = 0.0;
      for (int d = 0; d < dim; ++d) {
        const double diff = s.feature[d] - centroid[k][d];
        d2 += diff * diff;
      }
      if (best < 0 || d2 < best_d) {
        best = k;
        best_d = d2;
      }
    }
    if (best == s.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

}  // namespace

TEST_SUITE("synthgen") {

TEST_CASE("default config is valid and classes are pairwise distinguishable") {
  const GenConfig cfg = default_gen_config();
  CHECK_NOTHROW(validate(cfg));
  for (int i = 0; i < kNumBehaviors; ++i) {
    for (int j = i + 1; j < kNumBehaviors; ++j) {
      const auto& a = cfg.primitives[i];
      const auto& b = cfg.primitives[j];
      CHECK((a.waveform != b.waveform || a.active_channels != b.active_channels));
    }
  }
}

TEST_CASE("still with zero noise is exactly the rest pose") {
  GenConfig cfg = noiseless_config();
  const JointTrajectory t = generate_trajectory(BehaviorLabel::still, cfg, 123);
  CHECK(!t.frames.empty());
  for (const JointFrame& f : t.frames) {
    CHECK(f.label == BehaviorLabel::still);
    for (double v : f.joints) CHECK(v == 0.0);
  }
}

TEST_CASE("only active channels move") {
  GenConfig cfg = noiseless_config();
  const std::vector<int>& active =
      cfg.primitives[label_index(BehaviorLabel::wave)].active_channels;
  const JointTrajectory t = generate_trajectory(BehaviorLabel::wave, cfg, 9);
  validate(t);
  const std::set<int> active_set(active.begin(), active.end());
  bool some_motion = false;
  for (const JointFrame& f : t.frames) {
    for (int d = 0; d < static_cast<int>(f.joints.size()); ++d) {
      if (active_set.count(d)) {
        some_motion = some_motion || f.joints[d] != 0.0;
      } else {
        CHECK(f.joints[d] == 0.0);
      }
    }
  }
  CHECK(some_motion);
}

TEST_CASE("episodes have still lead-in, one action chunk, still return") {
  const GenConfig cfg = default_gen_config();
  for (BehaviorLabel cls : all_behaviors()) {
    if (cls == BehaviorLabel::still) continue;
    const JointTrajectory t = generate_trajectory(cls, cfg, 31u + label_index(cls));
    const auto chunks = segment_chunks(t);
    REQUIRE(chunks.size() == 3);
    CHECK(chunks[0].label == BehaviorLabel::still);
    CHECK(chunks[1].label == cls);
    CHECK(chunks[2].label == BehaviorLabel::still);
  }
}

TEST_CASE("generate_trajectory is deterministic") {
  const GenConfig cfg = default_gen_config();
  const JointTrajectory a = generate_trajectory(BehaviorLabel::shake, cfg, 77);
  const JointTrajectory b = generate_trajectory(BehaviorLabel::shake, cfg, 77);
  CHECK(same_trajectory(a, b));
  const JointTrajectory c = generate_trajectory(BehaviorLabel::shake, cfg, 78);
  CHECK(!same_trajectory(a, c));
}

TEST_CASE("still frames stay within three sigma of rest") {
  GenConfig cfg = default_gen_config();
  const double sigma =
      cfg.primitives[label_index(BehaviorLabel::still)].base_noise_sigma;
  REQUIRE(sigma > 0.0);
  cfg.episodes = 40;
  cfg.seed = 5;
  for (const JointTrajectory& t : generate_dataset(cfg)) {
    for (const JointFrame& f : t.frames) {
      if (f.label != BehaviorLabel::still) continue;
      for (double v : f.joints) CHECK(std::abs(v) <= 3.0 * sigma + 1e-15);
    }
  }
}

TEST_CASE("generate_dataset is deterministic and thread-count independent") {
  GenConfig cfg = default_gen_config();
  cfg.episodes = 24;
  cfg.seed = 99;
  const auto a = generate_dataset(cfg, 1);
  const auto b = generate_dataset(cfg, 1);
  const auto c = generate_dataset(cfg, 4);
  REQUIRE(a.size() == 24);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(same_trajectory(a[i], b[i]));
    CHECK(same_trajectory(a[i], c[i]));
  }
}

TEST_CASE("class weights drive the episode mix") {
  GenConfig cfg = default_gen_config();
  cfg.episodes = 60;
  cfg.seed = 3;
  cfg.class_weights.fill(0.0);
  cfg.class_weights[label_index(BehaviorLabel::wave)] = 1.0;
  for (const JointTrajectory& t : generate_dataset(cfg)) {
    for (const ActionChunk& c : segment_chunks(t)) {
      CHECK((c.label == BehaviorLabel::wave || c.label == BehaviorLabel::still));
    }
    bool has_wave = false;
    for (const ActionChunk& c : segment_chunks(t)) has_wave |= c.label == BehaviorLabel::wave;
    CHECK(has_wave);
  }
}

TEST_CASE("uniform weights give roughly balanced event counts") {
  GenConfig cfg = default_gen_config();
  cfg.episodes = 700;
  cfg.seed = 42;
  const auto trajs = generate_dataset(cfg, 4);
  REQUIRE(trajs.size() == 700);

  std::array<long, kNumBehaviors> episode_count{};
  std::array<long, kNumBehaviors> chunk_count{};
  for (const JointTrajectory& t : trajs) {
    const auto chunks = segment_chunks(t);
    // Episode class = the non-still chunk, or still for pure-still episodes.
    BehaviorLabel cls = BehaviorLabel::still;
    for (const ActionChunk& c : chunks) {
      if (c.label != BehaviorLabel::still) cls = c.label;
      chunk_count[label_index(c.label)]++;
    }
    episode_count[label_index(cls)]++;
  }

  long total = 0;
  for (int k = 0; k < kNumBehaviors; ++k) {
    total += episode_count[k];
    // 700 episodes / 7 classes = 100 expected; allow a wide statistical band.
    CHECK(episode_count[k] > 60);
    CHECK(episode_count[k] < 140);
  }
  CHECK(total == 700);

  // Non-still action chunks appear exactly once per episode of their class;
  // still chunks come from still episodes plus two pads per other episode.
  for (int k = 0; k < kNumBehaviors; ++k) {
    if (k == label_index(BehaviorLabel::still)) continue;
    CHECK(chunk_count[k] == episode_count[k]);
  }
  const long still_k = label_index(BehaviorLabel::still);
  CHECK(chunk_count[still_k] == episode_count[still_k] + 2 * (700 - episode_count[still_k]));
}

TEST_CASE("noiseless windows are linearly separable by class means") {
  GenConfig cfg = noiseless_config();
  cfg.episodes = 140;
  cfg.seed = 11;
  const auto trajs = generate_dataset(cfg, 4);
  for (int window_len : {16, 32}) {
    CHECK(centroid_accuracy(trajs, window_len, 4) == 1.0);
  }
}

TEST_CASE("gen config json round-trip with overrides") {
  const std::string text = R"({
    "episodes": 12,
    "seed": 4,
    "class_weights": {"wave": 2.0},
    "primitives": {"wave": {"amplitude": 0.5, "active_channels": [3, 4, 5]}},
    "duration_range_s": {"wave": [2.0, 3.0]}
  })";
  const GenConfig cfg = gen_config_from_json(text);
  CHECK(cfg.episodes == 12);
  CHECK(cfg.seed == 4);
  CHECK(cfg.class_weights[label_index(BehaviorLabel::wave)] == 2.0);
  CHECK(cfg.primitives[label_index(BehaviorLabel::wave)].amplitude == 0.5);
  CHECK(cfg.primitives[label_index(BehaviorLabel::wave)].active_channels ==
        std::vector<int>{3, 4, 5});
  CHECK(cfg.duration_range_s[label_index(BehaviorLabel::wave)].first == 2.0);

  const GenConfig again = gen_config_from_json(gen_config_to_json(cfg));
  CHECK(again.episodes == cfg.episodes);
  CHECK(again.primitives[label_index(BehaviorLabel::wave)].active_channels ==
        cfg.primitives[label_index(BehaviorLabel::wave)].active_channels);

  CHECK_THROWS_AS(gen_config_from_json("{nope"), std::invalid_argument);
  CHECK_THROWS_AS(gen_config_from_json(R"({"episodes": -3})"), std::invalid_argument);
  // Indistinguishable classes are rejected.
  CHECK_THROWS_AS(gen_config_from_json(R"({
    "primitives": {"wave": {"waveform": "sinusoid", "active_channels": [3, 4, 5, 21]}}
  })"),
                  std::invalid_argument);
}

}  // TEST_SUITE
