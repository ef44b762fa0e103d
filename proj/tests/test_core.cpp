#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "trajeval/core.hpp"
#include "trajeval/rng.hpp"

using namespace trajeval;

namespace {

JointTrajectory make_traj(const std::string& id, const std::vector<BehaviorLabel>& labels,
                          int dim = 4, double rate = 10.0, const std::string& subject = "s0") {
  JointTrajectory t;
  t.id = id;
  t.subject = subject;
  t.rate_hz = rate;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    JointFrame f;
    f.t = static_cast<double>(i) / rate;
    f.joints.assign(dim, 0.0);
    f.joints[0] = static_cast<double>(i);
    f.label = labels[i];
    t.frames.push_back(f);
  }
  return t;
}

std::vector<BehaviorLabel> repeat(BehaviorLabel b, int n) {
  return std::vector<BehaviorLabel>(n, b);
}

std::vector<BehaviorLabel> concat(std::vector<BehaviorLabel> a,
                                  const std::vector<BehaviorLabel>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name) {
    path = (std::filesystem::temp_directory_path() / name).string();
  }
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_SUITE("core") {

TEST_CASE("label tokens round-trip and reject unknowns") {
  for (BehaviorLabel b : all_behaviors()) {
    CHECK(parse_behavior(to_string(b)) == b);
  }
  CHECK_THROWS_AS(parse_behavior("dance"), std::invalid_argument);
  CHECK_THROWS_AS(parse_behavior("Wave"), std::invalid_argument);
}

TEST_CASE("dataset file round-trip") {
  std::vector<JointTrajectory> trajs;
  trajs.push_back(make_traj("a", {BehaviorLabel::wave, BehaviorLabel::wave, BehaviorLabel::still},
                            24));
  trajs.push_back(make_traj("b", repeat(BehaviorLabel::pick_walk, 5), 24, 10.0, "s1"));
  trajs[0].frames[1].joints[3] = 0.123456789012345;  // exercise shortest round-trip floats

  TempFile f("trajeval_core_roundtrip.jsonl");
  write_dataset(trajs, f.path);
  const auto loaded = load_dataset(f.path);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].frames.size() == 3);
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    CHECK(loaded[i].id == trajs[i].id);
    CHECK(loaded[i].subject == trajs[i].subject);
    CHECK(loaded[i].rate_hz == trajs[i].rate_hz);
    REQUIRE(loaded[i].frames.size() == trajs[i].frames.size());
    for (std::size_t k = 0; k < trajs[i].frames.size(); ++k) {
      CHECK(loaded[i].frames[k].t == trajs[i].frames[k].t);
      CHECK(loaded[i].frames[k].joints == trajs[i].frames[k].joints);
      CHECK(loaded[i].frames[k].label == trajs[i].frames[k].label);
    }
  }

  // Writing what was loaded reproduces the file byte for byte.
  TempFile g("trajeval_core_roundtrip2.jsonl");
  write_dataset(loaded, g.path);
  std::ifstream fa(f.path), fb(g.path);
  std::string ca((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
  std::string cb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
  CHECK(ca == cb);
}

TEST_CASE("load errors carry the line number") {
  TempFile f("trajeval_core_badlabel.jsonl");
  {
    std::ofstream out(f.path);
    out << trajectory_to_jsonl(make_traj("ok", repeat(BehaviorLabel::wave, 2))) << "\n";
    out << R"({"id":"bad","subject":"s0","rate_hz":10,"frames":[{"t":0,"joints":[0,0,0,0],"label":"dance"}]})"
        << "\n";
  }
  CHECK_THROWS_WITH_AS(load_dataset(f.path), doctest::Contains("line 2"), std::invalid_argument);

  TempFile g("trajeval_core_baddim.jsonl");
  {
    std::ofstream out(g.path);
    out << R"({"id":"x","subject":"s0","rate_hz":10,"frames":[)"
        << R"({"t":0,"joints":[0,0,0],"label":"wave"},)"
        << R"({"t":0.1,"joints":[0,0],"label":"wave"}]})"
        << "\n";
  }
  CHECK_THROWS_WITH_AS(load_dataset(g.path), doctest::Contains("dimension"),
                       std::invalid_argument);

  TempFile h("trajeval_core_badtime.jsonl");
  {
    std::ofstream out(h.path);
    out << R"({"id":"x","subject":"s0","rate_hz":10,"frames":[)"
        << R"({"t":0.2,"joints":[0],"label":"wave"},)"
        << R"({"t":0.1,"joints":[0],"label":"wave"}]})"
        << "\n";
  }
  CHECK_THROWS_WITH_AS(load_dataset(h.path), doctest::Contains("increasing"),
                       std::invalid_argument);

  CHECK_THROWS_AS(load_dataset("/nonexistent/nowhere.jsonl"), std::invalid_argument);
}

TEST_CASE("validate rejects irregular frame gaps") {
  JointTrajectory t = make_traj("x", repeat(BehaviorLabel::still, 3));
  t.frames[2].t += 0.05;  // gap now 0.15 s at 10 Hz
  CHECK_THROWS_WITH_AS(validate(t), doctest::Contains("gap"), std::invalid_argument);
}

TEST_CASE("window count law") {
  const JointTrajectory t100 = make_traj("t", repeat(BehaviorLabel::wave, 100));
  CHECK(window(t100, 32, 1).size() == 69);

  Rng rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    const int total = 1 + static_cast<int>(rng.uniform_index(120));
    const int len = 1 + static_cast<int>(rng.uniform_index(70));
    const int stride = 1 + static_cast<int>(rng.uniform_index(10));
    const auto w = window(make_traj("t", repeat(BehaviorLabel::still, total)), len, stride);
    if (total < len) {
      CHECK(w.empty());
    } else {
      CHECK(w.size() == static_cast<std::size_t>((total - len) / stride + 1));
    }
  }
  CHECK_THROWS_AS(window(t100, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(window(t100, 4, 0), std::invalid_argument);
}

TEST_CASE("window content is verbatim and labels follow majority") {
  JointTrajectory t =
      make_traj("t", concat(repeat(BehaviorLabel::wave, 20), repeat(BehaviorLabel::still, 12)));
  const auto w = window(t, 32, 1);
  REQUIRE(w.size() == 1);
  CHECK(w[0].label == BehaviorLabel::wave);
  CHECK(w[0].start_index == 0);
  for (int r = 0; r < 32; ++r) {
    CHECK(w[0].data(r, 0) == t.frames[r].joints[0]);
  }
}

TEST_CASE("window tie goes to the label in progress") {
  const auto w = window(
      make_traj("t", concat(repeat(BehaviorLabel::wave, 16), repeat(BehaviorLabel::still, 16))),
      32, 1);
  REQUIRE(w.size() == 1);
  CHECK(w[0].label == BehaviorLabel::still);

  // Tie between wave and still with a stray last frame: latest tied label wins.
  auto labels = concat(repeat(BehaviorLabel::wave, 3), repeat(BehaviorLabel::still, 3));
  labels.push_back(BehaviorLabel::pick);
  const auto w2 = window(make_traj("t", labels), 7, 1);
  REQUIRE(w2.size() == 1);
  CHECK(w2[0].label == BehaviorLabel::still);
}

TEST_CASE("segment_chunks is run-length encoding") {
  const auto chunks = segment_chunks(make_traj(
      "t", {BehaviorLabel::still, BehaviorLabel::still, BehaviorLabel::wave, BehaviorLabel::wave,
            BehaviorLabel::still}));
  REQUIRE(chunks.size() == 3);
  CHECK(chunks[0].start_index == 0);
  CHECK(chunks[0].end_index == 2);
  CHECK(chunks[0].label == BehaviorLabel::still);
  CHECK(chunks[1].start_index == 2);
  CHECK(chunks[1].end_index == 4);
  CHECK(chunks[1].label == BehaviorLabel::wave);
  CHECK(chunks[2].start_index == 4);
  CHECK(chunks[2].end_index == 5);

  CHECK(segment_chunks(make_traj("t", repeat(BehaviorLabel::pick, 9))).size() == 1);

  const auto alternating = segment_chunks(make_traj(
      "t", {BehaviorLabel::wave, BehaviorLabel::still, BehaviorLabel::wave, BehaviorLabel::still}));
  CHECK(alternating.size() == 4);
}

TEST_CASE("segment_chunks covers every frame exactly once") {
  Rng rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<BehaviorLabel> labels;
    const int total = 1 + static_cast<int>(rng.uniform_index(60));
    for (int i = 0; i < total; ++i) {
      labels.push_back(static_cast<BehaviorLabel>(rng.uniform_index(kNumBehaviors)));
    }
    const auto chunks = segment_chunks(make_traj("t", labels));
    int expected_start = 0;
    for (const ActionChunk& c : chunks) {
      CHECK(c.start_index == expected_start);
      CHECK(c.end_index > c.start_index);
      for (int i = c.start_index; i < c.end_index; ++i) CHECK(labels[i] == c.label);
      if (c.start_index > 0) CHECK(labels[c.start_index - 1] != c.label);
      expected_start = c.end_index;
    }
    CHECK(expected_start == total);
  }
}

TEST_CASE("split_dataset partitions per trajectory under few subjects") {
  std::vector<JointTrajectory> trajs;
  for (int i = 0; i < 10; ++i) {
    trajs.push_back(make_traj("t" + std::to_string(i), repeat(BehaviorLabel::wave, 3)));
  }
  const DatasetSplit s = split_dataset(trajs, 0.6, 0.2, 7);
  CHECK(s.train.size() == 6);
  CHECK(s.val.size() == 2);
  CHECK(s.test.size() == 2);

  std::set<std::string> all(s.train.begin(), s.train.end());
  all.insert(s.val.begin(), s.val.end());
  all.insert(s.test.begin(), s.test.end());
  CHECK(all.size() == 10);

  const DatasetSplit again = split_dataset(trajs, 0.6, 0.2, 7);
  CHECK(again.train == s.train);
  CHECK(again.val == s.val);
  CHECK(again.test == s.test);

  const DatasetSplit other = split_dataset(trajs, 0.6, 0.2, 8);
  CHECK((other.train != s.train || other.val != s.val));  // different seed, different shuffle
}

TEST_CASE("split_dataset keeps whole subjects together") {
  std::vector<JointTrajectory> trajs;
  for (int subj = 0; subj < 3; ++subj) {
    for (int i = 0; i < 4; ++i) {
      trajs.push_back(make_traj("s" + std::to_string(subj) + "t" + std::to_string(i),
                                repeat(BehaviorLabel::wave, 3), 4, 10.0,
                                "subject" + std::to_string(subj)));
    }
  }
  const DatasetSplit s = split_dataset(trajs, 0.34, 0.33, 3);
  CHECK(s.train.size() == 4);
  CHECK(s.val.size() == 4);
  CHECK(s.test.size() == 4);
  auto subject_of = [&](const std::string& id) {
    for (const auto& t : trajs) {
      if (t.id == id) return t.subject;
    }
    return std::string();
  };
  for (const auto* bucket : {&s.train, &s.val, &s.test}) {
    std::set<std::string> subjects;
    for (const std::string& id : *bucket) subjects.insert(subject_of(id));
    CHECK(subjects.size() == 1);
  }
}

TEST_CASE("split_dataset rejects tiny or ill-formed inputs") {
  std::vector<JointTrajectory> two = {make_traj("a", repeat(BehaviorLabel::wave, 2)),
                                      make_traj("b", repeat(BehaviorLabel::wave, 2))};
  CHECK_THROWS_AS(split_dataset(two, 0.6, 0.2, 1), std::invalid_argument);
  two.push_back(make_traj("c", repeat(BehaviorLabel::wave, 2)));
  CHECK_THROWS_AS(split_dataset(two, 0.8, 0.3, 1), std::invalid_argument);
  CHECK_THROWS_AS(split_dataset(two, 0.0, 0.2, 1), std::invalid_argument);
}

TEST_CASE("dataset_stats counts frames, events and durations") {
  std::vector<JointTrajectory> trajs;
  trajs.push_back(make_traj(
      "a", concat(repeat(BehaviorLabel::wave, 10), repeat(BehaviorLabel::still, 10))));
  DatasetStats stats = dataset_stats(trajs);
  CHECK(stats.frame_count[label_index(BehaviorLabel::wave)] == 10);
  CHECK(stats.event_count[label_index(BehaviorLabel::wave)] == 1);
  REQUIRE(stats.duration[label_index(BehaviorLabel::wave)].has_value());
  CHECK(stats.duration[label_index(BehaviorLabel::wave)]->min_s == doctest::Approx(1.0));
  CHECK(stats.duration[label_index(BehaviorLabel::wave)]->max_s == doctest::Approx(1.0));

  CHECK(stats.frame_count[label_index(BehaviorLabel::pick)] == 0);
  CHECK(stats.event_count[label_index(BehaviorLabel::pick)] == 0);
  CHECK(!stats.duration[label_index(BehaviorLabel::pick)].has_value());

  // Two trajectories x 2 pick chunks each.
  auto pick_labels = concat(repeat(BehaviorLabel::pick, 3), repeat(BehaviorLabel::still, 2));
  pick_labels = concat(pick_labels, repeat(BehaviorLabel::pick, 4));
  trajs.clear();
  trajs.push_back(make_traj("a", pick_labels));
  trajs.push_back(make_traj("b", pick_labels));
  stats = dataset_stats(trajs);
  CHECK(stats.event_count[label_index(BehaviorLabel::pick)] == 4);
  CHECK(stats.duration[label_index(BehaviorLabel::pick)]->min_s == doctest::Approx(0.3));
  CHECK(stats.duration[label_index(BehaviorLabel::pick)]->median_s == doctest::Approx(0.35));
  CHECK(stats.duration[label_index(BehaviorLabel::pick)]->max_s == doctest::Approx(0.4));

  long frame_sum = 0;
  for (int k = 0; k < kNumBehaviors; ++k) frame_sum += stats.frame_count[k];
  CHECK(frame_sum == stats.total_frames);

  const std::string csv = stats_csv(stats);
  CHECK(csv.rfind("class,frame_count,event_count,min_s,median_s,max_s\n", 0) == 0);
  CHECK(csv.find("wave,0,0,,,") != std::string::npos);
  CHECK(csv.find("pick,14,4,0.3,0.35,0.4") != std::string::npos);
}

}  // TEST_SUITE
