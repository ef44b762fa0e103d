#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "trajeval/labels.hpp"
#include "trajeval/matrix.hpp"

namespace trajeval {

// Thrown when a computation produces non-finite values (training divergence,
// non-finite activations). Input and format problems use std::invalid_argument
// instead; the CLI maps the two families to exit codes 3 and 2.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct JointFrame {
  double t = 0.0;  // seconds
  Vec joints;
  BehaviorLabel label = BehaviorLabel::still;
};

struct JointTrajectory {
  std::string id;
  std::string subject;
  double rate_hz = 10.0;
  std::vector<JointFrame> frames;

  int dim() const { return frames.empty() ? 0 : static_cast<int>(frames.front().joints.size()); }
};

// Checks all type invariants: non-empty, uniform finite joint vectors,
// strictly increasing timestamps with gaps of 1/rate_hz within 1e-6 s.
// Throws std::invalid_argument naming the offending frame.
void validate(const JointTrajectory& traj);

struct LabeledWindow {
  std::string source_id;
  int start_index = 0;
  Mat data;  // L x D, verbatim copy of the source frames
  BehaviorLabel label = BehaviorLabel::still;
};

// Half-open [start_index, end_index) run of identically labeled frames.
struct ActionChunk {
  std::string source_id;
  int start_index = 0;
  int end_index = 0;
  BehaviorLabel label = BehaviorLabel::still;

  int length() const { return end_index - start_index; }
};

struct DatasetSplit {
  std::vector<std::string> train, val, test;
};

struct DurationSummary {
  double min_s = 0.0;
  double median_s = 0.0;
  double max_s = 0.0;
};

struct DatasetStats {
  std::array<long, kNumBehaviors> frame_count{};
  std::array<long, kNumBehaviors> event_count{};
  std::array<std::optional<DurationSummary>, kNumBehaviors> duration{};
  long total_frames = 0;
};

// JSON-Lines dataset I/O, one trajectory per line:
//   {"id": str, "subject": str, "rate_hz": num,
//    "frames": [{"t": num, "joints": [num x D], "label": str}, ...]}
// Errors report the 1-based line number. All type invariants are validated.
std::vector<JointTrajectory> load_dataset(const std::string& path);
void write_dataset(const std::vector<JointTrajectory>& trajs, const std::string& path);
std::string trajectory_to_jsonl(const JointTrajectory& traj);

// Sliding windows of `length` frames every `stride` frames. A trajectory
// shorter than `length` yields no windows. The window label is the majority
// frame label; ties go to the latest tied label in the window (the behaviour
// in progress at the window's end).
std::vector<LabeledWindow> window(const JointTrajectory& traj, int length, int stride);

// Label rule used by window(), exposed for reuse over frame ranges.
BehaviorLabel majority_label(const std::vector<JointFrame>& frames, int begin, int end);

// Maximal runs of identical labels, in order, covering every frame once.
std::vector<ActionChunk> segment_chunks(const JointTrajectory& traj);

// Deterministic split under `seed`. With >= 3 distinct subjects whole
// subjects are assigned to one split each (greedy largest-deficit fill);
// otherwise trajectories are shuffled and partitioned by count. Requires
// at least 3 trajectories and positive ratios with train + val < 1.
DatasetSplit split_dataset(const std::vector<JointTrajectory>& trajs,
                           double train_ratio, double val_ratio, std::uint64_t seed);

DatasetStats dataset_stats(const std::vector<JointTrajectory>& trajs);

// CSV: class,frame_count,event_count,min_s,median_s,max_s
// Duration cells are empty for classes with no chunks.
std::string stats_csv(const DatasetStats& stats);

// Shortest round-trip decimal representation, used for all CSV numbers so
// identical runs produce identical bytes.
std::string format_double(double v);

// Selects trajectories by id, preserving the order in `ids`.
std::vector<JointTrajectory> select_by_id(const std::vector<JointTrajectory>& trajs,
                                          const std::vector<std::string>& ids);

// Windows every trajectory in order; trajectories shorter than `length`
// contribute nothing.
std::vector<LabeledWindow> window_all(const std::vector<JointTrajectory>& trajs,
                                      int length, int stride);

// Writes content to path via a temp file + rename so readers never observe
// partial output.
void atomic_write_file(const std::string& path, const std::string& content);

}  // namespace trajeval
