#include "trajeval/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "trajeval/rng.hpp"

namespace trajeval {

using nlohmann::json;

namespace {

constexpr double kGapTolerance = 1e-6;  // seconds

std::string frame_err(const std::string& id, int frame, const std::string& what) {
  return "trajectory '" + id + "' frame " + std::to_string(frame) + ": " + what;
}

}  // namespace

std::string_view to_string(BehaviorLabel b) {
  switch (b) {
    case BehaviorLabel::wave: return "wave";
    case BehaviorLabel::shake: return "shake";
    case BehaviorLabel::pick: return "pick";
    case BehaviorLabel::walk: return "walk";
    case BehaviorLabel::pick_walk: return "pick_walk";
    case BehaviorLabel::still: return "still";
    case BehaviorLabel::pick_still: return "pick_still";
  }
  return "?";
}

BehaviorLabel parse_behavior(std::string_view token) {
  for (BehaviorLabel b : all_behaviors()) {
    if (token == to_string(b)) return b;
  }
  throw std::invalid_argument("unknown behaviour label '" + std::string(token) + "'");
}

void validate(const JointTrajectory& traj) {
  if (traj.frames.empty()) {
    throw std::invalid_argument("trajectory '" + traj.id + "': no frames");
  }
  if (!(traj.rate_hz > 0.0)) {
    throw std::invalid_argument("trajectory '" + traj.id + "': rate_hz must be positive");
  }
  const std::size_t dim = traj.frames.front().joints.size();
  if (dim == 0) {
    throw std::invalid_argument(frame_err(traj.id, 0, "empty joint vector"));
  }
  const double expected_gap = 1.0 / traj.rate_hz;
  for (std::size_t i = 0; i < traj.frames.size(); ++i) {
    const JointFrame& f = traj.frames[i];
    if (f.t < 0.0 || !std::isfinite(f.t)) {
      throw std::invalid_argument(frame_err(traj.id, static_cast<int>(i), "invalid timestamp"));
    }
    if (f.joints.size() != dim) {
      throw std::invalid_argument(frame_err(
          traj.id, static_cast<int>(i),
          "joint dimension " + std::to_string(f.joints.size()) + " does not match " +
              std::to_string(dim)));
    }
    for (double v : f.joints) {
      if (!std::isfinite(v)) {
        throw std::invalid_argument(frame_err(traj.id, static_cast<int>(i), "non-finite joint value"));
      }
    }
    if (i > 0) {
      const double gap = f.t - traj.frames[i - 1].t;
      if (gap <= 0.0) {
        throw std::invalid_argument(frame_err(traj.id, static_cast<int>(i),
                                              "timestamps not strictly increasing"));
      }
      if (std::abs(gap - expected_gap) > kGapTolerance) {
        throw std::invalid_argument(frame_err(
            traj.id, static_cast<int>(i),
            "frame gap " + format_double(gap) + " s differs from 1/rate_hz"));
      }
    }
  }
}

namespace {

JointTrajectory trajectory_from_json(const json& j) {
  JointTrajectory traj;
  traj.id = j.at("id").get<std::string>();
  traj.subject = j.at("subject").get<std::string>();
  traj.rate_hz = j.at("rate_hz").get<double>();
  for (const json& jf : j.at("frames")) {
    JointFrame f;
    f.t = jf.at("t").get<double>();
    f.joints = jf.at("joints").get<Vec>();
    f.label = parse_behavior(jf.at("label").get<std::string>());
    traj.frames.push_back(std::move(f));
  }
  return traj;
}

}  // namespace

std::string trajectory_to_jsonl(const JointTrajectory& traj) {
  json j;
  j["id"] = traj.id;
  j["subject"] = traj.subject;
  j["rate_hz"] = traj.rate_hz;
  json frames = json::array();
  for (const JointFrame& f : traj.frames) {
    frames.push_back({{"t", f.t}, {"joints", f.joints}, {"label", to_string(f.label)}});
  }
  j["frames"] = std::move(frames);
  return j.dump();
}

std::vector<JointTrajectory> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::invalid_argument("cannot open dataset file '" + path + "'");
  }
  std::vector<JointTrajectory> out;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      JointTrajectory traj = trajectory_from_json(json::parse(line));
      validate(traj);
      if (!out.empty() && traj.dim() != out.front().dim()) {
        throw std::invalid_argument("joint dimension " + std::to_string(traj.dim()) +
                                    " does not match dataset dimension " +
                                    std::to_string(out.front().dim()));
      }
      out.push_back(std::move(traj));
    } catch (const std::exception& e) {
      throw std::invalid_argument(path + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_dataset(const std::vector<JointTrajectory>& trajs, const std::string& path) {
  std::string content;
  for (const JointTrajectory& t : trajs) {
    content += trajectory_to_jsonl(t);
    content += '\n';
  }
  atomic_write_file(path, content);
}

BehaviorLabel majority_label(const std::vector<JointFrame>& frames, int begin, int end) {
  std::array<int, kNumBehaviors> counts{};
  for (int i = begin; i < end; ++i) counts[label_index(frames[i].label)]++;
  const int best = *std::max_element(counts.begin(), counts.end());
  // Latest tied label wins: scan backwards for a frame whose label has the
  // maximal count.
  for (int i = end - 1; i >= begin; --i) {
    if (counts[label_index(frames[i].label)] == best) return frames[i].label;
  }
  return frames[begin].label;  // unreachable for non-empty ranges
}

std::vector<LabeledWindow> window(const JointTrajectory& traj, int length, int stride) {
  if (length < 1) throw std::invalid_argument("window length must be >= 1");
  if (stride < 1) throw std::invalid_argument("window stride must be >= 1");
  const int total = static_cast<int>(traj.frames.size());
  std::vector<LabeledWindow> out;
  if (total < length) return out;
  const int dim = traj.dim();
  out.reserve(static_cast<std::size_t>((total - length) / stride) + 1);
  for (int start = 0; start + length <= total; start += stride) {
    LabeledWindow w;
    w.source_id = traj.id;
    w.start_index = start;
    w.data = Mat(length, dim);
    for (int r = 0; r < length; ++r) {
      const Vec& joints = traj.frames[start + r].joints;
      std::copy(joints.begin(), joints.end(), w.data.row(r));
    }
    w.label = majority_label(traj.frames, start, start + length);
    out.push_back(std::move(w));
  }
  return out;
}

std::vector<LabeledWindow> window_all(const std::vector<JointTrajectory>& trajs,
                                      int length, int stride) {
  std::vector<LabeledWindow> out;
  for (const JointTrajectory& t : trajs) {
    std::vector<LabeledWindow> w = window(t, length, stride);
    out.insert(out.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
  }
  return out;
}

std::vector<ActionChunk> segment_chunks(const JointTrajectory& traj) {
  std::vector<ActionChunk> out;
  const int total = static_cast<int>(traj.frames.size());
  int start = 0;
  for (int i = 1; i <= total; ++i) {
    if (i == total || traj.frames[i].label != traj.frames[start].label) {
      out.push_back({traj.id, start, i, traj.frames[start].label});
      start = i;
    }
  }
  return out;
}

DatasetSplit split_dataset(const std::vector<JointTrajectory>& trajs,
                           double train_ratio, double val_ratio, std::uint64_t seed) {
  if (trajs.size() < 3) {
    throw std::invalid_argument("split_dataset needs at least 3 trajectories, got " +
                                std::to_string(trajs.size()));
  }
  if (!(train_ratio > 0.0) || !(val_ratio > 0.0) || train_ratio + val_ratio >= 1.0) {
    throw std::invalid_argument("split ratios must be positive with train + val < 1");
  }

  std::map<std::string, std::vector<std::string>> by_subject;
  for (const JointTrajectory& t : trajs) by_subject[t.subject].push_back(t.id);

  Rng rng(mix_seed(seed, "split"));
  DatasetSplit split;
  const double n = static_cast<double>(trajs.size());

  if (by_subject.size() >= 3) {
    std::vector<std::string> subjects;
    subjects.reserve(by_subject.size());
    for (const auto& [subject, ids] : by_subject) subjects.push_back(subject);
    rng.shuffle(subjects);

    // Greedy fill: each subject goes to the split with the largest remaining
    // deficit relative to its target trajectory count.
    const double targets[3] = {train_ratio * n, val_ratio * n,
                               (1.0 - train_ratio - val_ratio) * n};
    double counts[3] = {0, 0, 0};
    std::vector<std::string>* buckets[3] = {&split.train, &split.val, &split.test};
    for (const std::string& subject : subjects) {
      int best = 0;
      double best_deficit = targets[0] - counts[0];
      for (int k = 1; k < 3; ++k) {
        const double deficit = targets[k] - counts[k];
        if (deficit > best_deficit) {
          best = k;
          best_deficit = deficit;
        }
      }
      const auto& ids = by_subject[subject];
      buckets[best]->insert(buckets[best]->end(), ids.begin(), ids.end());
      counts[best] += static_cast<double>(ids.size());
    }
  } else {
    std::vector<std::string> ids;
    ids.reserve(trajs.size());
    for (const JointTrajectory& t : trajs) ids.push_back(t.id);
    rng.shuffle(ids);
    auto n_train = static_cast<std::size_t>(std::llround(train_ratio * n));
    auto n_val = static_cast<std::size_t>(std::llround(val_ratio * n));
    n_train = std::min(n_train, ids.size() - 2);
    n_train = std::max<std::size_t>(n_train, 1);
    n_val = std::min(n_val, ids.size() - n_train - 1);
    n_val = std::max<std::size_t>(n_val, 1);
    split.train.assign(ids.begin(), ids.begin() + n_train);
    split.val.assign(ids.begin() + n_train, ids.begin() + n_train + n_val);
    split.test.assign(ids.begin() + n_train + n_val, ids.end());
  }
  return split;
}

DatasetStats dataset_stats(const std::vector<JointTrajectory>& trajs) {
  DatasetStats stats;
  std::array<std::vector<double>, kNumBehaviors> durations;
  for (const JointTrajectory& traj : trajs) {
    stats.total_frames += static_cast<long>(traj.frames.size());
    for (const JointFrame& f : traj.frames) stats.frame_count[label_index(f.label)]++;
    for (const ActionChunk& c : segment_chunks(traj)) {
      const int k = label_index(c.label);
      stats.event_count[k]++;
      durations[k].push_back(static_cast<double>(c.length()) / traj.rate_hz);
    }
  }
  for (int k = 0; k < kNumBehaviors; ++k) {
    auto& d = durations[k];
    if (d.empty()) continue;
    std::sort(d.begin(), d.end());
    DurationSummary s;
    s.min_s = d.front();
    s.max_s = d.back();
    const std::size_t m = d.size() / 2;
    s.median_s = (d.size() % 2 == 1) ? d[m] : 0.5 * (d[m - 1] + d[m]);
    stats.duration[k] = s;
  }
  return stats;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string stats_csv(const DatasetStats& stats) {
  std::string out = "class,frame_count,event_count,min_s,median_s,max_s\n";
  for (BehaviorLabel b : all_behaviors()) {
    const int k = label_index(b);
    out += std::string(to_string(b)) + ',' + std::to_string(stats.frame_count[k]) + ',' +
           std::to_string(stats.event_count[k]) + ',';
    if (stats.duration[k]) {
      out += format_double(stats.duration[k]->min_s) + ',' +
             format_double(stats.duration[k]->median_s) + ',' +
             format_double(stats.duration[k]->max_s);
    } else {
      out += ",,";
    }
    out += '\n';
  }
  return out;
}

std::vector<JointTrajectory> select_by_id(const std::vector<JointTrajectory>& trajs,
                                          const std::vector<std::string>& ids) {
  std::map<std::string, const JointTrajectory*> index;
  for (const JointTrajectory& t : trajs) index[t.id] = &t;
  std::vector<JointTrajectory> out;
  out.reserve(ids.size());
  for (const std::string& id : ids) {
    auto it = index.find(id);
    if (it == index.end()) {
      throw std::invalid_argument("unknown trajectory id '" + id + "'");
    }
    out.push_back(*it->second);
  }
  return out;
}

void atomic_write_file(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::invalid_argument("cannot write file '" + tmp.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::invalid_argument("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, target);
}

}  // namespace trajeval
