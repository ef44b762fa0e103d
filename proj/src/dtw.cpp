#include "trajeval/dtw.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "trajeval/parallel.hpp"

namespace trajeval {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double row_distance(const Mat& a, int i, const Mat& b, int j) {
  double acc = 0.0;
  const double* ra = a.row(i);
  const double* rb = b.row(j);
  for (int c = 0; c < a.cols; ++c) {
    const double d = ra[c] - rb[c];
    acc += d * d;
  }
  return std::sqrt(acc);
}

void check_inputs(const Mat& a, const Mat& b) {
  if (a.rows == 0 || b.rows == 0) throw std::invalid_argument("dtw: empty sequence");
  if (a.cols != b.cols) {
    throw std::invalid_argument("dtw: dimension mismatch (" + std::to_string(a.cols) + " vs " +
                                std::to_string(b.cols) + ")");
  }
}

bool in_band(int i, int j, int n, int m, int radius) {
  if (radius < 0) return true;
  // Widen by the length difference so the corner stays reachable.
  const int width = radius + std::abs(n - m);
  return std::abs(i - j) <= width;
}

}  // namespace

DtwResult dtw(const Mat& a, const Mat& b, const DtwOptions& opts) {
  check_inputs(a, b);
  const int n = a.rows;
  const int m = b.rows;

  Mat cost(n, m);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      if (!in_band(i, j, n, m, opts.band_radius)) {
        cost(i, j) = kInf;
        continue;
      }
      const double local = row_distance(a, i, b, j);
      double best;
      if (i == 0 && j == 0) {
        best = 0.0;
      } else {
        best = kInf;
        if (i > 0 && j > 0) best = cost(i - 1, j - 1);
        if (i > 0) best = std::min(best, cost(i - 1, j));
        if (j > 0) best = std::min(best, cost(i, j - 1));
      }
      cost(i, j) = local + best;
    }
  }

  DtwResult res;
  res.cumulative_cost = cost(n - 1, m - 1);

  // Backtrack; on ties prefer the diagonal predecessor, then (i-1, j).
  std::vector<std::pair<int, int>> rev;
  int i = n - 1, j = m - 1;
  rev.emplace_back(i, j);
  while (i > 0 || j > 0) {
    const double diag = (i > 0 && j > 0) ? cost(i - 1, j - 1) : kInf;
    const double up = i > 0 ? cost(i - 1, j) : kInf;
    const double left = j > 0 ? cost(i, j - 1) : kInf;
    if (diag <= up && diag <= left) {
      --i;
      --j;
    } else if (up <= left) {
      --i;
    } else {
      --j;
    }
    rev.emplace_back(i, j);
  }
  res.path.assign(rev.rbegin(), rev.rend());
  res.normalized_cost = res.cumulative_cost / static_cast<double>(res.path.size());
  return res;
}

namespace {

double brute_rec(const Mat& a, const Mat& b, int i, int j) {
  const double local = row_distance(a, i, b, j);
  if (i == a.rows - 1 && j == b.rows - 1) return local;
  double best = kInf;
  if (i + 1 < a.rows && j + 1 < b.rows) best = std::min(best, brute_rec(a, b, i + 1, j + 1));
  if (i + 1 < a.rows) best = std::min(best, brute_rec(a, b, i + 1, j));
  if (j + 1 < b.rows) best = std::min(best, brute_rec(a, b, i, j + 1));
  return local + best;
}

}  // namespace

double dtw_bruteforce(const Mat& a, const Mat& b) {
  check_inputs(a, b);
  if (static_cast<long>(a.rows) * b.rows > 64) {
    throw std::invalid_argument("dtw_bruteforce: rows(a)*rows(b) must be <= 64");
  }
  return brute_rec(a, b, 0, 0);
}

BodyEmbedding identity_embedding(int dim, int out_dim) {
  BodyEmbedding emb;
  emb.matrix = Mat(out_dim, dim);
  for (int i = 0; i < std::min(out_dim, dim); ++i) emb.matrix(i, i) = 1.0;
  emb.label = "identity";
  return emb;
}

Mat embed(const Mat& seq, const BodyEmbedding& emb) {
  if (seq.cols != emb.matrix.cols) {
    throw std::invalid_argument("embed: sequence dimension " + std::to_string(seq.cols) +
                                " does not match embedding input " +
                                std::to_string(emb.matrix.cols));
  }
  Mat out(seq.rows, emb.matrix.rows);
  for (int r = 0; r < seq.rows; ++r) {
    matvec_add(emb.matrix, seq.row(r), out.row(r));
  }
  return out;
}

BodyEmbedding load_embedding(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open embedding file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("embedding file '" + path + "': " + e.what());
  }
  BodyEmbedding emb;
  emb.label = j.value("label", "embedding");
  const auto rows = j.at("matrix").get<std::vector<Vec>>();
  if (rows.empty()) throw std::invalid_argument("embedding matrix is empty");
  emb.matrix = Mat(static_cast<int>(rows.size()), static_cast<int>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.front().size()) {
      throw std::invalid_argument("embedding matrix rows have uneven lengths");
    }
    std::copy(rows[i].begin(), rows[i].end(), emb.matrix.row(static_cast<int>(i)));
  }
  return emb;
}

void save_embedding(const BodyEmbedding& emb, const std::string& path) {
  nlohmann::json j;
  j["label"] = emb.label;
  std::vector<Vec> rows;
  rows.reserve(emb.matrix.rows);
  for (int i = 0; i < emb.matrix.rows; ++i) {
    rows.emplace_back(emb.matrix.row(i), emb.matrix.row(i) + emb.matrix.cols);
  }
  j["matrix"] = rows;
  atomic_write_file(path, j.dump(2));
}

namespace {

Mat slice_rows(const JointTrajectory& traj, int begin, int end) {
  Mat out(end - begin, traj.dim());
  for (int i = begin; i < end; ++i) {
    const Vec& joints = traj.frames[i].joints;
    std::copy(joints.begin(), joints.end(), out.row(i - begin));
  }
  return out;
}

struct ChunkCost {
  BehaviorLabel label;
  double normalized;
  double cumulative;
};

void accumulate(PerClassDtw& out, const std::vector<ChunkCost>& costs,
                const std::set<BehaviorLabel>& eligible) {
  std::map<BehaviorLabel, std::pair<double, double>> sums;
  std::map<BehaviorLabel, int> counts;
  for (const ChunkCost& c : costs) {
    sums[c.label].first += c.normalized;
    sums[c.label].second += c.cumulative;
    counts[c.label]++;
    out.grand_mean_normalized += c.normalized;
    out.grand_mean_cumulative += c.cumulative;
    out.total_chunks++;
  }
  for (const auto& [label, count] : counts) {
    PerClassDtw::Entry e;
    e.chunks = count;
    e.mean_normalized = sums[label].first / count;
    e.mean_cumulative = sums[label].second / count;
    out.per_class[label] = e;
  }
  if (out.total_chunks > 0) {
    out.grand_mean_normalized /= out.total_chunks;
    out.grand_mean_cumulative /= out.total_chunks;
  }
  for (BehaviorLabel b : eligible) {
    if (!out.per_class.count(b)) out.absent.push_back(b);
  }
}

std::vector<ChunkCost> chunk_costs(const JointTrajectory& pred, const JointTrajectory& ref,
                                   const std::set<BehaviorLabel>& eligible,
                                   const BodyEmbedding* emb, const DtwOptions& opts,
                                   int threads) {
  if (pred.frames.size() != ref.frames.size()) {
    throw std::invalid_argument("per_class_dtw: trajectory '" + ref.id + "': pred has " +
                                std::to_string(pred.frames.size()) + " frames, ref has " +
                                std::to_string(ref.frames.size()));
  }
  for (std::size_t i = 0; i < ref.frames.size(); ++i) {
    if (pred.frames[i].label != ref.frames[i].label) {
      throw std::invalid_argument("per_class_dtw: trajectory '" + ref.id +
                                  "': label mismatch at frame " + std::to_string(i));
    }
  }
  std::vector<ActionChunk> chunks;
  for (const ActionChunk& c : segment_chunks(ref)) {
    if (eligible.count(c.label)) chunks.push_back(c);
  }
  std::vector<ChunkCost> costs(chunks.size());
  parallel_for(chunks.size(), threads, [&](std::size_t k) {
    const ActionChunk& c = chunks[k];
    Mat p = slice_rows(pred, c.start_index, c.end_index);
    Mat r = slice_rows(ref, c.start_index, c.end_index);
    if (emb != nullptr) {
      p = embed(p, *emb);
      r = embed(r, *emb);
    }
    const DtwResult d = dtw(p, r, opts);
    costs[k] = {c.label, d.normalized_cost, d.cumulative_cost};
  });
  return costs;
}

}  // namespace

PerClassDtw per_class_dtw(const JointTrajectory& pred, const JointTrajectory& ref,
                          const std::set<BehaviorLabel>& eligible, const BodyEmbedding* emb,
                          const DtwOptions& opts, int threads) {
  PerClassDtw out;
  accumulate(out, chunk_costs(pred, ref, eligible, emb, opts, threads), eligible);
  return out;
}

PerClassDtw per_class_dtw(const std::vector<JointTrajectory>& pred,
                          const std::vector<JointTrajectory>& ref,
                          const std::set<BehaviorLabel>& eligible, const BodyEmbedding* emb,
                          const DtwOptions& opts, int threads) {
  std::map<std::string, const JointTrajectory*> pred_by_id;
  for (const JointTrajectory& t : pred) pred_by_id[t.id] = &t;
  std::vector<ChunkCost> all;
  for (const JointTrajectory& r : ref) {
    auto it = pred_by_id.find(r.id);
    if (it == pred_by_id.end()) {
      throw std::invalid_argument("per_class_dtw: no predicted trajectory with id '" + r.id + "'");
    }
    std::vector<ChunkCost> costs = chunk_costs(*it->second, r, eligible, emb, opts, threads);
    all.insert(all.end(), costs.begin(), costs.end());
  }
  PerClassDtw out;
  accumulate(out, all, eligible);
  return out;
}

std::string per_class_dtw_csv(const PerClassDtw& result) {
  std::string out = "class,chunks,mean_normalized_dtw,mean_cumulative_dtw\n";
  for (BehaviorLabel b : all_behaviors()) {
    auto it = result.per_class.find(b);
    if (it == result.per_class.end()) continue;
    out += std::string(to_string(b)) + ',' + std::to_string(it->second.chunks) + ',' +
           format_double(it->second.mean_normalized) + ',' +
           format_double(it->second.mean_cumulative) + '\n';
  }
  out += "all," + std::to_string(result.total_chunks) + ',' +
         format_double(result.grand_mean_normalized) + ',' +
         format_double(result.grand_mean_cumulative) + '\n';
  return out;
}

}  // namespace trajeval
