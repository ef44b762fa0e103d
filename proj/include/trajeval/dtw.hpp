#pragma once

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "trajeval/core.hpp"

namespace trajeval {

// Feature sequences are row-major matrices: one row per time step, uniform
// dimension (joint space D, or an embedded space such as 63 = 21 x 3D body
// points).

struct DtwResult {
  double cumulative_cost = 0.0;
  std::vector<std::pair<int, int>> path;  // (row of a, row of b), start (0,0)
  double normalized_cost = 0.0;           // cumulative_cost / path length
};

struct DtwOptions {
  // Sakoe-Chiba band half-width on |i - j| (after accounting for the length
  // difference); negative disables the constraint.
  int band_radius = -1;
};

// Classic O(n*m) dynamic program with steps {(1,0),(0,1),(1,1)} and local
// cost = Euclidean distance between rows. The returned path is optimal;
// ties prefer the diagonal step, then the step that advances `a`.
DtwResult dtw(const Mat& a, const Mat& b, const DtwOptions& opts = {});

// Exhaustive enumeration of all monotone warping paths; verification oracle
// only. Requires rows(a)*rows(b) <= 64.
double dtw_bruteforce(const Mat& a, const Mat& b);

// Fixed linear map from joint space to an embedded body-point space.
struct BodyEmbedding {
  Mat matrix;  // out_dim x D
  std::string label;
};

// First min(D, out_dim) coordinates copied, the rest zero.
BodyEmbedding identity_embedding(int dim, int out_dim = 63);
BodyEmbedding load_embedding(const std::string& path);
void save_embedding(const BodyEmbedding& emb, const std::string& path);

// Row-wise application of the embedding.
Mat embed(const Mat& seq, const BodyEmbedding& emb);

inline const std::set<BehaviorLabel>& default_dtw_classes() {
  static const std::set<BehaviorLabel> classes{BehaviorLabel::wave, BehaviorLabel::shake,
                                               BehaviorLabel::pick, BehaviorLabel::still};
  return classes;
}

struct PerClassDtw {
  struct Entry {
    int chunks = 0;
    double mean_normalized = 0.0;
    double mean_cumulative = 0.0;
  };
  std::map<BehaviorLabel, Entry> per_class;       // only classes with chunks
  std::vector<BehaviorLabel> absent;              // eligible but not present
  int total_chunks = 0;
  double grand_mean_normalized = 0.0;             // over all eligible chunks
  double grand_mean_cumulative = 0.0;
};

// Chunks `ref` by label and, for every chunk whose label is eligible,
// computes DTW between the matching pred/ref frame ranges (embedded first
// when emb is given). pred must cover the same frame range as ref with
// identical labels. Per-chunk computations run in parallel; results merge
// in chunk order.
PerClassDtw per_class_dtw(const JointTrajectory& pred, const JointTrajectory& ref,
                          const std::set<BehaviorLabel>& eligible = default_dtw_classes(),
                          const BodyEmbedding* emb = nullptr,
                          const DtwOptions& opts = {}, int threads = 1);

// Aggregate over aligned datasets; pred and ref are matched by trajectory id.
PerClassDtw per_class_dtw(const std::vector<JointTrajectory>& pred,
                          const std::vector<JointTrajectory>& ref,
                          const std::set<BehaviorLabel>& eligible = default_dtw_classes(),
                          const BodyEmbedding* emb = nullptr,
                          const DtwOptions& opts = {}, int threads = 1);

// CSV: class,chunks,mean_normalized_dtw,mean_cumulative_dtw
std::string per_class_dtw_csv(const PerClassDtw& result);

}  // namespace trajeval
