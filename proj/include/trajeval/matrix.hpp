#pragma once

#include <cstddef>
#include <vector>

namespace trajeval {

using Vec = std::vector<double>;

// Dense row-major matrix. Small and transparent on purpose: the training
// core needs flat parameter blocks for serialization, optimizer state and
// finite-difference checks.
struct Mat {
  int rows = 0;
  int cols = 0;
  Vec a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

  double& operator()(int i, int j) { return a[static_cast<std::size_t>(i) * cols + j]; }
  double operator()(int i, int j) const { return a[static_cast<std::size_t>(i) * cols + j]; }

  double* row(int i) { return a.data() + static_cast<std::size_t>(i) * cols; }
  const double* row(int i) const { return a.data() + static_cast<std::size_t>(i) * cols; }

  std::size_t size() const { return a.size(); }
  void fill(double v) { a.assign(a.size(), v); }

  bool operator==(const Mat& o) const = default;
};

// y += M x  (x: cols entries, y: rows entries)
inline void matvec_add(const Mat& m, const double* x, double* y) {
  for (int i = 0; i < m.rows; ++i) {
    const double* r = m.row(i);
    double acc = 0.0;
    for (int j = 0; j < m.cols; ++j) acc += r[j] * x[j];
    y[i] += acc;
  }
}

// y += M^T x  (x: rows entries, y: cols entries)
inline void matvec_t_add(const Mat& m, const double* x, double* y) {
  for (int i = 0; i < m.rows; ++i) {
    const double* r = m.row(i);
    const double xi = x[i];
    for (int j = 0; j < m.cols; ++j) y[j] += r[j] * xi;
  }
}

// M += u v^T  (u: rows entries, v: cols entries)
inline void outer_add(Mat& m, const double* u, const double* v) {
  for (int i = 0; i < m.rows; ++i) {
    double* r = m.row(i);
    const double ui = u[i];
    for (int j = 0; j < m.cols; ++j) r[j] += ui * v[j];
  }
}

}  // namespace trajeval
