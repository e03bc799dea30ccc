#pragma once

// Independent reference implementations used as test oracles. They favor
// plain loops over the library's vectorized code paths.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "rapi/common.hpp"
#include "rapi/dataset.hpp"

namespace rapi::test {

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng,
                            double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = d(rng);
  }
  return m;
}

// Central differences over every entry of every parameter, compared with the
// analytic gradient as ||a - n|| / max(||a||, ||n||).
inline double gradient_relative_error(const std::vector<Matrix*>& params,
                                      const std::vector<Matrix>& analytic,
                                      const std::function<double()>& loss, double h = 1e-4) {
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Matrix& m = *params[p];
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        const double saved = m(i, j);
        m(i, j) = saved + h;
        const double up = loss();
        m(i, j) = saved - h;
        const double down = loss();
        m(i, j) = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double a = analytic[p](i, j);
        diff2 += (a - numeric) * (a - numeric);
        a2 += a * a;
        n2 += numeric * numeric;
      }
    }
  }
  const double scale = std::max(std::sqrt(std::max(a2, n2)), 1e-12);
  return std::sqrt(diff2) / scale;
}

inline double plain_distance(const double* a, const double* b, Eigen::Index dim) {
  double s = 0.0;
  for (Eigen::Index d = 0; d < dim; ++d) s += (a[d] - b[d]) * (a[d] - b[d]);
  return std::sqrt(s);
}

// Brute-force list extension: score every admissible candidate, sort by
// (res, id), keep the first k2 - k.
inline std::vector<ItemIndex> brute_force_augment(const std::vector<ItemIndex>& list,
                                                  const Matrix& embedding,  // row = item id
                                                  std::size_t k2,
                                                  const std::vector<ItemIndex>& exclude) {
  std::vector<std::pair<double, ItemIndex>> scored;
  for (ItemIndex c = 0; c < static_cast<ItemIndex>(embedding.rows()); ++c) {
    if (std::find(list.begin(), list.end(), c) != list.end()) continue;
    if (std::find(exclude.begin(), exclude.end(), c) != exclude.end()) continue;
    double total = 0.0;
    for (ItemIndex j : list) {
      total += plain_distance(embedding.row(c).data(), embedding.row(j).data(), embedding.cols());
    }
    scored.emplace_back(total / static_cast<double>(list.size()), c);
  }
  std::sort(scored.begin(), scored.end());
  std::vector<ItemIndex> out = list;
  for (std::size_t i = 0; out.size() < k2 && i < scored.size(); ++i) out.push_back(scored[i].second);
  return out;
}

// Brute-force k nearest neighbors by squared distance; ties by row; majority
// vote with ties to the smallest class.
inline int brute_force_knn(const Matrix& x, const std::vector<int>& labels, int num_classes, int k,
                           const Vector& query, std::vector<std::size_t>* neighbors = nullptr) {
  std::vector<std::pair<double, std::size_t>> d;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double s = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) s += (x(r, c) - query[c]) * (x(r, c) - query[c]);
    d.emplace_back(s, static_cast<std::size_t>(r));
  }
  std::sort(d.begin(), d.end());
  std::vector<int> votes(static_cast<std::size_t>(num_classes), 0);
  if (neighbors) neighbors->clear();
  for (int i = 0; i < k && i < static_cast<int>(d.size()); ++i) {
    ++votes[labels[d[i].second]];
    if (neighbors) neighbors->push_back(d[i].second);
  }
  int best = 0;
  for (int c = 1; c < num_classes; ++c) {
    if (votes[c] > votes[best]) best = c;
  }
  return best;
}

// Set-overlap similarity computed with nested loops.
inline double brute_force_overlap(const std::vector<ItemIndex>& a, const std::vector<ItemIndex>& b) {
  std::size_t hits = 0;
  for (ItemIndex x : a) {
    for (ItemIndex y : b) {
      if (x == y) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(a.size());
}

}  // namespace rapi::test
