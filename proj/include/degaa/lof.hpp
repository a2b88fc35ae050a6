#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <vector>

#include "degaa/backbone.hpp"
#include "degaa/errors.hpp"
#include "degaa/rng.hpp"
#include "degaa/tensor.hpp"

namespace degaa {

struct LofConfig {
  std::size_t k = 20;        // neighbor count cap; effective k is min(k, n-1)
  double threshold = 1.5;    // scores strictly above are flagged unknown
  double epsilon = 1e-12;    // floors the mean reachability so duplicates score 1
  std::size_t projection_dim = 0;  // 0 = no projection before scoring

  void validate() const {
    if (k < 1) throw ConfigError("lof: k must be >= 1");
    if (!(threshold > 1.0)) throw ConfigError("lof: threshold must be > 1");
    if (!(epsilon > 0.0)) throw ConfigError("lof: epsilon must be positive");
  }
};

inline std::size_t lof_effective_k(const LofConfig& cfg, std::size_t n_points) {
  if (n_points < 2) throw ContractError("lof: need at least 2 points");
  return std::min(cfg.k, n_points - 1);
}

// Local Outlier Factor with tie-inclusive neighborhoods: N_k(p) holds every
// other point at distance <= k-distance(p), so |N_k(p)| >= k. Reachability
// means are taken over neighbors in ascending point index. Scores are
// invariant under translation, rotation and uniform scaling of the set.
inline std::vector<double> lof_scores(const Tensor& points, std::size_t k, double epsilon = 1e-12) {
  const std::size_t n = points.rows();
  if (k < 1) throw ContractError("lof_scores: k must be >= 1");
  if (n < k + 1)
    throw ContractError("lof_scores: need at least k+1 = " + std::to_string(k + 1) + " points, got " +
                        std::to_string(n));

  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t c = 0; c < points.cols(); ++c) {
        const double d = points(i, c) - points(j, c);
        acc += d * d;
      }
      const double d = std::sqrt(acc);
      dist[i * n + j] = d;
      dist[j * n + i] = d;
    }

  std::vector<double> k_distance(n);
  std::vector<std::vector<std::size_t>> neighbors(n);
  std::vector<double> others;
  for (std::size_t i = 0; i < n; ++i) {
    others.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) others.push_back(dist[i * n + j]);
    std::nth_element(others.begin(), others.begin() + static_cast<std::ptrdiff_t>(k - 1), others.end());
    k_distance[i] = others[k - 1];
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && dist[i * n + j] <= k_distance[i]) neighbors[i].push_back(j);
  }

  std::vector<double> lrd(n);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (const std::size_t o : neighbors[i]) sum += std::max(k_distance[o], dist[i * n + o]);
    const double mean_reach = sum / static_cast<double>(neighbors[i].size());
    lrd[i] = 1.0 / std::max(mean_reach, epsilon);
  }

  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (const std::size_t o : neighbors[i]) sum += lrd[o] / lrd[i];
    scores[i] = sum / static_cast<double>(neighbors[i].size());
  }
  return scores;
}

struct SplitResult {
  std::vector<std::size_t> known;
  std::vector<std::size_t> unknown;
  std::vector<double> scores;
};

// Partition by LOF score: index i is unknown iff score_i > threshold
// (strict). Both lists come out in ascending index order.
inline SplitResult split_known_unknown(const Tensor& points, const LofConfig& cfg) {
  cfg.validate();
  SplitResult result;
  result.scores = lof_scores(points, lof_effective_k(cfg, points.rows()), cfg.epsilon);
  for (std::size_t i = 0; i < result.scores.size(); ++i) {
    if (result.scores[i] > cfg.threshold)
      result.unknown.push_back(i);
    else
      result.known.push_back(i);
  }
  return result;
}

// Nearest centroid per row; distance ties resolve to the smallest class id.
inline std::vector<int> assign_pseudo_labels(const Tensor& points, const Centroids& centroids) {
  if (points.rows() == 0) return {};
  if (centroids.empty()) throw ContractError("assign_pseudo_labels: empty centroid set");
  std::vector<int> labels(points.rows());
  for (std::size_t i = 0; i < points.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    int best_cls = -1;
    for (const auto& [cls, center] : centroids) {
      if (center.size() != points.cols())
        throw DimensionError("assign_pseudo_labels: centroid dim " + std::to_string(center.size()) + " vs points " +
                             std::to_string(points.cols()));
      double acc = 0.0;
      for (std::size_t c = 0; c < center.size(); ++c) {
        const double d = points(i, c) - center[c];
        acc += d * d;
      }
      if (acc < best) {
        best = acc;
        best_cls = cls;
      }
    }
    labels[i] = best_cls;
  }
  return labels;
}

// Fixed random Gaussian map used to vary the dimensionality LOF sees.
inline Tensor lof_projection_matrix(std::size_t feat_dim, std::size_t out_dim, std::uint64_t seed) {
  Rng rng(seed);
  Tensor proj(feat_dim, out_dim);
  const double stddev = 1.0 / std::sqrt(static_cast<double>(feat_dim));
  for (std::size_t i = 0; i < proj.size(); ++i) proj[i] = rng.normal(0.0, stddev);
  return proj;
}

inline Tensor project_features(const Tensor& features, const LofConfig& cfg, std::uint64_t projection_seed) {
  if (cfg.projection_dim == 0 || cfg.projection_dim == features.cols()) return features;
  const Tensor proj = lof_projection_matrix(features.cols(), cfg.projection_dim, projection_seed);
  Tensor out(features.rows(), proj.cols());
  for (std::size_t i = 0; i < features.rows(); ++i)
    for (std::size_t j = 0; j < proj.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t c = 0; c < features.cols(); ++c) acc += features(i, c) * proj(c, j);
      out(i, j) = acc;
    }
  return out;
}

// LOF-partitioned batch with nearest-centroid labels for the known part.
struct PseudoLabelSet {
  std::vector<std::size_t> known;
  std::vector<std::size_t> unknown;
  std::map<std::size_t, int> labels;  // known batch index -> class id
  std::vector<double> lof_scores;
};

inline PseudoLabelSet pseudo_label(const Tensor& features, const LofConfig& cfg, std::uint64_t projection_seed,
                                   const Centroids& centroids) {
  const SplitResult split = split_known_unknown(project_features(features, cfg, projection_seed), cfg);
  PseudoLabelSet out;
  out.known = split.known;
  out.unknown = split.unknown;
  out.lof_scores = split.scores;
  if (!out.known.empty()) {
    Tensor known_feats(out.known.size(), features.cols());
    for (std::size_t r = 0; r < out.known.size(); ++r)
      for (std::size_t c = 0; c < features.cols(); ++c) known_feats(r, c) = features(out.known[r], c);
    const std::vector<int> labels = assign_pseudo_labels(known_feats, centroids);
    for (std::size_t r = 0; r < out.known.size(); ++r) out.labels[out.known[r]] = labels[r];
  }
  return out;
}

}  // namespace degaa
