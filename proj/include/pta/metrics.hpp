#pragma once

// Trajectory and goal metrics over node-position polylines.
//
//   DTW    symmetric unit-step dynamic time warping, Euclidean point cost,
//          both endpoints aligned
//   nDTW   exp(-DTW / (|R| * d_th)), |R| = number of reference points, or
//          the reference length in metres under NdtwReference::kLength
//   SDTW   nDTW if the episode succeeded, else 0
//   CLS    PC * LS,  PC = mean_r exp(-min_q |r - q| / d_th),
//          LS = PC*L(R) / (PC*L(R) + |L(Q) - PC*L(R)|), with LS = 1 when the
//          denominator vanishes
//   SPL    S * l / max(p, l); l = 0 contributes S

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pta/errors.hpp"

namespace pta {

template <typename Scalar>
using Polyline = Eigen::Matrix<Scalar, Eigen::Dynamic, 3>;
template <typename Scalar>
using Point3 = Eigen::Matrix<Scalar, 1, 3>;

template <typename Scalar>
Scalar polyline_length(const Polyline<Scalar>& p) {
  Scalar total(0);
  for (Eigen::Index i = 1; i < p.rows(); ++i) total += (p.row(i) - p.row(i - 1)).norm();
  return total;
}

template <typename Scalar>
Scalar dtw(const Polyline<Scalar>& q, const Polyline<Scalar>& r) {
  if (q.rows() == 0 || r.rows() == 0) throw ContractError("dtw: sequences must be nonempty");
  const Eigen::Index n = q.rows(), m = r.rows();
  const Scalar inf = std::numeric_limits<Scalar>::infinity();
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> cost =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Constant(n + 1, m + 1, inf);
  cost(0, 0) = Scalar(0);
  for (Eigen::Index i = 1; i <= n; ++i) {
    for (Eigen::Index j = 1; j <= m; ++j) {
      const Scalar d = (q.row(i - 1) - r.row(j - 1)).norm();
      cost(i, j) = d + std::min({cost(i - 1, j), cost(i, j - 1), cost(i - 1, j - 1)});
    }
  }
  return cost(n, m);
}

enum class NdtwReference { kPoints, kLength };

std::string to_string(NdtwReference n);
NdtwReference ndtw_reference_from_string(const std::string& s);  // ConfigError if unknown

template <typename Scalar>
Scalar ndtw(const Polyline<Scalar>& q, const Polyline<Scalar>& r, Scalar d_th,
            NdtwReference norm = NdtwReference::kPoints) {
  if (!(d_th > Scalar(0))) throw ContractError("ndtw: d_th must be positive");
  Scalar size = Scalar(r.rows());
  // a one-node reference has no length; fall back to its point count
  if (norm == NdtwReference::kLength && r.rows() > 1) size = polyline_length(r);
  return std::exp(-dtw(q, r) / (size * d_th));
}

template <typename Scalar>
Scalar coverage_weighted_length_score(const Polyline<Scalar>& q, const Polyline<Scalar>& r,
                                      Scalar d_th) {
  if (q.rows() == 0 || r.rows() == 0) throw ContractError("cls: sequences must be nonempty");
  Scalar coverage(0);
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    Scalar best = std::numeric_limits<Scalar>::infinity();
    for (Eigen::Index k = 0; k < q.rows(); ++k) best = std::min(best, (r.row(i) - q.row(k)).norm());
    coverage += std::exp(-best / d_th);
  }
  coverage /= Scalar(r.rows());
  const Scalar expected = coverage * polyline_length(r);
  const Scalar denom = expected + std::abs(polyline_length(q) - expected);
  const Scalar length_score = denom > Scalar(0) ? expected / denom : Scalar(1);
  return coverage * length_score;
}

template <typename Scalar>
struct TrajectoryRecord {
  Polyline<Scalar> predicted;
  Polyline<Scalar> reference;
  Point3<Scalar> goal;
  Scalar d_th = Scalar(3);
  Scalar shortest_length = Scalar(0);  // geodesic start-to-goal distance
  NdtwReference norm = NdtwReference::kPoints;
};

template <typename Scalar>
Scalar navigation_error(const TrajectoryRecord<Scalar>& rec) {
  return (rec.predicted.row(rec.predicted.rows() - 1) - rec.goal).norm();
}

template <typename Scalar>
bool success(const TrajectoryRecord<Scalar>& rec) {
  return navigation_error(rec) <= rec.d_th;
}

template <typename Scalar>
bool oracle_success(const TrajectoryRecord<Scalar>& rec) {
  Scalar best = std::numeric_limits<Scalar>::infinity();
  for (Eigen::Index i = 0; i < rec.predicted.rows(); ++i) {
    best = std::min(best, (rec.predicted.row(i) - rec.goal).norm());
  }
  return best <= rec.d_th;
}

template <typename Scalar>
Scalar spl_term(bool succeeded, Scalar shortest, Scalar traversed) {
  if (!succeeded) return Scalar(0);
  if (shortest <= Scalar(0)) return Scalar(1);
  return shortest / std::max(traversed, shortest);
}

/// Mean SPL over episodes.
template <typename Scalar>
Scalar spl(std::span<const TrajectoryRecord<Scalar>> records) {
  if (records.empty()) return Scalar(0);
  Scalar total(0);
  for (const auto& r : records) {
    total += spl_term(success(r), r.shortest_length, polyline_length(r.predicted));
  }
  return total / Scalar(records.size());
}

template <typename Scalar>
Scalar sdtw(const TrajectoryRecord<Scalar>& rec) {
  return success(rec) ? ndtw(rec.predicted, rec.reference, rec.d_th, rec.norm) : Scalar(0);
}

struct EpisodeMetrics {
  std::string episode_id;
  double ne = 0, sr = 0, osr = 0, spl = 0, pl = 0, cls = 0, dtw = 0, ndtw = 0, sdtw = 0;
};

EpisodeMetrics evaluate_record(const std::string& id, const TrajectoryRecord<double>& rec);

inline constexpr int kReportFormatVersion = 1;

/// Per-episode rows plus their mean.
struct MetricsReport {
  std::vector<EpisodeMetrics> episodes;
  EpisodeMetrics mean;

  static MetricsReport from(std::vector<EpisodeMetrics> rows);
  /// Field order of every emitted row.
  static const std::vector<std::string>& columns();
  std::string to_csv() const;
  std::string to_json() const;
};

}  // namespace pta
