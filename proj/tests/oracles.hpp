#pragma once

// Independent reference implementations used by the unit suites and the
// acceptance binary. None of them calls into the code they check beyond the
// environment's step function and world geometry.

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <tuple>
#include <vector>

#include "pta/metrics.hpp"
#include "pta/nav_env.hpp"

namespace pta::oracle {

/// DTW by enumerating every monotone alignment path from (0,0) to (n-1,m-1)
/// with unit steps right, down and diagonal.
inline double dtw_enumerate(const Polyline<double>& q, const Polyline<double>& r) {
  const Index n = q.rows(), m = r.rows();
  double best = std::numeric_limits<double>::infinity();
  std::function<void(Index, Index, double)> walk = [&](Index i, Index j, double acc) {
    acc += (q.row(i) - r.row(j)).norm();
    if (i == n - 1 && j == m - 1) {
      best = std::min(best, acc);
      return;
    }
    if (i + 1 < n) walk(i + 1, j, acc);
    if (j + 1 < m) walk(i, j + 1, acc);
    if (i + 1 < n && j + 1 < m) walk(i + 1, j + 1, acc);
  };
  walk(0, 0, 0.0);
  return best;
}

enum class BfsTarget {
  kOrdered,  // visit the reference nodes in order, detours allowed
  kOnPath,   // forward steps only onto the next reference node
  kGoal,     // reach the goal node by any route
};

/// Fewest atomic steps (end_episode included) for `target`. A forward step is
/// admissible only at the elevation the teacher's tilt rule requires for that
/// edge.
inline int bfs_optimal_steps(const World& world, const Episode& episode,
                             BfsTarget target = BfsTarget::kOrdered) {
  using State = std::tuple<int, int, int, int>;  // node, heading, elevation, progress
  const int n = static_cast<int>(episode.path.size());
  auto advance = [&](int progress, int node) {
    if (target == BfsTarget::kGoal) return node == episode.goal() ? n : 0;
    while (progress < n && episode.path[static_cast<std::size_t>(progress)] == node) ++progress;
    return progress;
  };
  const State start{episode.start(), episode.heading, episode.elevation, advance(0, episode.start())};
  std::map<State, int> dist{{start, 0}};
  std::deque<State> queue{start};
  while (!queue.empty()) {
    const State s = queue.front();
    queue.pop_front();
    const auto [node, heading, elevation, progress] = s;
    const int d = dist[s];
    if (progress == n) return d + 1;
    std::vector<State> next;
    next.emplace_back(node, (heading + 1) % 12, elevation, progress);
    next.emplace_back(node, (heading + 11) % 12, elevation, progress);
    next.emplace_back(node, heading, std::min(elevation + 1, 1), progress);
    next.emplace_back(node, heading, std::max(elevation - 1, -1), progress);
    // Forward: the neighbor whose bearing falls in the facing sector.
    for (int m : world.neighbors[static_cast<std::size_t>(node)]) {
      const auto& a = world.positions[static_cast<std::size_t>(node)];
      const auto& b = world.positions[static_cast<std::size_t>(m)];
      const double az = std::atan2(b.x() - a.x(), b.y() - a.y());
      const int sector = static_cast<int>(std::floor((az * 180.0 / M_PI + 15.0) / 30.0 + 24.0)) % 12;
      const double horizontal = std::hypot(b.x() - a.x(), b.y() - a.y());
      const double pitch = std::atan2(b.z() - a.z(), horizontal) * 180.0 / M_PI;
      const int want_elevation = pitch > 15.0 ? 1 : (pitch < -15.0 ? -1 : 0);
      if (target == BfsTarget::kOnPath && (progress >= n || m != episode.path[static_cast<std::size_t>(progress)])) continue;
      if (sector == heading && want_elevation == elevation) next.emplace_back(m, heading, elevation, advance(progress, m));
    }
    for (const auto& t : next) {
      if (dist.emplace(t, d + 1).second) queue.push_back(t);
    }
  }
  return -1;
}

/// All simple paths from a to b by depth-first enumeration; returns the
/// fewest-hop ones, lexicographically smallest first.
inline std::vector<int> shortest_path_enumerate(const World& world, int a, int b) {
  std::vector<int> best;
  std::vector<int> current{a};
  std::vector<bool> seen(static_cast<std::size_t>(world.size()), false);
  seen[static_cast<std::size_t>(a)] = true;
  std::function<void()> dfs = [&] {
    const int here = current.back();
    if (here == b) {
      if (best.empty() || current.size() < best.size() || (current.size() == best.size() && current < best)) best = current;
      return;
    }
    if (!best.empty() && current.size() >= best.size()) return;
    for (int m : world.neighbors[static_cast<std::size_t>(here)]) {
      if (seen[static_cast<std::size_t>(m)]) continue;
      seen[static_cast<std::size_t>(m)] = true;
      current.push_back(m);
      dfs();
      current.pop_back();
      seen[static_cast<std::size_t>(m)] = false;
    }
  };
  dfs();
  return best;
}

/// Scalar Adam with bias correction.
struct ScalarAdam {
  double m = 0.0, v = 0.0;
  long t = 0;
  double step(double param, double grad, double lr, double b1 = 0.9, double b2 = 0.999, double eps = 1e-8) {
    ++t;
    m = b1 * m + (1.0 - b1) * grad;
    v = b2 * v + (1.0 - b2) * grad * grad;
    const double mh = m / (1.0 - std::pow(b1, static_cast<double>(t)));
    const double vh = v / (1.0 - std::pow(b2, static_cast<double>(t)));
    return param - lr * mh / (std::sqrt(vh) + eps);
  }
};

}  // namespace pta::oracle
