#include "pta/nav_env.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numbers>
#include <numeric>
#include <queue>
#include <set>

namespace pta {

namespace {

constexpr double kSectorRadians = std::numbers::pi / 6.0;

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) {
  return splitmix(splitmix(splitmix(a) ^ b) ^ c);
}

RowVector gaussian_vector(std::uint64_t key, Index dim) {
  std::mt19937_64 rng(key);
  std::normal_distribution<double> normal(0.0, 1.0);
  RowVector v(dim);
  for (Index i = 0; i < dim; ++i) v(i) = normal(rng);
  return v;
}

// Feature components shared by every world, so that navigability looks
// the same in unseen worlds.
constexpr std::uint64_t kSharedKey = 0x5eed0f0d00a5ULL;

Matrix synthesize_node(const World& world, int node) {
  const Index d = world.d_feat;
  enum : std::uint64_t { kAppearance = 1, kDirection = 2, kElevation = 3, kNoise = 4, kLandmark = 5 };
  auto landmark = [&](int n) {
    return gaussian_vector(mix(kSharedKey, kLandmark, static_cast<std::uint64_t>(world.landmarks[static_cast<std::size_t>(n)])), d);
  };
  auto appearance = [&](int n) {
    return RowVector(landmark(n) + 0.5 * gaussian_vector(mix(world.seed, kAppearance, n), d));
  };
  const RowVector own = appearance(node);
  std::vector<RowVector> direction;
  for (int s = 0; s < kHeadingSectors; ++s) {
    direction.push_back(
        gaussian_vector(mix(world.seed, kDirection, static_cast<std::uint64_t>(node) * 16 + s), d));
  }
  const RowVector door = gaussian_vector(mix(kSharedKey, 1), d);

  Matrix block(kViewCount, d);
  for (int row = 0; row < kElevationRows; ++row) {
    const RowVector elevation = gaussian_vector(mix(kSharedKey, kElevation, row), d);
    for (int s = 0; s < kHeadingSectors; ++s) {
      RowVector f = 0.5 * own + 0.4 * direction[s] +
                    0.2 * (direction[wrap_sector(s - 1)] + direction[wrap_sector(s + 1)]) +
                    0.3 * elevation;
      for (int m : world.neighbors[node]) {
        if (edge_heading(world, node, m) != s) continue;
        const int row_of_edge = edge_elevation(world, node, m) + 1;
        if (row == 1 || row == row_of_edge) f += door + 0.8 * appearance(m);
      }
      f += 0.05 * gaussian_vector(
                      mix(world.seed, kNoise, static_cast<std::uint64_t>(node) * 64 + row * 12 + s),
                      d);
      block.row(row * kHeadingSectors + s) = f;
    }
  }
  return block;
}

}  // namespace

// ---- features ------------------------------------------------------------------

TableFeatures::TableFeatures(std::vector<Matrix> per_node) : per_node_(std::move(per_node)) {
  if (!per_node_.empty()) dim_ = per_node_.front().cols();
  for (const auto& m : per_node_) {
    if (m.rows() != kViewCount || m.cols() != dim_) {
      throw DataError("feature table: every node needs a 36 x " + std::to_string(dim_) + " block");
    }
  }
}

RowVector TableFeatures::view(int node, int view) const {
  if (node < 0 || node >= static_cast<int>(per_node_.size()) || view < 0 || view >= kViewCount) {
    throw IndexError("feature table: no view " + std::to_string(view) + " for node " +
                     std::to_string(node));
  }
  return per_node_[static_cast<std::size_t>(node)].row(view);
}

void assign_landmarks(World& world) {
  const int n = world.size();
  std::vector<std::vector<int>> near(static_cast<std::size_t>(n));
  for (int a = 0; a < n; ++a) {
    std::set<int> ball;
    for (int b : world.neighbors[static_cast<std::size_t>(a)]) {
      ball.insert(b);
      for (int c : world.neighbors[static_cast<std::size_t>(b)]) ball.insert(c);
    }
    ball.erase(a);
    near[static_cast<std::size_t>(a)].assign(ball.begin(), ball.end());
  }
  std::mt19937_64 rng(mix(world.seed, 0x1a4d));
  std::vector<int> best;
  int best_conflicts = std::numeric_limits<int>::max();
  for (int attempt = 0; attempt < 200 && best_conflicts > 0; ++attempt) {
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<int> cls(static_cast<std::size_t>(n), -1);
    int conflicts = 0;
    for (int a : order) {
      std::vector<int> free;
      for (int k = 0; k < kNumLandmarks; ++k) {
        bool used = false;
        for (int b : near[static_cast<std::size_t>(a)]) used = used || cls[static_cast<std::size_t>(b)] == k;
        if (!used) free.push_back(k);
      }
      if (free.empty()) {
        ++conflicts;
        cls[static_cast<std::size_t>(a)] = std::uniform_int_distribution<int>(0, kNumLandmarks - 1)(rng);
      } else {
        cls[static_cast<std::size_t>(a)] =
            free[static_cast<std::size_t>(std::uniform_int_distribution<int>(0, static_cast<int>(free.size()) - 1)(rng))];
      }
    }
    if (conflicts < best_conflicts) {
      best_conflicts = conflicts;
      best = cls;
    }
  }
  world.landmarks = std::move(best);
}

void attach_synthetic_features(World& world) {
  if (static_cast<int>(world.landmarks.size()) != world.size()) assign_landmarks(world);
  std::vector<Matrix> blocks;
  blocks.reserve(static_cast<std::size_t>(world.size()));
  for (int n = 0; n < world.size(); ++n) blocks.push_back(synthesize_node(world, n));
  world.features = std::make_shared<TableFeatures>(std::move(blocks));
}

// ---- world ---------------------------------------------------------------------

bool World::adjacent(int a, int b) const {
  if (a < 0 || a >= size()) return false;
  const auto& n = neighbors[static_cast<std::size_t>(a)];
  return std::binary_search(n.begin(), n.end(), b);
}

std::vector<std::pair<int, int>> World::edges() const {
  std::vector<std::pair<int, int>> out;
  for (int a = 0; a < size(); ++a) {
    for (int b : neighbors[static_cast<std::size_t>(a)]) {
      if (a < b) out.emplace_back(a, b);
    }
  }
  return out;
}

void World::validate() const {
  if (neighbors.size() != positions.size()) {
    throw DataError("world " + scan + ": adjacency and node counts differ");
  }
  for (int a = 0; a < size(); ++a) {
    if (!positions[static_cast<std::size_t>(a)].allFinite()) {
      throw DataError("world " + scan + ": node " + std::to_string(a) + " has a non-finite position");
    }
    for (int b : neighbors[static_cast<std::size_t>(a)]) {
      if (b < 0 || b >= size() || b == a) {
        throw DataError("world " + scan + ": node " + std::to_string(a) + " has invalid neighbor " +
                        std::to_string(b));
      }
      if (!adjacent(b, a)) {
        throw DataError("world " + scan + ": edge " + std::to_string(a) + "-" + std::to_string(b) +
                        " is not symmetric");
      }
    }
  }
}

// ---- geometry ------------------------------------------------------------------

int wrap_sector(int s) { return ((s % kHeadingSectors) + kHeadingSectors) % kHeadingSectors; }

double azimuth(const Eigen::Vector3d& from, const Eigen::Vector3d& to) {
  const Eigen::Vector3d d = to - from;
  return std::atan2(d.x(), d.y());
}

int heading_sector_of(double azimuth_radians) {
  const double sectors = std::floor((azimuth_radians + kSectorRadians / 2.0) / kSectorRadians);
  return wrap_sector(static_cast<int>(sectors));
}

int edge_heading(const World& world, int from, int to) {
  return heading_sector_of(azimuth(world.positions[static_cast<std::size_t>(from)],
                                   world.positions[static_cast<std::size_t>(to)]));
}

int edge_elevation(const World& world, int from, int to) {
  const Eigen::Vector3d d =
      world.positions[static_cast<std::size_t>(to)] - world.positions[static_cast<std::size_t>(from)];
  const double pitch = std::atan2(d.z(), std::hypot(d.x(), d.y()));
  if (pitch > kSectorRadians / 2.0) return 1;
  if (pitch < -kSectorRadians / 2.0) return -1;
  return 0;
}

std::pair<double, double> sector_sin_cos(int sectors) {
  static const double h = std::sqrt(3.0) / 2.0;
  static const double sines[12] = {0.0, 0.5, h, 1.0, h, 0.5, 0.0, -0.5, -h, -1.0, -h, -0.5};
  const int s = wrap_sector(sectors);
  return {sines[s], sines[wrap_sector(s + 3)]};
}

// ---- environment ---------------------------------------------------------------

Matrix PanoramicObservation::stacked() const {
  Matrix out(features.rows(), features.cols() + coords.cols());
  out << features, coords;
  return out;
}

PanoramicObservation observe(const World& world, const AgentPose& pose) {
  if (!world.features) throw ContractError("observe: world " + world.scan + " has no features");
  const Index d = world.features->dim();
  PanoramicObservation obs{Matrix(kViewCount, d), Matrix(kViewCount, 3)};
  for (int row = 0; row < kElevationRows; ++row) {
    const double sin_theta = sector_sin_cos(row - 1).first;
    for (int c = 0; c < kHeadingSectors; ++c) {
      const int abs_sector = wrap_sector(pose.heading + c);
      const int i = row * kHeadingSectors + c;
      obs.features.row(i) = world.features->view(pose.node, row * kHeadingSectors + abs_sector);
      const auto [s, co] = sector_sin_cos(c);
      obs.coords(i, 0) = s;
      obs.coords(i, 1) = co;
      obs.coords(i, 2) = sin_theta;
    }
  }
  return obs;
}

std::optional<int> forward_target(const World& world, const AgentPose& pose) {
  const auto& here = world.positions[static_cast<std::size_t>(pose.node)];
  const double facing = pose.heading * kSectorRadians;
  std::optional<int> best;
  double best_angle = 0.0, best_dist = 0.0;
  for (int m : world.neighbors[static_cast<std::size_t>(pose.node)]) {
    if (edge_heading(world, pose.node, m) != pose.heading) continue;
    double rel = azimuth(here, world.positions[static_cast<std::size_t>(m)]) - facing;
    rel = std::remainder(rel, 2.0 * std::numbers::pi);
    const double angle = std::abs(rel);
    const double dist = (world.positions[static_cast<std::size_t>(m)] - here).norm();
    if (!best || angle < best_angle || (angle == best_angle && dist < best_dist)) {
      best = m;
      best_angle = angle;
      best_dist = dist;
    }
  }
  return best;
}

StepResult step_low(const World& world, const AgentPose& pose, LowAction action) {
  StepResult r{pose, false};
  switch (action) {
    case LowAction::kTurnLeft: r.pose.heading = wrap_sector(pose.heading - 1); break;
    case LowAction::kTurnRight: r.pose.heading = wrap_sector(pose.heading + 1); break;
    case LowAction::kTiltUp: r.pose.elevation = std::min(pose.elevation + 1, 1); break;
    case LowAction::kTiltDown: r.pose.elevation = std::max(pose.elevation - 1, -1); break;
    case LowAction::kStepForward:
      if (auto next = forward_target(world, pose)) r.pose.node = *next;
      break;
    case LowAction::kEndEpisode: r.done = true; break;
  }
  return r;
}

StepResult step_high(const World& world, const AgentPose& pose, const HighLevelAction& action) {
  if (action.stop) return {pose, true};
  if (!world.adjacent(pose.node, action.target)) {
    throw ContractError("step_high: node " + std::to_string(action.target) +
                        " is not adjacent to " + std::to_string(pose.node));
  }
  return {AgentPose{action.target, edge_heading(world, pose.node, action.target), 0}, false};
}

Matrix teleport_candidates(const World& world, const AgentPose& pose) {
  const auto& nbrs = world.neighbors[static_cast<std::size_t>(pose.node)];
  const Index d = world.features->dim();
  Matrix out(static_cast<Index>(nbrs.size()), d + 3);
  for (std::size_t i = 0; i < nbrs.size(); ++i) {
    const int heading = edge_heading(world, pose.node, nbrs[i]);
    const int elevation = edge_elevation(world, pose.node, nbrs[i]);
    const auto r = static_cast<Index>(i);
    out.row(r).head(d) =
        world.features->view(pose.node, (elevation + 1) * kHeadingSectors + heading);
    const auto [s, c] = sector_sin_cos(heading - pose.heading);
    out(r, d) = s;
    out(r, d + 1) = c;
    out(r, d + 2) = sector_sin_cos(elevation).first;
  }
  return out;
}

// ---- teachers ------------------------------------------------------------------

int initial_progress(const Episode& episode) { return advance_progress(episode, 0, episode.start()); }

int advance_progress(const Episode& episode, int progress, int node) {
  const int n = static_cast<int>(episode.path.size());
  while (progress < n && episode.path[static_cast<std::size_t>(progress)] == node) ++progress;
  return progress;
}

int teacher_waypoint(const World& world, const AgentPose& pose, const Episode& episode,
                     int progress) {
  const int next = episode.path[static_cast<std::size_t>(progress)];
  if (world.adjacent(pose.node, next)) return next;
  if (progress > 0 && episode.path[static_cast<std::size_t>(progress - 1)] == pose.node) {
    throw DataError("episode " + episode.id + ": reference nodes " + std::to_string(pose.node) +
                    " and " + std::to_string(next) + " are not adjacent");
  }
  try {
    return shortest_path(world, pose.node, next).at(1);
  } catch (const PathError& e) {
    throw OracleError("teacher: next reference node " + std::to_string(next) +
                      " is unreachable from " + std::to_string(pose.node));
  }
}

LowAction teacher_low(const World& world, const AgentPose& pose, const Episode& episode,
                      int progress) {
  if (progress >= static_cast<int>(episode.path.size())) return LowAction::kEndEpisode;
  const int target = teacher_waypoint(world, pose, episode, progress);
  const int want_heading = edge_heading(world, pose.node, target);
  if (want_heading != pose.heading) {
    const int right_turns = wrap_sector(want_heading - pose.heading);
    return right_turns <= kHeadingSectors - right_turns ? LowAction::kTurnRight
                                                        : LowAction::kTurnLeft;
  }
  const int want_elevation = edge_elevation(world, pose.node, target);
  if (want_elevation > pose.elevation) return LowAction::kTiltUp;
  if (want_elevation < pose.elevation) return LowAction::kTiltDown;
  return LowAction::kStepForward;
}

HighLevelAction teacher_high(const World& world, const AgentPose& pose, const Episode& episode,
                             int progress) {
  if (progress >= static_cast<int>(episode.path.size())) return HighLevelAction::halt();
  return HighLevelAction::to(teacher_waypoint(world, pose, episode, progress));
}

std::vector<LowAction> teacher_low_actions(const World& world, const Episode& episode) {
  std::vector<LowAction> actions;
  AgentPose pose = episode.start_pose();
  int progress = initial_progress(episode);
  // A consistent episode never needs more than this many atomic steps.
  const int limit = static_cast<int>(episode.path.size()) * (kHeadingSectors / 2 + 3) + 1;
  for (int i = 0; i <= limit; ++i) {
    const LowAction a = teacher_low(world, pose, episode, progress);
    actions.push_back(a);
    if (a == LowAction::kEndEpisode) return actions;
    pose = step_low(world, pose, a).pose;
    progress = advance_progress(episode, progress, pose.node);
  }
  throw OracleError("episode " + episode.id + ": teacher failed to terminate");
}

int default_max_steps(int teacher_length, bool high_level) {
  return std::max(3 * teacher_length, high_level ? 6 : 23);
}

// ---- graph ---------------------------------------------------------------------

namespace {

std::vector<int> hop_distances(const World& world, int source) {
  std::vector<int> dist(static_cast<std::size_t>(world.size()), -1);
  std::deque<int> queue{source};
  dist[static_cast<std::size_t>(source)] = 0;
  while (!queue.empty()) {
    const int u = queue.front();
    queue.pop_front();
    for (int v : world.neighbors[static_cast<std::size_t>(u)]) {
      if (dist[static_cast<std::size_t>(v)] < 0) {
        dist[static_cast<std::size_t>(v)] = dist[static_cast<std::size_t>(u)] + 1;
        queue.push_back(v);
      }
    }
  }
  return dist;
}

void require_node(const World& world, int node, const char* what) {
  if (node < 0 || node >= world.size()) {
    throw IndexError(std::string(what) + ": node " + std::to_string(node) + " not in world " +
                     world.scan);
  }
}

}  // namespace

std::vector<int> shortest_path(const World& world, int from, int to) {
  require_node(world, from, "shortest_path");
  require_node(world, to, "shortest_path");
  const auto dist = hop_distances(world, to);
  if (dist[static_cast<std::size_t>(from)] < 0) {
    throw PathError("shortest_path: " + std::to_string(from) + " and " + std::to_string(to) +
                    " are disconnected in " + world.scan);
  }
  std::vector<int> path{from};
  int u = from;
  while (u != to) {
    for (int v : world.neighbors[static_cast<std::size_t>(u)]) {
      if (dist[static_cast<std::size_t>(v)] == dist[static_cast<std::size_t>(u)] - 1) {
        u = v;
        break;
      }
    }
    path.push_back(u);
  }
  return path;
}

double geodesic_distance(const World& world, int from, int to) {
  require_node(world, from, "geodesic_distance");
  require_node(world, to, "geodesic_distance");
  std::vector<double> dist(static_cast<std::size_t>(world.size()),
                           std::numeric_limits<double>::infinity());
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  dist[static_cast<std::size_t>(from)] = 0.0;
  heap.emplace(0.0, from);
  while (!heap.empty()) {
    auto [d, u] = heap.top();
    heap.pop();
    if (d > dist[static_cast<std::size_t>(u)]) continue;
    if (u == to) return d;
    for (int v : world.neighbors[static_cast<std::size_t>(u)]) {
      const double nd =
          d + (world.positions[static_cast<std::size_t>(v)] - world.positions[static_cast<std::size_t>(u)]).norm();
      if (nd < dist[static_cast<std::size_t>(v)]) {
        dist[static_cast<std::size_t>(v)] = nd;
        heap.emplace(nd, v);
      }
    }
  }
  throw PathError("geodesic_distance: " + std::to_string(from) + " and " + std::to_string(to) +
                  " are disconnected in " + world.scan);
}

double path_length(const World& world, std::span<const int> path) {
  double total = 0.0;
  for (std::size_t i = 1; i < path.size(); ++i) {
    total += (world.positions[static_cast<std::size_t>(path[i])] -
              world.positions[static_cast<std::size_t>(path[i - 1])])
                 .norm();
  }
  return total;
}

bool connected(const World& world) {
  if (world.size() == 0) return true;
  const auto dist = hop_distances(world, 0);
  return std::none_of(dist.begin(), dist.end(), [](int d) { return d < 0; });
}

// ---- episodes ------------------------------------------------------------------

void Episode::validate(const World& world) const {
  if (path.empty()) throw DataError("episode " + id + ": empty path");
  if (!(d_th > 0.0)) throw DataError("episode " + id + ": d_th must be positive");
  if (heading < 0 || heading >= kHeadingSectors) {
    throw DataError("episode " + id + ": heading sector out of range");
  }
  if (elevation < -1 || elevation > 1) throw DataError("episode " + id + ": elevation out of range");
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (path[i] < 0 || path[i] >= world.size()) {
      throw DataError("episode " + id + ": path node " + std::to_string(path[i]) +
                      " not in world " + world.scan);
    }
    if (i > 0 && !world.adjacent(path[i - 1], path[i])) {
      throw DataError("episode " + id + ": path nodes " + std::to_string(path[i - 1]) + " and " +
                      std::to_string(path[i]) + " are not adjacent");
    }
  }
}

// ---- generators ----------------------------------------------------------------

World generate_world(std::uint64_t seed, const WorldSpec& spec, std::string scan) {
  if (spec.n_nodes < 2) throw GenerationError("generate_world: need at least 2 nodes");
  if (!(spec.radius > 0.0)) throw GenerationError("generate_world: radius must be positive");
  std::mt19937_64 rng(mix(seed, 0x77));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  for (int attempt = 0; attempt < spec.max_attempts; ++attempt) {
    World w;
    w.scan = scan.empty() ? "world_" + std::to_string(seed) : scan;
    w.seed = seed;
    w.d_feat = spec.d_feat;
    for (int i = 0; i < spec.n_nodes; ++i) {
      w.positions.emplace_back(unit(rng) * spec.area.x(), unit(rng) * spec.area.y(),
                               unit(rng) * spec.area.z());
    }
    w.neighbors.assign(static_cast<std::size_t>(spec.n_nodes), {});
    for (int a = 0; a < spec.n_nodes; ++a) {
      for (int b = 0; b < spec.n_nodes; ++b) {
        if (a != b && (w.positions[static_cast<std::size_t>(a)] - w.positions[static_cast<std::size_t>(b)]).norm() <= spec.radius) {
          w.neighbors[static_cast<std::size_t>(a)].push_back(b);
        }
      }
    }
    // Keep an edge only if each endpoint would actually step onto the other.
    std::vector<std::vector<int>> kept(static_cast<std::size_t>(spec.n_nodes));
    for (int a = 0; a < spec.n_nodes; ++a) {
      for (int b : w.neighbors[static_cast<std::size_t>(a)]) {
        if (a > b) continue;
        const auto ab = forward_target(w, {a, edge_heading(w, a, b), 0});
        const auto ba = forward_target(w, {b, edge_heading(w, b, a), 0});
        if (ab == b && ba == a) {
          kept[static_cast<std::size_t>(a)].push_back(b);
          kept[static_cast<std::size_t>(b)].push_back(a);
        }
      }
    }
    for (auto& n : kept) std::sort(n.begin(), n.end());
    w.neighbors = std::move(kept);
    if (!connected(w)) continue;
    attach_synthetic_features(w);
    return w;
  }
  throw GenerationError("generate_world: no connected graph after " +
                        std::to_string(spec.max_attempts) + " attempts (seed " +
                        std::to_string(seed) + ")");
}

std::vector<int> generate_instruction(const World& world, std::span<const int> path,
                                      int start_heading, std::mt19937_64& rng) {
  Episode ep;
  ep.id = "instruction";
  ep.path.assign(path.begin(), path.end());
  ep.heading = start_heading;
  ep.validate(world);
  const auto actions = teacher_low_actions(world, ep);

  auto pick = [&rng](int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng); };
  auto words = [](std::initializer_list<const char*> list) {
    std::vector<int> ids;
    for (const char* w : list) ids.push_back(token_id(w));
    return ids;
  };

  std::vector<int> tokens;
  auto emit = [&tokens](const std::vector<int>& ids) {
    tokens.insert(tokens.end(), ids.begin(), ids.end());
  };
  auto landmark_of = [&world](int node) {
    return landmark_token(world.landmarks.at(static_cast<std::size_t>(node)));
  };

  // One phrase per leg: the net turn as a clock word, any tilt, then the
  // doorway ordinal and the landmark it leads to.
  emit(words({"at", "the"}));
  tokens.push_back(landmark_of(path.front()));
  int leg = 1;
  int facing = 0;
  std::vector<LowAction> tilts;
  for (LowAction a : actions) {
    switch (a) {
      case LowAction::kTurnLeft:
      case LowAction::kTurnRight:
        facing = wrap_sector(facing + (a == LowAction::kTurnRight ? 1 : -1));
        break;
      case LowAction::kTiltUp:
      case LowAction::kTiltDown:
        tilts.push_back(a);
        break;
      case LowAction::kStepForward: {
        static const std::vector<std::vector<const char*>> connectives = {
            {"then"}, {"now"}, {"next"}, {"and"}, {"after", "that"}};
        if (leg > 1 || pick(2) == 0) {
          for (const char* w : connectives[static_cast<std::size_t>(pick(5))]) tokens.push_back(token_id(w));
        }
        if (facing != 0) {
          switch (pick(3)) {
            case 0: emit(words({"turn", "to"})); break;
            case 1: emit(words({"face"})); break;
            default: emit(words({"turn", "toward"})); break;
          }
          tokens.push_back(clock_token(facing));
          tokens.push_back(token_id("o'clock"));
        }
        for (LowAction t : tilts) {
          const char* dir = t == LowAction::kTiltUp ? "up" : "down";
          emit(pick(2) == 0 ? words({"look", dir}) : words({"go", dir, "the", "step"}));
        }
        switch (pick(3)) {
          case 0: emit(words({"walk", "through", "the"})); break;
          case 1: emit(words({"go", "to", "the"})); break;
          default: emit(words({"step", "through", "the"})); break;
        }
        tokens.push_back(ordinal_token(leg));
        emit(words({"doorway", "to", "the"}));
        tokens.push_back(landmark_of(path[static_cast<std::size_t>(leg)]));
        ++leg;
        facing = 0;
        tilts.clear();
        break;
      }
      case LowAction::kEndEpisode:
        switch (pick(3)) {
          case 0: emit(words({"and", "stop"})); break;
          case 1: emit(words({"then", "wait", "there"})); break;
          default: emit(words({"finally", "stop", "there"})); break;
        }
        break;
    }
  }
  return tokens;
}

}  // namespace pta
