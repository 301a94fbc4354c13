#pragma once

// Graph-world navigation: metric viewpoint graphs, panoramic observations,
// atomic (low-level) and teleport (high-level) action interfaces, teacher
// oracles, and the synthetic world/instruction generators.
//
// Orientation conventions
//   azimuth 0 points along +y and grows clockwise toward +x;
//   heading sector s covers azimuths [30s - 15, 30s + 15) degrees;
//   elevation sector -1/0/+1 maps to view rows 0/1/2 (pitch -30/0/+30).

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pta/tensor.hpp"
#include "pta/vocab.hpp"

namespace pta {

inline constexpr int kHeadingSectors = 12;
inline constexpr int kElevationRows = 3;
inline constexpr int kViewCount = kHeadingSectors * kElevationRows;

/// Per-view feature vectors in the world (absolute) frame.
class FeatureProvider {
 public:
  virtual ~FeatureProvider() = default;
  virtual Index dim() const = 0;
  /// `view` = elevation_row * 12 + absolute heading sector.
  virtual RowVector view(int node, int view) const = 0;
};

/// Features stored in memory, one (36 x d) block per node.
class TableFeatures final : public FeatureProvider {
 public:
  explicit TableFeatures(std::vector<Matrix> per_node);
  Index dim() const override { return dim_; }
  RowVector view(int node, int view) const override;

 private:
  std::vector<Matrix> per_node_;
  Index dim_ = 0;
};

struct World {
  std::string scan;
  std::uint64_t seed = 0;
  int d_feat = 0;
  std::vector<Eigen::Vector3d> positions;
  std::vector<std::vector<int>> neighbors;  // sorted ascending, symmetric
  std::vector<std::string> node_names;      // optional external viewpoint ids
  std::vector<int> landmarks;               // landmark class per node
  std::shared_ptr<const FeatureProvider> features;

  int size() const { return static_cast<int>(positions.size()); }
  bool adjacent(int a, int b) const;
  std::vector<std::pair<int, int>> edges() const;
  /// Throws DataError when positions are non-finite or adjacency is asymmetric.
  void validate() const;
};

/// Landmark class per node, chosen so that nodes within two hops of each
/// other differ whenever the class count allows it.
void assign_landmarks(World& world);

/// Attach the deterministic synthetic feature generator for `world.seed`
/// (assigning landmarks first if the world has none).
void attach_synthetic_features(World& world);

struct AgentPose {
  int node = 0;
  int heading = 0;    // 0..11
  int elevation = 0;  // -1, 0, +1

  bool operator==(const AgentPose&) const = default;
};

struct PanoramicObservation {
  Matrix features;  // 36 x d_feat, elevation-major, columns relative to heading
  Matrix coords;    // 36 x 3: (sin phi, cos phi, sin theta)

  /// features with coords appended: 36 x (d_feat + 3).
  Matrix stacked() const;
};

struct HighLevelAction {
  bool stop = false;
  int target = -1;

  static HighLevelAction halt() { return {true, -1}; }
  static HighLevelAction to(int node) { return {false, node}; }
};

struct Episode {
  std::string id;
  std::string scan;
  std::vector<int> instruction;
  std::vector<int> path;
  int heading = 0;
  int elevation = 0;
  double d_th = 3.0;

  int start() const { return path.front(); }
  int goal() const { return path.back(); }
  AgentPose start_pose() const { return {path.front(), heading, elevation}; }
  /// Throws DataError naming the episode on any broken invariant.
  void validate(const World& world) const;
};

struct StepResult {
  AgentPose pose;
  bool done = false;
};

// ---- geometry ----------------------------------------------------------------

double azimuth(const Eigen::Vector3d& from, const Eigen::Vector3d& to);
int heading_sector_of(double azimuth_radians);
int edge_heading(const World& world, int from, int to);
int edge_elevation(const World& world, int from, int to);
/// Exact (sin, cos) of a multiple of 30 degrees.
std::pair<double, double> sector_sin_cos(int sectors);
int wrap_sector(int s);

// ---- environment ---------------------------------------------------------------

PanoramicObservation observe(const World& world, const AgentPose& pose);
StepResult step_low(const World& world, const AgentPose& pose, LowAction action);
StepResult step_high(const World& world, const AgentPose& pose, const HighLevelAction& action);

/// Neighbor reached by step_forward from `pose`, if any.
std::optional<int> forward_target(const World& world, const AgentPose& pose);

/// Candidate rows for the teleport head: one per neighbor (ascending id),
/// each the view toward that neighbor with its coordinates appended.
Matrix teleport_candidates(const World& world, const AgentPose& pose);

// ---- teachers -------------------------------------------------------------------

/// Next node the teacher heads for: the next reference node if adjacent,
/// otherwise the first hop of a shortest path back to it.
int teacher_waypoint(const World& world, const AgentPose& pose, const Episode& episode,
                     int progress);
LowAction teacher_low(const World& world, const AgentPose& pose, const Episode& episode,
                      int progress);
HighLevelAction teacher_high(const World& world, const AgentPose& pose, const Episode& episode,
                             int progress);
/// Advances the reference-progress index after arriving at `node`.
int advance_progress(const Episode& episode, int progress, int node);
/// Progress index at the start pose.
int initial_progress(const Episode& episode);

/// Full teacher trajectory in atomic actions (ends with kEndEpisode).
std::vector<LowAction> teacher_low_actions(const World& world, const Episode& episode);

/// Default step cap: 3x the teacher length, at least 23 (low) / 6 (high).
int default_max_steps(int teacher_length, bool high_level);

// ---- graph ---------------------------------------------------------------------

/// Minimum-hop path; ties go to the smallest next node id.
std::vector<int> shortest_path(const World& world, int from, int to);
/// Metric shortest-path distance (Dijkstra on Euclidean edge lengths).
double geodesic_distance(const World& world, int from, int to);
double path_length(const World& world, std::span<const int> path);
bool connected(const World& world);

// ---- generators ------------------------------------------------------------------

struct WorldSpec {
  int n_nodes = 12;
  double radius = 7.0;
  Eigen::Vector3d area{20.0, 20.0, 2.0};
  int d_feat = 64;
  int max_attempts = 1000;
};

/// Uniform nodes in the `area` cuboid, edges within `radius`; edges that
/// another neighbor shadows in the same heading sector are dropped, and the
/// draw repeats until the graph is connected.
World generate_world(std::uint64_t seed, const WorldSpec& spec, std::string scan = {});

/// Templated verbalization of the teacher trajectory along `path`.
std::vector<int> generate_instruction(const World& world, std::span<const int> path,
                                      int start_heading, std::mt19937_64& rng);

}  // namespace pta
