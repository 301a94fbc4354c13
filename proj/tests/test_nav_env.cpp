#include <cmath>
#include <numbers>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "pta/metrics.hpp"
#include "pta/nav_env.hpp"
#include "support.hpp"

using namespace pta;
using pta::test::line_world;
using pta::test::make_world;

namespace {

Episode episode_on(const World& w, std::vector<int> path, int heading) {
  Episode ep;
  ep.id = "t";
  ep.scan = w.scan;
  ep.path = std::move(path);
  ep.heading = heading;
  return ep;
}

std::vector<World> small_worlds(int count, std::uint64_t base) {
  std::vector<World> out;
  WorldSpec spec;
  spec.n_nodes = 12;
  spec.d_feat = 8;
  for (int i = 0; i < count; ++i) out.push_back(generate_world(base + static_cast<std::uint64_t>(i), spec));
  return out;
}

}  // namespace

TEST_SUITE("nav_env") {

TEST_CASE("observation coordinates") {
  const World w = line_world();
  const auto obs = observe(w, {0, 0, 0});
  CHECK(obs.features.rows() == 36);
  CHECK(obs.coords.rows() == 36);
  CHECK(obs.stacked().cols() == w.d_feat + 3);
  // Straight ahead, level: row 1, column 0.
  CHECK(obs.coords.row(12) == RowVector((RowVector(3) << 0.0, 1.0, 0.0).finished()));
  // Directly behind.
  CHECK(obs.coords(12 + 6, 0) == 0.0);
  CHECK(obs.coords(12 + 6, 1) == -1.0);
  CHECK((obs.coords.array().abs() <= 1.0).all());
  CHECK(obs.coords(0, 2) == doctest::Approx(-0.5));
  CHECK(obs.coords(24, 2) == doctest::Approx(0.5));
}

TEST_CASE("observation is heading-relative and pure") {
  const World w = line_world();
  const auto a = observe(w, {1, 3, 0});
  const auto b = observe(w, {1, 3, 0});
  CHECK(a.features == b.features);
  const auto c = observe(w, {1, 4, 0});
  // Column k at heading h shows absolute sector h + k.
  CHECK(c.features.row(12) == a.features.row(13));
  CHECK(w.features->view(1, 12 + 4) == c.features.row(12));
}

TEST_CASE("step_low examples") {
  const World w = line_world();
  CHECK(step_low(w, {0, 11, 0}, LowAction::kTurnRight).pose.heading == 0);
  CHECK(step_low(w, {0, 0, 0}, LowAction::kTurnLeft).pose.heading == 11);
  CHECK(step_low(w, {0, 0, 1}, LowAction::kTiltUp).pose.elevation == 1);
  CHECK(step_low(w, {0, 0, -1}, LowAction::kTiltDown).pose.elevation == -1);
  // a faces b along +y.
  const auto fwd = step_low(w, {0, 0, 0}, LowAction::kStepForward);
  CHECK(fwd.pose == AgentPose{1, 0, 0});
  CHECK_FALSE(fwd.done);
  // No neighbor in the facing sector: no-op.
  CHECK(step_low(w, {0, 3, 0}, LowAction::kStepForward).pose == AgentPose{0, 3, 0});
  CHECK(step_low(w, {0, 3, 0}, LowAction::kEndEpisode).done);
}

TEST_CASE("pose properties on generated worlds") {
  for (const World& w : small_worlds(5, 100)) {
    for (int n = 0; n < w.size(); ++n) {
      for (int h = 0; h < 12; ++h) {
        AgentPose p{n, h, 0};
        AgentPose q = p;
        for (int k = 0; k < 12; ++k) q = step_low(w, q, LowAction::kTurnRight).pose;
        CHECK(q == p);
        for (LowAction a : {LowAction::kTurnLeft, LowAction::kTurnRight, LowAction::kTiltUp, LowAction::kTiltDown}) {
          CHECK(step_low(w, p, a).pose.node == n);
        }
        const auto f = step_low(w, p, LowAction::kStepForward).pose;
        CHECK(f.heading == h);
        CHECK(f.elevation == 0);
        if (f.node != n) CHECK(w.adjacent(n, f.node));
      }
    }
  }
}

TEST_CASE("step_high examples") {
  const World w = line_world();
  const AgentPose start{0, 5, 1};
  const auto stop = step_high(w, start, HighLevelAction::halt());
  CHECK(stop.done);
  CHECK(stop.pose == start);
  const auto there = step_high(w, start, HighLevelAction::to(1));
  CHECK(there.pose.node == 1);
  CHECK(there.pose.heading == 0);  // arrival faces along the edge
  CHECK(step_high(w, there.pose, HighLevelAction::to(0)).pose.node == 0);
  CHECK_THROWS_AS(step_high(w, start, HighLevelAction::to(2)), ContractError);
}

TEST_CASE("arrival heading faces along the edge") {
  for (const World& w : small_worlds(5, 200)) {
    for (auto [a, b] : w.edges()) {
      const auto r = step_high(w, {a, 0, 0}, HighLevelAction::to(b));
      const auto& pa = w.positions[static_cast<std::size_t>(a)];
      const auto& pb = w.positions[static_cast<std::size_t>(b)];
      const double az = std::atan2(pb.x() - pa.x(), pb.y() - pa.y());
      const double rel = std::remainder(az - r.pose.heading * std::numbers::pi / 6.0, 2.0 * std::numbers::pi);
      CHECK(std::abs(rel) <= std::numbers::pi / 12.0 + 1e-12);
    }
  }
}

TEST_CASE("teleport candidates") {
  const World w = line_world();
  const Matrix c = teleport_candidates(w, {1, 0, 0});
  CHECK(c.rows() == 2);
  CHECK(c.cols() == w.d_feat + 3);
  // Neighbor 0 is behind, neighbor 2 ahead.
  CHECK(c(0, w.d_feat + 1) == doctest::Approx(-1.0));
  CHECK(c(1, w.d_feat + 1) == doctest::Approx(1.0));
}

TEST_CASE("teacher examples") {
  const World w = line_world();
  const Episode ep = episode_on(w, {0, 1, 2}, 0);
  CHECK(teacher_low(w, {0, 0, 0}, ep, 1) == LowAction::kStepForward);
  // Target straight behind: six turns either way, right wins.
  CHECK(teacher_low(w, {0, 6, 0}, ep, 1) == LowAction::kTurnRight);
  CHECK(teacher_low(w, {0, 2, 0}, ep, 1) == LowAction::kTurnLeft);
  CHECK(teacher_low(w, {0, 0, 1}, ep, 1) == LowAction::kTiltDown);
  CHECK(teacher_low(w, {2, 0, 0}, ep, 3) == LowAction::kEndEpisode);
  CHECK(teacher_high(w, {0, 0, 0}, ep, 1).target == 1);
  CHECK(teacher_high(w, {2, 0, 0}, ep, 3).stop);
  CHECK(initial_progress(ep) == 1);
  CHECK(advance_progress(ep, 1, 1) == 2);
  CHECK(advance_progress(ep, 1, 2) == 1);
  const auto acts = teacher_low_actions(w, ep);
  CHECK(acts == std::vector<LowAction>{LowAction::kStepForward, LowAction::kStepForward, LowAction::kEndEpisode});
}

TEST_CASE("teacher recovers from off-path poses") {
  // Square a(0,0) b(0,4) c(4,4) d(4,0); path a-b-c, agent wandered to d.
  const World w = make_world({{0, 0, 0}, {0, 4, 0}, {4, 4, 0}, {4, 0, 0}}, {{0, 1}, {1, 2}, {2, 3}, {3, 0}});
  const Episode ep = episode_on(w, {0, 1, 2}, 0);
  CHECK(teacher_waypoint(w, {3, 0, 0}, ep, 1) == 0);
  CHECK(teacher_waypoint(w, {2, 0, 0}, ep, 1) == 1);
}

TEST_CASE("teacher high visits the reference sequence") {
  for (const World& w : small_worlds(10, 300)) {
    for (int b = 1; b < w.size(); ++b) {
      const Episode ep = episode_on(w, shortest_path(w, 0, b), 0);
      AgentPose pose = ep.start_pose();
      int progress = initial_progress(ep);
      std::vector<int> visited{pose.node};
      for (int k = 0; k < 20; ++k) {
        const auto a = teacher_high(w, pose, ep, progress);
        if (a.stop) break;
        pose = step_high(w, pose, a).pose;
        progress = advance_progress(ep, progress, pose.node);
        visited.push_back(pose.node);
      }
      CHECK(visited == ep.path);
    }
  }
}

TEST_CASE("teacher optimality against BFS") {
  // Exact match when the search must follow the reference edges; never
  // worse than the unrestricted search by more than the detours it skips.
  int episodes = 0, exact = 0;
  for (const World& w : small_worlds(20, 400)) {
    for (int a = 0; a < w.size(); ++a) {
      for (int b = 0; b < w.size(); ++b) {
        if (a == b) continue;
        const Episode ep = episode_on(w, shortest_path(w, a, b), (a * 5 + b) % 12);
        const auto acts = teacher_low_actions(w, ep);
        const int bfs = oracle::bfs_optimal_steps(w, ep);
        CHECK(static_cast<int>(acts.size()) >= bfs);
        CHECK(static_cast<int>(acts.size()) == oracle::bfs_optimal_steps(w, ep, oracle::BfsTarget::kOnPath));
        ++episodes;
        exact += static_cast<int>(acts.size()) == bfs;
        // Replay reaches the goal and ends with end_episode.
        AgentPose pose = ep.start_pose();
        for (LowAction x : acts) pose = step_low(w, pose, x).pose;
        CHECK(pose.node == b);
        CHECK(acts.back() == LowAction::kEndEpisode);
      }
    }
  }
  CHECK(static_cast<double>(exact) / episodes > 0.99);
}

TEST_CASE("shortest path") {
  const World w = line_world();
  CHECK(shortest_path(w, 1, 1) == std::vector<int>{1});
  CHECK(shortest_path(w, 0, 2) == std::vector<int>{0, 1, 2});
  World split = make_world({{0, 0, 0}, {0, 4, 0}, {50, 50, 0}}, {{0, 1}});
  CHECK_THROWS_AS(shortest_path(split, 0, 2), PathError);
  CHECK_FALSE(connected(split));
  WorldSpec spec;
  spec.n_nodes = 8;
  spec.d_feat = 4;
  for (int s = 0; s < 30; ++s) {
    const World g = generate_world(static_cast<std::uint64_t>(500 + s), spec);
    for (int a = 0; a < g.size(); ++a)
      for (int b = 0; b < g.size(); ++b) CHECK(shortest_path(g, a, b) == oracle::shortest_path_enumerate(g, a, b));
  }
}

TEST_CASE("geodesic distance") {
  const World w = line_world();
  CHECK(geodesic_distance(w, 0, 2) == doctest::Approx(8.0));
  CHECK(geodesic_distance(w, 1, 1) == 0.0);
  const std::vector<int> p{0, 1, 2};
  CHECK(path_length(w, p) == doctest::Approx(8.0));
}

TEST_CASE("generate_world") {
  WorldSpec spec;
  spec.d_feat = 16;
  const World a = generate_world(42, spec), b = generate_world(42, spec);
  CHECK(a.positions == b.positions);
  CHECK(a.neighbors == b.neighbors);
  CHECK(a.landmarks == b.landmarks);
  for (int n = 0; n < a.size(); ++n)
    for (int v = 0; v < 36; ++v) CHECK(a.features->view(n, v) == b.features->view(n, v));
  CHECK(connected(a));
  a.validate();

  WorldSpec two;
  two.n_nodes = 2;
  two.area = {3.0, 3.0, 0.0};
  const World pair = generate_world(1, two);
  CHECK(pair.edges().size() == 1);

  CHECK_THROWS_AS(generate_world(1, WorldSpec{1}), GenerationError);
  WorldSpec sparse;
  sparse.radius = 0.01;
  sparse.max_attempts = 5;
  CHECK_THROWS_AS(generate_world(1, sparse), GenerationError);
}

TEST_CASE("average degree grows with radius") {
  auto mean_degree = [](double radius) {
    WorldSpec spec;
    spec.radius = radius;
    spec.d_feat = 4;
    double total = 0.0;
    for (int s = 0; s < 40; ++s) {
      const World w = generate_world(static_cast<std::uint64_t>(s), spec);
      total += 2.0 * static_cast<double>(w.edges().size()) / w.size();
    }
    return total / 40.0;
  };
  const double d7 = mean_degree(7.0), d10 = mean_degree(10.0), d14 = mean_degree(14.0);
  CHECK(d7 < d10);
  CHECK(d10 < d14);
}

TEST_CASE("landmarks differ within two hops") {
  int worlds = 0, clean = 0;
  for (const World& w : small_worlds(50, 600)) {
    ++worlds;
    bool ok = true;
    for (int a = 0; a < w.size(); ++a) {
      CHECK(w.landmarks[static_cast<std::size_t>(a)] >= 0);
      CHECK(w.landmarks[static_cast<std::size_t>(a)] < kNumLandmarks);
      for (int b : w.neighbors[static_cast<std::size_t>(a)]) {
        ok = ok && w.landmarks[static_cast<std::size_t>(a)] != w.landmarks[static_cast<std::size_t>(b)];
        for (int c : w.neighbors[static_cast<std::size_t>(b)]) {
          if (c != a) ok = ok && w.landmarks[static_cast<std::size_t>(a)] != w.landmarks[static_cast<std::size_t>(c)];
        }
      }
    }
    clean += ok;
  }
  CHECK(clean == worlds);
}

TEST_CASE("generate_instruction") {
  const World w = line_world();
  std::mt19937_64 r1(3), r2(3);
  const std::vector<int> one{0, 1};
  const auto t1 = generate_instruction(w, one, 0, r1);
  CHECK(t1 == generate_instruction(w, one, 0, r2));
  CHECK(std::find(t1.begin(), t1.end(), ordinal_token(1)) != t1.end());
  CHECK(static_cast<int>(*std::max_element(t1.begin(), t1.end())) < vocab_size());
  // The last landmark named is the goal's.
  int last_landmark = -1;
  for (int t : t1)
    if (is_landmark_token(t)) last_landmark = t;
  CHECK(last_landmark == landmark_token(w.landmarks[1]));
}

TEST_CASE("instruction replay reaches the goal") {
  std::mt19937_64 rng(9);
  for (const World& w : small_worlds(20, 700)) {
    for (int b = 1; b < w.size(); ++b) {
      const Episode ep = episode_on(w, shortest_path(w, 0, b), static_cast<int>(rng() % 12));
      const auto tokens = generate_instruction(w, ep.path, ep.heading, rng);
      const auto verbs = instruction_actions(tokens);
      CHECK(verbs == teacher_low_actions(w, ep));
      AgentPose pose = ep.start_pose();
      for (LowAction a : verbs) pose = step_low(w, pose, a).pose;
      CHECK(pose.node == ep.goal());
    }
  }
}

TEST_CASE("episode validation") {
  const World w = line_world();
  Episode ep = episode_on(w, {0, 2}, 0);
  CHECK_THROWS_AS(ep.validate(w), DataError);
  ep.path = {0, 1};
  ep.validate(w);
  ep.heading = 12;
  CHECK_THROWS_AS(ep.validate(w), DataError);
  ep.heading = 0;
  ep.d_th = 0.0;
  CHECK_THROWS_AS(ep.validate(w), DataError);
}

TEST_CASE("step caps") {
  CHECK(default_max_steps(5, false) == 23);
  CHECK(default_max_steps(10, false) == 30);
  CHECK(default_max_steps(1, true) == 6);
  CHECK(default_max_steps(4, true) == 12);
}

}  // TEST_SUITE
