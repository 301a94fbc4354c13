#pragma once

// Shared helpers for the unit suites: central finite differences and small
// fixture worlds.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "pta/corpus.hpp"
#include "pta/model.hpp"
#include "pta/nav_env.hpp"
#include "pta/tensor.hpp"

namespace pta::test {

/// Norm-wise relative error between the analytic gradient of `loss_fn` and a
/// central difference with step `h`, maximized over `params`.
inline double max_fd_error(const std::function<Tensor()>& loss_fn, const std::vector<Tensor>& params,
                           double h = 1e-5) {
  for (auto p : params) p.zero_grad();
  backward(loss_fn());
  double worst = 0.0;
  for (auto p : params) {
    const Matrix analytic = p.grad();
    Matrix numeric(analytic.rows(), analytic.cols());
    Matrix& v = p.mutable_value();
    for (Index i = 0; i < v.size(); ++i) {
      const double keep = v.data()[i];
      v.data()[i] = keep + h;
      const double up = loss_fn().item();
      v.data()[i] = keep - h;
      const double down = loss_fn().item();
      v.data()[i] = keep;
      numeric.data()[i] = (up - down) / (2.0 * h);
    }
    const double scale = std::max({analytic.norm(), numeric.norm(), 1e-8});
    worst = std::max(worst, (analytic - numeric).norm() / scale);
  }
  for (auto p : params) p.zero_grad();
  return worst;
}

inline Matrix random_matrix(Index r, Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

/// Nodes on the given positions, edges as listed, synthetic features.
inline World make_world(std::vector<Eigen::Vector3d> positions, std::vector<std::pair<int, int>> edges,
                        std::uint64_t seed = 7, int d_feat = 8) {
  World w;
  w.scan = "fixture";
  w.seed = seed;
  w.d_feat = d_feat;
  w.positions = std::move(positions);
  w.neighbors.assign(w.positions.size(), {});
  for (auto [a, b] : edges) {
    w.neighbors[static_cast<std::size_t>(a)].push_back(b);
    w.neighbors[static_cast<std::size_t>(b)].push_back(a);
  }
  for (auto& n : w.neighbors) std::sort(n.begin(), n.end());
  attach_synthetic_features(w);
  return w;
}

/// a - b - c along +y, 4 m apart.
inline World line_world() {
  return make_world({{0, 0, 0}, {0, 4, 0}, {0, 8, 0}}, {{0, 1}, {1, 2}});
}

/// A few small worlds and episodes; cheap enough for a unit test.
inline CorpusConfig tiny_corpus_config(std::uint64_t seed = 1) {
  CorpusConfig c;
  c.seed = seed;
  c.train_worlds = 2;
  c.unseen_worlds = 1;
  c.episodes_per_world = 3;
  c.val_seen_per_world = 1;
  c.max_hops = 3;
  c.world.n_nodes = 8;
  c.world.d_feat = 8;
  return c;
}

/// Model matching tiny_corpus_config's feature width.
inline ModelConfig tiny_model_config(ActionSpace space = ActionSpace::kLow) {
  ModelConfig c;
  c.d_word = 8;
  c.d_feat = 8;
  c.d_model = 16;
  c.heads = 2;
  c.d_ff = 32;
  c.dropout = 0.0;
  c.action_space = space;
  return c;
}

}  // namespace pta::test
