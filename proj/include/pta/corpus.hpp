#pragma once

// Desk-scale corpus: train worlds with train / val-seen episodes, and
// disjoint unseen worlds for val-unseen. Fully determined by the config.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "pta/nav_env.hpp"
#include "pta/training.hpp"

namespace pta {

struct CorpusConfig {
  std::uint64_t seed = 0;
  int train_worlds = 20;
  int unseen_worlds = 5;
  int episodes_per_world = 40;
  int val_seen_per_world = 5;  // held-out start/goal pairs on train worlds
  int min_hops = 2;
  int max_hops = 5;
  double d_th = 3.0;
  WorldSpec world;

  void validate() const;
  nlohmann::json to_json() const;
  static CorpusConfig from_json(const nlohmann::json& j);
};

struct Corpus {
  CorpusConfig config;
  WorldIndex worlds;
  std::vector<std::string> train_scans;
  std::vector<std::string> unseen_scans;
  std::vector<Episode> train, val_seen, val_unseen;
};

Corpus gen_corpus(const CorpusConfig& config);

/// Writes manifest.json, worlds/<scan>.json and episodes/<split>.json.
void save_corpus(const std::filesystem::path& dir, const Corpus& corpus);
Corpus load_corpus(const std::filesystem::path& dir);

/// Throws DataError unless every episode's teacher reaches its goal.
void validate_corpus(const Corpus& corpus);

inline constexpr int kCorpusFormatVersion = 1;

}  // namespace pta
