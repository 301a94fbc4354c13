#include "pta/corpus.hpp"

#include <algorithm>
#include <set>

#include "pta/world_io.hpp"

namespace pta {

using nlohmann::json;

void CorpusConfig::validate() const {
  if (train_worlds <= 0 || unseen_worlds <= 0) throw ConfigError("corpus: world counts must be positive");
  if (episodes_per_world <= 0 || val_seen_per_world < 0) throw ConfigError("corpus: episode counts out of range");
  if (min_hops < 1 || max_hops < min_hops) throw ConfigError("corpus: need 1 <= min_hops <= max_hops");
  if (!(d_th > 0.0)) throw ConfigError("corpus: d_th must be positive");
  if (world.n_nodes < 2) throw ConfigError("corpus: worlds need at least 2 nodes");
  if (!(world.radius > 0.0) || world.d_feat <= 0 || world.max_attempts <= 0) {
    throw ConfigError("corpus: world radius, d_feat and max_attempts must be positive");
  }
}

json CorpusConfig::to_json() const {
  return {{"seed", seed},
          {"train_worlds", train_worlds},
          {"unseen_worlds", unseen_worlds},
          {"episodes_per_world", episodes_per_world},
          {"val_seen_per_world", val_seen_per_world},
          {"min_hops", min_hops},
          {"max_hops", max_hops},
          {"d_th", d_th},
          {"n_nodes", world.n_nodes},
          {"radius", world.radius},
          {"area", {world.area.x(), world.area.y(), world.area.z()}},
          {"d_feat", world.d_feat},
          {"max_attempts", world.max_attempts}};
}

CorpusConfig CorpusConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("corpus config must be an object");
  const json defaults = CorpusConfig{}.to_json();
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!defaults.contains(it.key())) throw ConfigError("corpus config: unknown key '" + it.key() + "'");
  }
  CorpusConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    c.train_worlds = j.value("train_worlds", c.train_worlds);
    c.unseen_worlds = j.value("unseen_worlds", c.unseen_worlds);
    c.episodes_per_world = j.value("episodes_per_world", c.episodes_per_world);
    c.val_seen_per_world = j.value("val_seen_per_world", c.val_seen_per_world);
    c.min_hops = j.value("min_hops", c.min_hops);
    c.max_hops = j.value("max_hops", c.max_hops);
    c.d_th = j.value("d_th", c.d_th);
    c.world.n_nodes = j.value("n_nodes", c.world.n_nodes);
    c.world.radius = j.value("radius", c.world.radius);
    if (j.contains("area")) {
      const auto a = j["area"].get<std::vector<double>>();
      if (a.size() != 3) throw ConfigError("corpus config: area needs 3 numbers");
      c.world.area = {a[0], a[1], a[2]};
    }
    c.world.d_feat = j.value("d_feat", c.world.d_feat);
    c.world.max_attempts = j.value("max_attempts", c.world.max_attempts);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("corpus config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string scan_name(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%02d", prefix, i);
  return buf;
}

struct Pair {
  int start, goal;
};

std::vector<Pair> eligible_pairs(const World& w, const CorpusConfig& c) {
  std::vector<Pair> out;
  for (int a = 0; a < w.size(); ++a) {
    for (int b = 0; b < w.size(); ++b) {
      if (a == b) continue;
      const int hops = static_cast<int>(shortest_path(w, a, b).size()) - 1;
      const double d = (w.positions[static_cast<std::size_t>(a)] - w.positions[static_cast<std::size_t>(b)]).norm();
      if (hops >= c.min_hops && hops <= c.max_hops && d > c.d_th) out.push_back({a, b});
    }
  }
  return out;
}

Episode make_episode(const World& w, const Pair& p, const std::string& id, double d_th,
                     std::mt19937_64& rng) {
  Episode ep;
  ep.id = id;
  ep.scan = w.scan;
  ep.path = shortest_path(w, p.start, p.goal);
  ep.heading = std::uniform_int_distribution<int>(0, kHeadingSectors - 1)(rng);
  ep.elevation = 0;
  ep.d_th = d_th;
  ep.instruction = generate_instruction(w, ep.path, ep.heading, rng);
  return ep;
}

// A world whose eligible pairs cannot hold the held-out split is redrawn
// under the next derived seed.
World draw_world(std::uint64_t base, const CorpusConfig& c, const std::string& scan, int min_pairs,
                 std::vector<Pair>& pairs) {
  for (int attempt = 0; attempt < 64; ++attempt) {
    World w = generate_world(mix(base + static_cast<std::uint64_t>(attempt)), c.world, scan);
    pairs = eligible_pairs(w, c);
    if (static_cast<int>(pairs.size()) >= min_pairs) return w;
  }
  throw GenerationError("corpus: world " + scan + " never produced " + std::to_string(min_pairs) +
                        " eligible start/goal pairs");
}

}  // namespace

Corpus gen_corpus(const CorpusConfig& config) {
  config.validate();
  Corpus corpus;
  corpus.config = config;
  const std::uint64_t root = mix(config.seed);

  for (int i = 0; i < config.train_worlds + config.unseen_worlds; ++i) {
    const bool unseen = i >= config.train_worlds;
    const int k = unseen ? i - config.train_worlds : i;
    const std::string scan = scan_name(unseen ? "unseen" : "train", k);
    // Unseen worlds draw from a separate seed stream.
    const std::uint64_t base = mix(root ^ (unseen ? 0x5eedULL << 40 : 0ULL)) + 1000ULL * static_cast<std::uint64_t>(k);
    std::vector<Pair> pairs;
    const int held_out = unseen ? 0 : config.val_seen_per_world;
    World w = draw_world(base, config, scan, held_out + 1, pairs);
    std::mt19937_64 rng(mix(base ^ 0xe915ULL));
    std::shuffle(pairs.begin(), pairs.end(), rng);

    for (int e = 0; e < held_out; ++e) {
      corpus.val_seen.push_back(make_episode(w, pairs[static_cast<std::size_t>(e)], scan + "_vs" + std::to_string(e), config.d_th, rng));
    }
    const std::size_t pool = pairs.size() - static_cast<std::size_t>(held_out);
    auto& split = unseen ? corpus.val_unseen : corpus.train;
    for (int e = 0; e < config.episodes_per_world; ++e) {
      const Pair& p = pairs[static_cast<std::size_t>(held_out) + static_cast<std::size_t>(e) % pool];
      split.push_back(make_episode(w, p, scan + "_" + std::to_string(e), config.d_th, rng));
    }
    (unseen ? corpus.unseen_scans : corpus.train_scans).push_back(scan);
    corpus.worlds.emplace(scan, std::move(w));
  }
  validate_corpus(corpus);
  return corpus;
}

void validate_corpus(const Corpus& corpus) {
  auto check = [&](const std::vector<Episode>& eps) {
    for (const auto& ep : eps) {
      const World& w = world_for(corpus.worlds, ep);
      ep.validate(w);
      const auto actions = teacher_low_actions(w, ep);
      AgentPose pose = ep.start_pose();
      for (LowAction a : actions) pose = step_low(w, pose, a).pose;
      if (pose.node != ep.goal()) throw DataError("episode " + ep.id + ": teacher replay misses the goal");
    }
  };
  check(corpus.train);
  check(corpus.val_seen);
  check(corpus.val_unseen);
  for (const auto& s : corpus.unseen_scans) {
    if (std::find(corpus.train_scans.begin(), corpus.train_scans.end(), s) != corpus.train_scans.end()) {
      throw DataError("corpus: unseen scan " + s + " is also a train scan");
    }
  }
}

void save_corpus(const std::filesystem::path& dir, const Corpus& corpus) {
  json worlds = json::array();
  for (const auto& [scan, w] : corpus.worlds) {
    const std::string rel = "worlds/" + scan + ".json";
    save_world(dir / rel, w);
    const bool unseen = std::find(corpus.unseen_scans.begin(), corpus.unseen_scans.end(), scan) != corpus.unseen_scans.end();
    worlds.push_back({{"scan", scan}, {"file", rel}, {"seed", w.seed}, {"split", unseen ? "unseen" : "train"}});
  }
  save_episodes(dir / "episodes/train.json", corpus.train);
  save_episodes(dir / "episodes/val_seen.json", corpus.val_seen);
  save_episodes(dir / "episodes/val_unseen.json", corpus.val_unseen);
  json manifest = {{"format_version", kCorpusFormatVersion},
                   {"config", corpus.config.to_json()},
                   {"worlds", worlds},
                   {"splits",
                    {{"train", "episodes/train.json"},
                     {"val_seen", "episodes/val_seen.json"},
                     {"val_unseen", "episodes/val_unseen.json"}}},
                   {"vocabulary", vocabulary()}};
  write_json_file(dir / "manifest.json", manifest);
}

Corpus load_corpus(const std::filesystem::path& dir) {
  const json manifest = read_json_file(dir / "manifest.json");
  const std::string origin = (dir / "manifest.json").string();
  if (!manifest.is_object() || manifest.value("format_version", -1) != kCorpusFormatVersion) {
    throw DataError(origin + ": $.format_version must be " + std::to_string(kCorpusFormatVersion));
  }
  if (manifest.contains("vocabulary") && manifest["vocabulary"] != json(vocabulary())) {
    throw DataError(origin + ": $.vocabulary does not match the shipped vocabulary");
  }
  Corpus corpus;
  try {
    corpus.config = CorpusConfig::from_json(manifest.at("config"));
  } catch (const ConfigError& e) {
    throw DataError(origin + ": $.config: " + e.what());
  } catch (const json::exception& e) {
    throw DataError(origin + ": $.config missing");
  }
  if (!manifest.contains("worlds") || !manifest["worlds"].is_array()) throw DataError(origin + ": $.worlds must be an array");
  for (std::size_t i = 0; i < manifest["worlds"].size(); ++i) {
    const json& entry = manifest["worlds"][i];
    const std::string path = "$.worlds[" + std::to_string(i) + "]";
    if (!entry.is_object() || !entry.contains("file") || !entry.contains("scan") || !entry.contains("split")) {
      throw DataError(origin + ": " + path + " needs scan, file and split");
    }
    World w = load_world(dir / entry["file"].get<std::string>());
    const std::string scan = entry["scan"].get<std::string>();
    (entry["split"] == "unseen" ? corpus.unseen_scans : corpus.train_scans).push_back(scan);
    corpus.worlds.emplace(scan, std::move(w));
  }
  const json& splits = manifest.at("splits");
  corpus.train = load_episodes(dir / splits.at("train").get<std::string>());
  corpus.val_seen = load_episodes(dir / splits.at("val_seen").get<std::string>());
  corpus.val_unseen = load_episodes(dir / splits.at("val_unseen").get<std::string>());
  validate_corpus(corpus);
  return corpus;
}

}  // namespace pta
