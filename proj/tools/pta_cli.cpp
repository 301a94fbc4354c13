// pta: corpus generation, training, RL finetuning, evaluation and the
// action-space comparison.
//
// Precedence for every setting: built-in defaults < --preset < --config file
// < command-line flags. Exit codes: 0 ok, 2 config, 3 data / IO, 4 runtime.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "pta/corpus.hpp"
#include "pta/experiments.hpp"
#include "pta/training.hpp"
#include "pta/world_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pta;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitRuntime = 4;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string action_space;
  std::string preset = "desk";
};

std::uint64_t default_seed() {
  if (const char* env = std::getenv("PTA_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw ConfigError(std::string("PTA_SEED is not an unsigned integer: ") + env);
    }
  }
  return 0;
}

/// The --config file, restricted to `allowed` top-level sections.
json load_run_config(const std::string& path, std::initializer_list<const char*> allowed) {
  if (path.empty()) return json::object();
  json j;
  try {
    j = read_json_file(path);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  if (!j.is_object()) throw ConfigError(path + ": config must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ConfigError(path + ": unknown key '" + it.key() + "'");
  }
  return j;
}

std::uint64_t resolve_seed(const Common& c, const json& cfg) {
  if (c.seed) return *c.seed;
  if (cfg.contains("seed")) {
    if (!cfg["seed"].is_number_unsigned()) throw ConfigError("config: seed must be a non-negative integer");
    return cfg["seed"].get<std::uint64_t>();
  }
  return default_seed();
}

ModelConfig resolve_model(const Common& c, const json& cfg) {
  json m = ModelConfig::preset(c.preset).to_json();
  m.erase("vocab_size");
  if (cfg.contains("model")) {
    if (!cfg["model"].is_object()) throw ConfigError("config: model must be an object");
    for (auto it = cfg["model"].begin(); it != cfg["model"].end(); ++it) m[it.key()] = it.value();
  }
  if (!c.action_space.empty()) m["action_space"] = c.action_space;
  return ModelConfig::from_json(m);
}

TrainConfig resolve_train(const json& cfg, std::uint64_t seed) {
  TrainConfig t = cfg.contains("train") ? TrainConfig::from_json(cfg["train"]) : TrainConfig{};
  t.seed = seed;
  return t;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

fs::path require_out(const Common& c) {
  if (c.out.empty()) throw ConfigError("--out is required");
  return c.out;
}

void write_reports(const fs::path& dir, const std::string& split, const MetricsReport& r) {
  write_text(dir / (split + "_report.json"), r.to_json() + "\n");
  write_text(dir / (split + "_report.csv"), r.to_csv());
}

void print_summary(const std::string& split, const MetricsReport& r) {
  const auto& m = r.mean;
  std::cout << split << ": episodes " << r.episodes.size() << "  NE " << m.ne << "  SR " << m.sr
            << "  OSR " << m.osr << "  SPL " << m.spl << "  CLS " << m.cls << "  nDTW " << m.ndtw
            << "  SDTW " << m.sdtw << "\n";
}

// ---- commands ------------------------------------------------------------------

void cmd_gen_corpus(const Common& c) {
  const json cfg = load_run_config(c.config_path, {"corpus", "seed"});
  CorpusConfig cc = cfg.contains("corpus") ? CorpusConfig::from_json(cfg["corpus"]) : CorpusConfig{};
  cc.seed = resolve_seed(c, cfg);
  const fs::path out = require_out(c);
  const Corpus corpus = gen_corpus(cc);
  save_corpus(out, corpus);
  std::cout << "corpus written to " << out << ": " << corpus.train.size() << " train, "
            << corpus.val_seen.size() << " val_seen, " << corpus.val_unseen.size() << " val_unseen episodes\n";
}

void cmd_train(const Common& c, const std::string& corpus_dir) {
  const json cfg = load_run_config(c.config_path, {"model", "train", "seed"});
  const std::uint64_t seed = resolve_seed(c, cfg);
  const ModelConfig mc = resolve_model(c, cfg);
  const TrainConfig tc = resolve_train(cfg, seed);
  const fs::path out = require_out(c);
  const Corpus corpus = load_corpus(corpus_dir);

  PTAModel model(mc, seed);
  FitOptions fo;
  fo.log_csv = out / "train_log.csv";
  fo.checkpoint = out / "checkpoint.json";
  fo.metadata = {{"command", "train"}, {"corpus", corpus_dir}, {"seed", seed}, {"preset", c.preset}};
  fo.on_epoch = [](const EpochLog& e) {
    std::cout << "epoch " << e.epoch << "  loss " << e.train_loss << "  lr " << e.lr << "  val_seen SR "
              << e.val_seen.mean.sr << "  val_unseen SR " << e.val_unseen.mean.sr << "  SPL "
              << e.val_unseen.mean.spl << std::endl;
  };
  write_text(out / "run_config.json",
             json({{"model", mc.to_json()}, {"train", tc.to_json()}, {"seed", seed}}).dump(1) + "\n");
  const FitResult fr = fit(model, corpus.worlds, corpus.train, corpus.val_seen, corpus.val_unseen, tc, fo);
  std::cout << "best epoch " << fr.best_epoch << " (val_unseen SPL " << fr.best_monitor << ")\n";
}

void cmd_finetune_rl(const Common& c, const std::string& corpus_dir, const std::string& checkpoint) {
  const json cfg = load_run_config(c.config_path, {"train", "seed"});
  const std::uint64_t seed = resolve_seed(c, cfg);
  const TrainConfig tc = resolve_train(cfg, seed);
  const fs::path out = require_out(c);
  const Corpus corpus = load_corpus(corpus_dir);
  json meta;
  PTAModel model = load_checkpoint(checkpoint, &meta);
  if (!c.action_space.empty() && action_space_from_string(c.action_space) != model.config().action_space) {
    throw ConfigError("checkpoint head is " + to_string(model.config().action_space) + ", not " + c.action_space);
  }
  std::ofstream log;
  fs::create_directories(out);
  log.open(out / "rl_log.csv");
  if (!log) throw IoError("cannot write " + (out / "rl_log.csv").string());
  log << "update,mean_return\n";
  const RlResult rr = finetune_rl(model, corpus.worlds, corpus.train, tc, [&](int u, double r) {
    log << u << ',' << r << '\n';
  });
  json new_meta = {{"command", "finetune-rl"},
                   {"source_checkpoint", checkpoint},
                   {"source_metadata", meta},
                   {"train_config", tc.to_json()},
                   {"updates", rr.update_returns.size()}};
  save_checkpoint(out / "checkpoint.json", model, new_meta);
  std::cout << "finetuned " << rr.update_returns.size() << " updates; checkpoint " << (out / "checkpoint.json") << "\n";
}

void cmd_eval(const Common& c, const std::string& corpus_dir, const std::string& checkpoint,
              const std::vector<std::string>& splits) {
  const json cfg = load_run_config(c.config_path, {"train", "seed"});
  const TrainConfig tc = resolve_train(cfg, resolve_seed(c, cfg));
  const fs::path out = require_out(c);
  const Corpus corpus = load_corpus(corpus_dir);
  PTAModel model = load_checkpoint(checkpoint);
  ActionSpace space = model.config().action_space;
  if (!c.action_space.empty()) {
    space = action_space_from_string(c.action_space);
    if (space != model.config().action_space) {
      throw ConfigError("checkpoint has only the " + to_string(model.config().action_space) +
                        "-level head; cannot evaluate the " + c.action_space + "-level action space");
    }
  }
  for (const auto& split : splits) {
    const std::vector<Episode>* eps = split == "train"        ? &corpus.train
                                      : split == "val_seen"   ? &corpus.val_seen
                                      : split == "val_unseen" ? &corpus.val_unseen
                                                              : nullptr;
    if (!eps) throw ConfigError("unknown split '" + split + "'");
    const MetricsReport r = evaluate(&model, space, corpus.worlds, *eps, tc.max_steps, 0, tc.ndtw_reference);
    write_reports(out, split, r);
    print_summary(split, r);
  }
}

void cmd_compare(const Common& c, const std::string& corpus_dir) {
  const json cfg = load_run_config(c.config_path, {"model", "train", "seed"});
  const std::uint64_t seed = resolve_seed(c, cfg);
  const ModelConfig trunk = resolve_model(c, cfg);
  const TrainConfig tc = resolve_train(cfg, seed);
  const fs::path out = require_out(c);
  const Corpus corpus = load_corpus(corpus_dir);
  const ActionSpaceComparison cmp =
      compare_action_spaces(corpus, trunk, tc, seed, [](const std::string& s) { std::cout << s << std::endl; });
  json j = cmp.to_json();
  j["seed"] = seed;
  j["train"] = tc.to_json();
  write_text(out / "comparison.json", j.dump(1) + "\n");
  write_text(out / "comparison.txt", cmp.to_table());
  std::cout << cmp.to_table();
}

void cmd_import_r2r(const Common& c, const std::string& connectivity_dir, const std::string& episodes_path,
                    const std::string& split, int d_feat) {
  const fs::path out = require_out(c);
  const json raw = read_json_file(episodes_path);
  if (!raw.is_array()) throw DataError(episodes_path + ": $ must be an array");
  WorldIndex worlds;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!raw[i].is_object() || !raw[i].contains("scan") || !raw[i]["scan"].is_string()) {
      throw DataError(episodes_path + ": $[" + std::to_string(i) + "].scan: expected a string");
    }
    const std::string scan = raw[i]["scan"].get<std::string>();
    if (!worlds.count(scan)) {
      worlds.emplace(scan, load_connectivity(fs::path(connectivity_dir) / (scan + "_connectivity.json"), scan, d_feat));
    }
  }
  const std::vector<Episode> episodes = r2r_episodes_from_json(raw, worlds, 3.0, episodes_path);
  for (const auto& [scan, w] : worlds) save_world(out / "worlds" / (scan + ".json"), w);
  save_episodes(out / "episodes" / (split + ".json"), episodes);
  std::cout << "imported " << episodes.size() << " episodes over " << worlds.size() << " scans\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PTA vision-and-language navigation agent"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&common](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "JSON run config");
    sub->add_option("--seed", common.seed, "seed (default: $PTA_SEED or 0)");
    sub->add_option("--out", common.out, "output directory");
    sub->add_option("--action-space", common.action_space, "low or high")->check(CLI::IsMember({"low", "high"}));
    sub->add_option("--preset", common.preset, "model preset")->check(CLI::IsMember({"desk", "paper"}));
  };

  std::string corpus_dir, checkpoint, connectivity_dir, episodes_path, split = "train";
  std::vector<std::string> splits{"val_seen", "val_unseen"};
  int d_feat = 64;

  auto* gen = app.add_subcommand("gen-corpus", "generate worlds, episodes and splits");
  add_common(gen);
  auto* train = app.add_subcommand("train", "imitation learning");
  add_common(train);
  train->add_option("--corpus", corpus_dir, "corpus directory")->required();
  auto* rl = app.add_subcommand("finetune-rl", "REINFORCE finetuning of a checkpoint");
  add_common(rl);
  rl->add_option("--corpus", corpus_dir, "corpus directory")->required();
  rl->add_option("--checkpoint", checkpoint, "IL checkpoint")->required();
  auto* ev = app.add_subcommand("eval", "greedy evaluation");
  add_common(ev);
  ev->add_option("--corpus", corpus_dir, "corpus directory")->required();
  ev->add_option("--checkpoint", checkpoint, "checkpoint")->required();
  ev->add_option("--splits", splits, "splits to evaluate");
  auto* cmp = app.add_subcommand("compare-action-spaces", "train and compare both heads");
  add_common(cmp);
  cmp->add_option("--corpus", corpus_dir, "corpus directory")->required();
  auto* imp = app.add_subcommand("import-r2r", "convert R2R connectivity + episode files");
  add_common(imp);
  imp->add_option("--connectivity", connectivity_dir, "directory of <scan>_connectivity.json")->required();
  imp->add_option("--episodes", episodes_path, "R2R episode JSON")->required();
  imp->add_option("--split", split, "split name for the episode file");
  imp->add_option("--d-feat", d_feat, "synthetic feature width");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return e.get_exit_code() == 0 ? app.exit(e) : (app.exit(e), kExitConfig);
  }

  try {
    if (*gen) cmd_gen_corpus(common);
    if (*train) cmd_train(common, corpus_dir);
    if (*rl) cmd_finetune_rl(common, corpus_dir, checkpoint);
    if (*ev) cmd_eval(common, corpus_dir, checkpoint, splits);
    if (*cmp) cmd_compare(common, corpus_dir);
    if (*imp) cmd_import_r2r(common, connectivity_dir, episodes_path, split, d_feat);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
