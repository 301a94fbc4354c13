#pragma once

// Desk-scale experiments built on the training loop: the low- vs high-level
// action-space comparison and the ablation sweep.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "pta/corpus.hpp"
#include "pta/training.hpp"

namespace pta {

struct SplitResult {
  MetricsReport val_seen, val_unseen;
  int best_epoch = -1;
  int epochs_run = 0;
};

/// Trains `model_config` from scratch with seed `seed` and evaluates the best
/// weights on both validation splits.
SplitResult train_and_evaluate(const Corpus& corpus, const ModelConfig& model_config,
                               const TrainConfig& train_config, std::uint64_t seed,
                               PTAModel* out_model = nullptr,
                               const FitOptions& options = {});

struct ActionSpaceComparison {
  SplitResult low, high;
  nlohmann::json trunk;  // shared model config, head excluded

  double sr_gap_seen() const { return std::abs(low.val_seen.mean.sr - high.val_seen.mean.sr); }
  double sr_gap_unseen() const { return std::abs(low.val_unseen.mean.sr - high.val_unseen.mean.sr); }
  nlohmann::json to_json() const;
  /// Two rows (low, high) per split with NE, SR, OSR, SPL, PL, CLS, nDTW, SDTW.
  std::string to_table() const;
};

/// Both heads share every trunk setting; only `action_space` differs.
ActionSpaceComparison compare_action_spaces(const Corpus& corpus, ModelConfig trunk,
                                            const TrainConfig& train_config, std::uint64_t seed,
                                            const std::function<void(const std::string&)>& progress = {});

struct AblationVariant {
  std::string name;
  Ablation flags;
};

/// The full model followed by the four single-flag ablations.
std::vector<AblationVariant> ablation_variants();

struct AblationRun {
  AblationVariant variant;
  std::vector<double> val_unseen_spl;  // one per seed
  double mean_spl() const;
};

std::vector<AblationRun> run_ablations(const Corpus& corpus, const ModelConfig& base,
                                       const TrainConfig& train_config,
                                       std::span<const std::uint64_t> seeds,
                                       const std::function<void(const std::string&)>& progress = {});

/// Successes counted directly from the per-episode rows.
int count_successes(const MetricsReport& report);

}  // namespace pta
