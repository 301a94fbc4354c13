#pragma once

// Imitation learning with student forcing, REINFORCE finetuning on the
// nDTW-gain reward, Adam, the plateau schedule, and greedy evaluation.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "pta/metrics.hpp"
#include "pta/model.hpp"
#include "pta/nav_env.hpp"

namespace pta {

/// Worlds keyed by scan name.
using WorldIndex = std::map<std::string, World>;

const World& world_for(const WorldIndex& worlds, const Episode& episode);

struct TrainConfig {
  double lr = 1e-4;
  double rl_lr = 1e-7;
  int batch_size = 32;
  int lr_patience_epochs = 5;
  double lr_factor = 10.0;
  int early_stop_epochs = 30;
  int max_epochs = 100;
  int max_steps = 0;  // 0: per-episode default (3x teacher length with floor)
  std::uint64_t seed = 0;
  bool teacher_forcing = false;  // debugging aid; IL samples by default
  double grad_clip = 0.0;        // global-norm clip, 0 disables
  int rl_updates = 500;
  int rl_batch_size = 8;
  bool rl_baseline = false;  // moving-average baseline on the return
  double rl_baseline_decay = 0.9;
  NdtwReference ndtw_reference = NdtwReference::kPoints;  // |R| in nDTW, rewards and reports

  void validate() const;
  nlohmann::json to_json() const;
  /// Unknown keys are rejected; absent keys keep their defaults.
  static TrainConfig from_json(const nlohmann::json& j);
};

// ---- optimizer -------------------------------------------------------------------

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<Matrix> m, v;
};

/// One bias-corrected Adam update of `params` with the given gradients.
void adam_step(std::span<const Tensor> params, std::span<const Matrix> grads, AdamState& state,
               double lr);
/// Same, reading each parameter's accumulated gradient.
void adam_step(std::span<const Tensor> params, AdamState& state, double lr);

/// Rescales gradients so their global L2 norm is at most `max_norm`.
double clip_grad_norm(std::span<const Tensor> params, double max_norm);

// ---- rollouts --------------------------------------------------------------------

enum class RolloutPolicy {
  kSample,   // categorical sample from the model
  kTeacher,  // execute the teacher action
  kGreedy,   // argmax, no gradients
  kRandom,   // uniform over the legal action set, no model
};

struct Rollout {
  std::vector<AgentPose> poses;   // start pose, then the pose after each step
  std::vector<int> actions;       // taken action: low index, or candidate index (stop = last)
  std::vector<int> teacher;       // teacher action index at each step
  std::vector<Tensor> step_loss;  // cross-entropy of the teacher action, when tracked
  std::vector<Tensor> taken_nll;  // -log pi(taken action), when tracked
  bool stopped = false;           // ended by the agent rather than the step cap
  int max_steps = 0;

  int steps() const { return static_cast<int>(actions.size()); }
  /// Visited nodes with consecutive repeats removed.
  std::vector<int> trajectory() const;
};

struct RolloutOptions {
  RolloutPolicy policy = RolloutPolicy::kGreedy;
  bool track_teacher_loss = false;
  bool track_taken_nll = false;
  int max_steps = 0;  // 0: default for the episode
  ForwardContext ctx;
};

/// Runs one episode to end_episode / stop or the step cap.
Rollout run_episode(const PTAModel* model, ActionSpace space, const World& world,
                    const Episode& episode, const RolloutOptions& options, std::mt19937_64& rng);

/// Step cap for `episode` under `space` when `configured` is 0.
int episode_max_steps(const World& world, const Episode& episode, ActionSpace space, int configured);

/// Student-forcing imitation loss: mean per-step cross-entropy against the
/// teacher action along the sampled trajectory.
Tensor il_rollout_loss(const PTAModel& model, const World& world, const Episode& episode,
                       std::mt19937_64& rng, const TrainConfig& config,
                       const ForwardContext& ctx = {});

struct RewardTrace {
  std::vector<double> step_rewards;  // R_t, nDTW gain of the visited prefix
  double success_reward = 0.0;       // R_s = max(0, 1 - d_goal / d_th)
  std::vector<Tensor> log_probs;     // log pi(a_t | s_t), on the graph
  std::vector<int> trajectory;       // visited nodes, repeats collapsed
  double ndtw_first = 0.0;           // nDTW of the one-point prefix
  double ndtw_full = 0.0;
  bool consumed = false;

  double total_return() const;
};

RewardTrace rl_rollout(const PTAModel& model, const World& world, const Episode& episode,
                       std::mt19937_64& rng, const TrainConfig& config,
                       const ForwardContext& ctx = {});

/// Advantage-weighted policy gradient over `traces` (scaled by 1/size) and a
/// single Adam step at `lr`. Each trace may be used once. Returns false and
/// leaves parameters untouched when every advantage is zero.
bool reinforce_update(PTAModel& model, std::span<RewardTrace> traces, AdamState& adam, double lr,
                      double baseline = 0.0, double grad_clip = 0.0);

// ---- schedule --------------------------------------------------------------------

/// Plateau schedule on a maximized monitor: divide the rate by `factor` when
/// the count of epochs without improvement reaches `patience`, stop when it
/// reaches `early_stop`.
class LrSchedule {
 public:
  enum class Event { kImproved, kFlat, kReduced, kStop };

  LrSchedule(double lr, int patience, double factor, int early_stop);
  Event observe(double monitor);

  double lr() const { return lr_; }
  int reductions() const { return reductions_; }
  int epochs_without_improvement() const { return stale_; }
  int best_epoch() const { return best_epoch_; }
  double best() const { return best_; }

 private:
  double lr_;
  int patience_;
  double factor_;
  int early_stop_;
  int stale_ = 0;
  int epoch_ = -1;
  int best_epoch_ = -1;
  int reductions_ = 0;
  double best_ = -std::numeric_limits<double>::infinity();
};

// ---- evaluation and fitting ------------------------------------------------------

/// Node-position record of a finished rollout.
TrajectoryRecord<double> trajectory_record(const World& world, const Episode& episode,
                                           std::span<const int> trajectory,
                                           NdtwReference norm = NdtwReference::kPoints);

/// Greedy decoding over `episodes`; with `model == nullptr` the uniform random
/// policy is evaluated instead (seeded by `seed`).
MetricsReport evaluate(const PTAModel* model, ActionSpace space, const WorldIndex& worlds,
                       std::span<const Episode> episodes, int max_steps = 0,
                       std::uint64_t seed = 0, NdtwReference norm = NdtwReference::kPoints);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double lr = 0.0;
  MetricsReport val_seen, val_unseen;
  double monitor = 0.0;
};

struct FitOptions {
  std::filesystem::path log_csv;      // empty: no log
  std::filesystem::path checkpoint;   // empty: best parameters kept in memory only
  nlohmann::json metadata;            // echoed into the checkpoint
  /// Replaces the monitor value (val-unseen SPL) for an epoch; for tests.
  std::function<double(int epoch, double spl)> monitor_override;
  std::function<void(const EpochLog&)> on_epoch;
  /// Wall-clock limit in seconds (0: none). Training stops before an epoch
  /// that would likely overrun it, judged by the previous epoch's duration.
  double time_budget_seconds = 0.0;
};

struct FitResult {
  std::vector<EpochLog> epochs;
  int best_epoch = -1;
  double best_monitor = 0.0;
  int lr_reductions = 0;
  bool early_stopped = false;
  bool out_of_time = false;
  double seconds = 0.0;
};

/// Epoch loop of batched IL; the model ends holding the best-monitor weights.
FitResult fit(PTAModel& model, const WorldIndex& worlds, std::span<const Episode> train,
              std::span<const Episode> val_seen, std::span<const Episode> val_unseen,
              const TrainConfig& config, const FitOptions& options = {});

struct RlResult {
  std::vector<double> update_returns;  // mean sampled return per update
  std::vector<double> update_ndtw;     // mean sampled nDTW per update
};

/// `config.rl_updates` REINFORCE updates on batches drawn from `train`.
RlResult finetune_rl(PTAModel& model, const WorldIndex& worlds, std::span<const Episode> train,
                     const TrainConfig& config,
                     const std::function<void(int update, double mean_return)>& on_update = {});

/// CSV header of the training log.
std::string training_log_header();
std::string training_log_rows(const EpochLog& log);

}  // namespace pta
