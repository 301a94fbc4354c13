#include "pta/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "pta/world_io.hpp"

namespace pta {

using nlohmann::json;

const World& world_for(const WorldIndex& worlds, const Episode& episode) {
  auto it = worlds.find(episode.scan);
  if (it == worlds.end()) throw DataError("episode " + episode.id + ": unknown scan '" + episode.scan + "'");
  return it->second;
}

// ---- config --------------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !(rl_lr > 0.0)) throw ConfigError("train: learning rates must be positive");
  if (batch_size <= 0 || rl_batch_size <= 0) throw ConfigError("train: batch sizes must be positive");
  if (lr_patience_epochs <= 0 || early_stop_epochs <= 0) throw ConfigError("train: patience values must be positive");
  if (lr_patience_epochs >= early_stop_epochs) throw ConfigError("train: lr_patience_epochs must be below early_stop_epochs");
  if (!(lr_factor > 1.0)) throw ConfigError("train: lr_factor must exceed 1");
  if (max_epochs <= 0) throw ConfigError("train: max_epochs must be positive");
  if (max_steps < 0) throw ConfigError("train: max_steps must be >= 0");
  if (grad_clip < 0.0) throw ConfigError("train: grad_clip must be >= 0");
  if (rl_updates < 0) throw ConfigError("train: rl_updates must be >= 0");
  if (rl_baseline_decay < 0.0 || rl_baseline_decay >= 1.0) throw ConfigError("train: rl_baseline_decay must lie in [0, 1)");
}

json TrainConfig::to_json() const {
  return {{"lr", lr},
          {"rl_lr", rl_lr},
          {"batch_size", batch_size},
          {"lr_patience_epochs", lr_patience_epochs},
          {"lr_factor", lr_factor},
          {"early_stop_epochs", early_stop_epochs},
          {"max_epochs", max_epochs},
          {"max_steps", max_steps},
          {"seed", seed},
          {"teacher_forcing", teacher_forcing},
          {"grad_clip", grad_clip},
          {"rl_updates", rl_updates},
          {"rl_batch_size", rl_batch_size},
          {"rl_baseline", rl_baseline},
          {"rl_baseline_decay", rl_baseline_decay},
          {"ndtw_reference", to_string(ndtw_reference)}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("train config must be an object");
  const json defaults = TrainConfig{}.to_json();
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!defaults.contains(it.key())) throw ConfigError("train config: unknown key '" + it.key() + "'");
  }
  TrainConfig c;
  try {
    c.lr = j.value("lr", c.lr);
    c.rl_lr = j.value("rl_lr", c.rl_lr);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr_patience_epochs = j.value("lr_patience_epochs", c.lr_patience_epochs);
    c.lr_factor = j.value("lr_factor", c.lr_factor);
    c.early_stop_epochs = j.value("early_stop_epochs", c.early_stop_epochs);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.max_steps = j.value("max_steps", c.max_steps);
    c.seed = j.value("seed", c.seed);
    c.teacher_forcing = j.value("teacher_forcing", c.teacher_forcing);
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    c.rl_updates = j.value("rl_updates", c.rl_updates);
    c.rl_batch_size = j.value("rl_batch_size", c.rl_batch_size);
    c.rl_baseline = j.value("rl_baseline", c.rl_baseline);
    c.rl_baseline_decay = j.value("rl_baseline_decay", c.rl_baseline_decay);
    if (j.contains("ndtw_reference")) c.ndtw_reference = ndtw_reference_from_string(j["ndtw_reference"].get<std::string>());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---- Adam ------------------------------------------------------------------------

void adam_step(std::span<const Tensor> params, std::span<const Matrix> grads, AdamState& state,
               double lr) {
  if (params.size() != grads.size()) throw ContractError("adam_step: parameter/gradient count mismatch");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.push_back(Matrix::Zero(p.rows(), p.cols()));
      state.v.push_back(Matrix::Zero(p.rows(), p.cols()));
    }
  }
  if (state.m.size() != params.size()) throw ContractError("adam_step: state belongs to another parameter set");
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& g = grads[i];
    if (g.rows() != params[i].rows() || g.cols() != params[i].cols()) {
      throw DimensionError("adam_step: gradient " + std::to_string(i) + " has the wrong shape");
    }
    Matrix& m = state.m[i];
    Matrix& v = state.v[i];
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
    Tensor p = params[i];
    p.mutable_value().array() -=
        lr * (m.array() / c1) / ((v.array() / c2).sqrt() + state.eps);
  }
}

void adam_step(std::span<const Tensor> params, AdamState& state, double lr) {
  std::vector<Matrix> grads;
  grads.reserve(params.size());
  for (const auto& p : params) grads.push_back(p.grad());
  adam_step(params, grads, state, lr);
}

double clip_grad_norm(std::span<const Tensor> params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) sq += p.grad().squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (const auto& p : params) {
      Matrix delta = p.grad() * (s - 1.0);
      Tensor::accumulate_into(p, delta);
    }
  }
  return norm;
}

// ---- rollouts --------------------------------------------------------------------

std::vector<int> Rollout::trajectory() const {
  std::vector<int> out;
  for (const auto& p : poses) {
    if (out.empty() || out.back() != p.node) out.push_back(p.node);
  }
  return out;
}

int episode_max_steps(const World& world, const Episode& episode, ActionSpace space, int configured) {
  if (configured > 0) return configured;
  if (space == ActionSpace::kHigh) return default_max_steps(static_cast<int>(episode.path.size()), true);
  return default_max_steps(static_cast<int>(teacher_low_actions(world, episode).size()), false);
}

namespace {

int teacher_index(const World& world, const AgentPose& pose, const Episode& episode, int progress,
                  ActionSpace space) {
  if (space == ActionSpace::kLow) return static_cast<int>(teacher_low(world, pose, episode, progress));
  const HighLevelAction a = teacher_high(world, pose, episode, progress);
  const auto& nbrs = world.neighbors[static_cast<std::size_t>(pose.node)];
  if (a.stop) return static_cast<int>(nbrs.size());
  return static_cast<int>(std::find(nbrs.begin(), nbrs.end(), a.target) - nbrs.begin());
}

}  // namespace

Rollout run_episode(const PTAModel* model, ActionSpace space, const World& world,
                    const Episode& episode, const RolloutOptions& options, std::mt19937_64& rng) {
  const bool needs_model = options.policy == RolloutPolicy::kSample ||
                           options.policy == RolloutPolicy::kGreedy || options.track_teacher_loss ||
                           options.track_taken_nll;
  if (needs_model && model == nullptr) throw ContractError("run_episode: policy needs a model");
  if (model && model->config().action_space != space) {
    throw ConfigError("run_episode: model head is " + to_string(model->config().action_space) +
                      " but the rollout uses the " + to_string(space) + " action space");
  }
  const bool need_teacher = options.policy == RolloutPolicy::kTeacher || options.track_teacher_loss;

  Rollout out;
  out.max_steps = episode_max_steps(world, episode, space, options.max_steps);
  AgentPose pose = episode.start_pose();
  out.poses.push_back(pose);
  int progress = initial_progress(episode);

  std::optional<InstructionEncoding> instruction;
  if (model && (options.policy != RolloutPolicy::kRandom || options.track_teacher_loss ||
                options.track_taken_nll)) {
    instruction = encode_instruction(*model, episode.instruction, options.ctx);
  }
  std::vector<int> history{kStartAction};

  for (int step = 0; step < out.max_steps; ++step) {
    const int teacher = need_teacher ? teacher_index(world, pose, episode, progress, space) : -1;
    Matrix candidates;
    if (space == ActionSpace::kHigh) candidates = teleport_candidates(world, pose);
    const int n_actions = space == ActionSpace::kLow ? kNumLowActions : static_cast<int>(candidates.rows()) + 1;

    Tensor logits;
    if (instruction) {
      const VisualEncoding visual = encode_observation(*model, observe(world, pose).stacked(), *instruction, options.ctx);
      const Tensor state = decode_state(*model, history, *instruction, visual, options.ctx);
      ++model->counters().select;
      logits = space == ActionSpace::kLow ? low_logits(*model, state) : high_logits(*model, state, candidates);
    }

    int action = 0;
    switch (options.policy) {
      case RolloutPolicy::kTeacher:
        action = teacher;
        break;
      case RolloutPolicy::kRandom: {
        std::uniform_int_distribution<int> pick(0, n_actions - 1);
        action = pick(rng);
        break;
      }
      case RolloutPolicy::kSample:
      case RolloutPolicy::kGreedy: {
        const RowVector probs = softmax_rows(logits.value());
        action = act(probs, options.policy == RolloutPolicy::kSample ? ActMode::kTrain : ActMode::kEval, rng);
        break;
      }
    }

    out.actions.push_back(action);
    out.teacher.push_back(teacher);
    if (options.track_teacher_loss) out.step_loss.push_back(cross_entropy(logits, teacher));
    if (options.track_taken_nll) out.taken_nll.push_back(cross_entropy(logits, action));

    StepResult r;
    if (space == ActionSpace::kLow) {
      r = step_low(world, pose, static_cast<LowAction>(action));
      history.push_back(action);
    } else {
      const auto& nbrs = world.neighbors[static_cast<std::size_t>(pose.node)];
      const bool stop = action == static_cast<int>(nbrs.size());
      r = step_high(world, pose, stop ? HighLevelAction::halt() : HighLevelAction::to(nbrs[static_cast<std::size_t>(action)]));
      // The teleport reuses the forward-step embedding in the history.
      history.push_back(stop ? static_cast<int>(LowAction::kEndEpisode) : static_cast<int>(LowAction::kStepForward));
    }
    pose = r.pose;
    out.poses.push_back(pose);
    progress = advance_progress(episode, progress, pose.node);
    if (r.done) {
      out.stopped = true;
      break;
    }
  }
  return out;
}

Tensor il_rollout_loss(const PTAModel& model, const World& world, const Episode& episode,
                       std::mt19937_64& rng, const TrainConfig& config, const ForwardContext& ctx) {
  RolloutOptions opt;
  opt.policy = config.teacher_forcing ? RolloutPolicy::kTeacher : RolloutPolicy::kSample;
  opt.track_teacher_loss = true;
  opt.max_steps = config.max_steps;
  opt.ctx = ctx;
  Rollout r = run_episode(&model, model.config().action_space, world, episode, opt, rng);
  Tensor total = r.step_loss.front();
  for (std::size_t i = 1; i < r.step_loss.size(); ++i) total = add(total, r.step_loss[i]);
  return scale(total, 1.0 / static_cast<double>(r.step_loss.size()));
}

double RewardTrace::total_return() const {
  return std::accumulate(step_rewards.begin(), step_rewards.end(), 0.0) + success_reward;
}

namespace {

Polyline<double> positions_of(const World& world, std::span<const int> nodes) {
  Polyline<double> p(static_cast<Index>(nodes.size()), 3);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    p.row(static_cast<Index>(i)) = world.positions[static_cast<std::size_t>(nodes[i])].transpose();
  }
  return p;
}

}  // namespace

RewardTrace rl_rollout(const PTAModel& model, const World& world, const Episode& episode,
                       std::mt19937_64& rng, const TrainConfig& config, const ForwardContext& ctx) {
  RolloutOptions opt;
  opt.policy = RolloutPolicy::kSample;
  opt.track_taken_nll = true;
  opt.max_steps = config.max_steps;
  opt.ctx = ctx;
  Rollout r = run_episode(&model, model.config().action_space, world, episode, opt, rng);

  RewardTrace trace;
  const Polyline<double> reference = positions_of(world, episode.path);
  std::vector<int> prefix{r.poses.front().node};
  double previous = ndtw(positions_of(world, prefix), reference, episode.d_th, config.ndtw_reference);
  trace.ndtw_first = previous;
  for (int t = 0; t < r.steps(); ++t) {
    const int node = r.poses[static_cast<std::size_t>(t) + 1].node;
    double current = previous;
    if (node != prefix.back()) {
      prefix.push_back(node);
      current = ndtw(positions_of(world, prefix), reference, episode.d_th, config.ndtw_reference);
    }
    trace.step_rewards.push_back(current - previous);
    trace.log_probs.push_back(scale(r.taken_nll[static_cast<std::size_t>(t)], -1.0));
    previous = current;
  }
  trace.ndtw_full = previous;
  trace.trajectory = prefix;
  const double d_goal = (world.positions[static_cast<std::size_t>(prefix.back())] -
                         world.positions[static_cast<std::size_t>(episode.goal())]).norm();
  trace.success_reward = std::max(0.0, 1.0 - d_goal / episode.d_th);
  return trace;
}

bool reinforce_update(PTAModel& model, std::span<RewardTrace> traces, AdamState& adam, double lr,
                      double baseline, double grad_clip) {
  if (traces.empty()) throw ContractError("reinforce_update: no traces");
  for (const auto& t : traces) {
    if (t.consumed) throw ContractError("reinforce_update: trace already consumed");
    if (t.log_probs.size() != t.step_rewards.size()) throw ContractError("reinforce_update: incomplete trace");
  }
  std::vector<Tensor> terms;
  const double inv_b = 1.0 / static_cast<double>(traces.size());
  for (auto& t : traces) {
    t.consumed = true;
    for (std::size_t i = 0; i < t.log_probs.size(); ++i) {
      const double advantage = t.step_rewards[i] + t.success_reward - baseline;
      if (advantage != 0.0) terms.push_back(scale(t.log_probs[i], -advantage * inv_b));
    }
    t.log_probs.clear();  // release the graph
  }
  if (terms.empty()) return false;
  Tensor loss = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) loss = add(loss, terms[i]);
  model.zero_grad();
  backward(loss);
  const auto params = model.parameters();
  if (grad_clip > 0.0) clip_grad_norm(params, grad_clip);
  adam_step(params, adam, lr);
  model.zero_grad();
  return true;
}

// ---- schedule --------------------------------------------------------------------

LrSchedule::LrSchedule(double lr, int patience, double factor, int early_stop)
    : lr_(lr), patience_(patience), factor_(factor), early_stop_(early_stop) {
  if (patience <= 0 || early_stop <= patience) throw ConfigError("schedule: need 0 < patience < early_stop");
}

LrSchedule::Event LrSchedule::observe(double monitor) {
  ++epoch_;
  if (monitor > best_) {
    best_ = monitor;
    best_epoch_ = epoch_;
    stale_ = 0;
    return Event::kImproved;
  }
  ++stale_;
  if (stale_ >= early_stop_) return Event::kStop;
  if (stale_ == patience_) {
    lr_ /= factor_;
    ++reductions_;
    return Event::kReduced;
  }
  return Event::kFlat;
}

// ---- evaluation ------------------------------------------------------------------

TrajectoryRecord<double> trajectory_record(const World& world, const Episode& episode,
                                           std::span<const int> trajectory, NdtwReference norm) {
  TrajectoryRecord<double> rec;
  rec.norm = norm;
  rec.predicted = positions_of(world, trajectory);
  rec.reference = positions_of(world, episode.path);
  rec.goal = world.positions[static_cast<std::size_t>(episode.goal())].transpose();
  rec.d_th = episode.d_th;
  rec.shortest_length = geodesic_distance(world, episode.start(), episode.goal());
  return rec;
}

MetricsReport evaluate(const PTAModel* model, ActionSpace space, const WorldIndex& worlds,
                       std::span<const Episode> episodes, int max_steps, std::uint64_t seed,
                       NdtwReference norm) {
  NoGradGuard no_grad;
  std::mt19937_64 rng(seed);
  RolloutOptions opt;
  opt.policy = model ? RolloutPolicy::kGreedy : RolloutPolicy::kRandom;
  opt.max_steps = max_steps;
  std::vector<EpisodeMetrics> rows;
  rows.reserve(episodes.size());
  for (const auto& ep : episodes) {
    const World& world = world_for(worlds, ep);
    const Rollout r = run_episode(model, space, world, ep, opt, rng);
    const auto traj = r.trajectory();
    rows.push_back(evaluate_record(ep.id, trajectory_record(world, ep, traj, norm)));
  }
  return MetricsReport::from(std::move(rows));
}

// ---- fit -------------------------------------------------------------------------

std::string training_log_header() { return "epoch,split,NE,SR,OSR,SPL,CLS,nDTW,SDTW,loss,lr\n"; }

std::string training_log_rows(const EpochLog& log) {
  std::ostringstream os;
  os << std::setprecision(17);
  auto row = [&](const char* split, const MetricsReport& r) {
    const auto& m = r.mean;
    os << log.epoch << ',' << split << ',' << m.ne << ',' << m.sr << ',' << m.osr << ',' << m.spl << ','
       << m.cls << ',' << m.ndtw << ',' << m.sdtw << ',' << log.train_loss << ',' << log.lr << '\n';
  };
  row("val_seen", log.val_seen);
  row("val_unseen", log.val_unseen);
  return os.str();
}

FitResult fit(PTAModel& model, const WorldIndex& worlds, std::span<const Episode> train,
              std::span<const Episode> val_seen, std::span<const Episode> val_unseen,
              const TrainConfig& config, const FitOptions& options) {
  config.validate();
  if (train.empty()) throw ContractError("fit: empty training split");
  std::mt19937_64 rng(config.seed);
  AdamState adam;
  LrSchedule schedule(config.lr, config.lr_patience_epochs, config.lr_factor, config.early_stop_epochs);
  const auto params = model.parameters();
  const ActionSpace space = model.config().action_space;

  std::ofstream log;
  if (!options.log_csv.empty()) {
    if (options.log_csv.has_parent_path()) std::filesystem::create_directories(options.log_csv.parent_path());
    log.open(options.log_csv);
    if (!log) throw IoError("cannot open training log " + options.log_csv.string());
    log << training_log_header();
  }

  ForwardContext ctx{true, model.config().dropout, &rng};
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Matrix> best = model.snapshot();
  FitResult result;
  const auto started = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count(); };
  double last_epoch_seconds = 0.0;

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    const double epoch_start = elapsed();
    if (options.time_budget_seconds > 0.0 && epoch > 0 &&
        epoch_start + last_epoch_seconds > options.time_budget_seconds) {
      result.out_of_time = true;
      break;
    }
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const double inv_b = 1.0 / static_cast<double>(end - start);
      model.zero_grad();
      for (std::size_t k = start; k < end; ++k) {
        const Episode& ep = train[order[k]];
        Tensor loss = il_rollout_loss(model, world_for(worlds, ep), ep, rng, config, ctx);
        loss_sum += loss.item();
        backward(scale(loss, inv_b));
      }
      if (config.grad_clip > 0.0) clip_grad_norm(params, config.grad_clip);
      adam_step(params, adam, schedule.lr());
    }
    model.zero_grad();

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = loss_sum / static_cast<double>(train.size());
    entry.lr = schedule.lr();
    entry.val_seen = evaluate(&model, space, worlds, val_seen, config.max_steps, 0, config.ndtw_reference);
    entry.val_unseen = evaluate(&model, space, worlds, val_unseen, config.max_steps, 0, config.ndtw_reference);
    entry.monitor = entry.val_unseen.mean.spl;
    if (options.monitor_override) entry.monitor = options.monitor_override(epoch, entry.monitor);
    if (log) log << training_log_rows(entry) << std::flush;

    const auto event = schedule.observe(entry.monitor);
    if (event == LrSchedule::Event::kImproved) {
      best = model.snapshot();
      if (!options.checkpoint.empty()) {
        json meta = options.metadata.is_null() ? json::object() : options.metadata;
        meta["epoch"] = epoch;
        meta["monitor"] = entry.monitor;
        meta["train_config"] = config.to_json();
        save_checkpoint(options.checkpoint, model, meta);
      }
    }
    result.epochs.push_back(entry);
    if (options.on_epoch) options.on_epoch(entry);
    last_epoch_seconds = elapsed() - epoch_start;
    if (event == LrSchedule::Event::kStop) {
      result.early_stopped = true;
      break;
    }
  }
  model.restore(best);
  result.seconds = elapsed();
  result.best_epoch = schedule.best_epoch();
  result.best_monitor = schedule.best();
  result.lr_reductions = schedule.reductions();
  return result;
}

RlResult finetune_rl(PTAModel& model, const WorldIndex& worlds, std::span<const Episode> train,
                     const TrainConfig& config,
                     const std::function<void(int update, double mean_return)>& on_update) {
  config.validate();
  if (train.empty()) throw ContractError("finetune_rl: empty training split");
  std::mt19937_64 rng(config.seed);
  ForwardContext ctx{true, model.config().dropout, &rng};
  AdamState adam;
  RlResult result;
  double baseline = 0.0;
  bool have_baseline = false;
  std::uniform_int_distribution<std::size_t> pick(0, train.size() - 1);
  for (int u = 0; u < config.rl_updates; ++u) {
    std::vector<RewardTrace> traces;
    double ret = 0.0, nd = 0.0;
    for (int b = 0; b < config.rl_batch_size; ++b) {
      const Episode& ep = train[pick(rng)];
      traces.push_back(rl_rollout(model, world_for(worlds, ep), ep, rng, config, ctx));
      ret += traces.back().total_return();
      nd += traces.back().ndtw_full;
    }
    ret /= config.rl_batch_size;
    nd /= config.rl_batch_size;
    reinforce_update(model, traces, adam, config.rl_lr, config.rl_baseline && have_baseline ? baseline : 0.0,
                     config.grad_clip);
    if (config.rl_baseline) {
      baseline = have_baseline ? config.rl_baseline_decay * baseline + (1.0 - config.rl_baseline_decay) * ret : ret;
      have_baseline = true;
    }
    result.update_returns.push_back(ret);
    result.update_ndtw.push_back(nd);
    if (on_update) on_update(u, ret);
  }
  return result;
}

}  // namespace pta
