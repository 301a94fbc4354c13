#include "pta/experiments.hpp"

#include <iomanip>
#include <sstream>

namespace pta {

using nlohmann::json;

SplitResult train_and_evaluate(const Corpus& corpus, const ModelConfig& model_config,
                               const TrainConfig& train_config, std::uint64_t seed,
                               PTAModel* out_model, const FitOptions& options) {
  PTAModel model(model_config, seed);
  TrainConfig tc = train_config;
  tc.seed = seed;
  const FitResult fr = fit(model, corpus.worlds, corpus.train, corpus.val_seen, corpus.val_unseen, tc, options);
  SplitResult out;
  const ActionSpace space = model_config.action_space;
  out.val_seen = evaluate(&model, space, corpus.worlds, corpus.val_seen, tc.max_steps, 0, tc.ndtw_reference);
  out.val_unseen = evaluate(&model, space, corpus.worlds, corpus.val_unseen, tc.max_steps, 0, tc.ndtw_reference);
  out.best_epoch = fr.best_epoch;
  out.epochs_run = static_cast<int>(fr.epochs.size());
  if (out_model) *out_model = std::move(model);
  return out;
}

namespace {

json report_row(const EpisodeMetrics& m) {
  return {{"NE", m.ne}, {"SR", m.sr},     {"OSR", m.osr},   {"SPL", m.spl},
          {"PL", m.pl}, {"CLS", m.cls},   {"nDTW", m.ndtw}, {"SDTW", m.sdtw}};
}

}  // namespace

json ActionSpaceComparison::to_json() const {
  json j;
  j["trunk"] = trunk;
  for (const auto& [name, r] : {std::pair<const char*, const SplitResult*>{"low", &low}, {"high", &high}}) {
    j["rows"][name] = {{"val_seen", report_row(r->val_seen.mean)},
                       {"val_unseen", report_row(r->val_unseen.mean)},
                       {"val_seen_successes", count_successes(r->val_seen)},
                       {"val_seen_episodes", r->val_seen.episodes.size()},
                       {"best_epoch", r->best_epoch},
                       {"epochs_run", r->epochs_run}};
  }
  j["sr_gap"] = {{"val_seen", sr_gap_seen()}, {"val_unseen", sr_gap_unseen()}};
  // Context only: the published full-scale R2R val-unseen SR of each head.
  j["reference_context"] = {{"low_sr", 0.40}, {"high_sr", 0.43}};
  return j;
}

std::string ActionSpaceComparison::to_table() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  os << "split       head    NE      SR     OSR    SPL    PL      CLS    nDTW   SDTW\n";
  auto line = [&](const char* split, const char* head, const EpisodeMetrics& m) {
    os << std::left << std::setw(12) << split << std::setw(6) << head << std::right << std::setw(6) << m.ne
       << ' ' << std::setw(6) << m.sr << ' ' << std::setw(6) << m.osr << ' ' << std::setw(6) << m.spl << ' '
       << std::setw(7) << m.pl << ' ' << std::setw(6) << m.cls << ' ' << std::setw(6) << m.ndtw << ' '
       << std::setw(6) << m.sdtw << '\n';
  };
  line("val_seen", "low", low.val_seen.mean);
  line("val_seen", "high", high.val_seen.mean);
  line("val_unseen", "low", low.val_unseen.mean);
  line("val_unseen", "high", high.val_unseen.mean);
  os << "|low - high| SR: val_seen " << sr_gap_seen() << ", val_unseen " << sr_gap_unseen() << '\n';
  return os.str();
}

ActionSpaceComparison compare_action_spaces(const Corpus& corpus, ModelConfig trunk,
                                            const TrainConfig& train_config, std::uint64_t seed,
                                            const std::function<void(const std::string&)>& progress) {
  ActionSpaceComparison out;
  out.trunk = trunk.to_json();
  out.trunk.erase("action_space");
  trunk.action_space = ActionSpace::kLow;
  if (progress) progress("training low-level head");
  out.low = train_and_evaluate(corpus, trunk, train_config, seed);
  trunk.action_space = ActionSpace::kHigh;
  if (progress) progress("training high-level head");
  out.high = train_and_evaluate(corpus, trunk, train_config, seed);
  return out;
}

std::vector<AblationVariant> ablation_variants() {
  std::vector<AblationVariant> v;
  v.push_back({"full", {}});
  Ablation a;
  a.no_text_branch = true;
  v.push_back({"no_text_branch", a});
  a = {};
  a.no_image_branch = true;
  v.push_back({"no_image_branch", a});
  a = {};
  a.no_early_fusion = true;
  v.push_back({"no_early_fusion", a});
  a = {};
  a.last_action_only = true;
  v.push_back({"last_action_only", a});
  return v;
}

double AblationRun::mean_spl() const {
  if (val_unseen_spl.empty()) return 0.0;
  double s = 0.0;
  for (double x : val_unseen_spl) s += x;
  return s / static_cast<double>(val_unseen_spl.size());
}

std::vector<AblationRun> run_ablations(const Corpus& corpus, const ModelConfig& base,
                                       const TrainConfig& train_config,
                                       std::span<const std::uint64_t> seeds,
                                       const std::function<void(const std::string&)>& progress) {
  std::vector<AblationRun> runs;
  for (const auto& variant : ablation_variants()) {
    AblationRun run{variant, {}};
    ModelConfig mc = base;
    mc.ablation = variant.flags;
    for (std::uint64_t seed : seeds) {
      if (progress) progress(variant.name + " seed " + std::to_string(seed));
      run.val_unseen_spl.push_back(train_and_evaluate(corpus, mc, train_config, seed).val_unseen.mean.spl);
    }
    runs.push_back(std::move(run));
  }
  return runs;
}

int count_successes(const MetricsReport& report) {
  int n = 0;
  for (const auto& e : report.episodes) n += e.sr > 0.5 ? 1 : 0;
  return n;
}

}  // namespace pta
