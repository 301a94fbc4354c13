#pragma once

// The PTA network: instruction encoder, image encoder with early
// (cross-attention) fusion, action-history decoder with late fusion, and the
// low-level (6-way softmax) and high-level (bilinear over neighbors) heads.

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "pta/attention.hpp"
#include "pta/vocab.hpp"

namespace pta {

enum class ActionSpace { kLow, kHigh };

std::string to_string(ActionSpace space);
ActionSpace action_space_from_string(const std::string& s);

/// Ablation switches. All false is the full model.
struct Ablation {
  bool no_text_branch = false;   // decoder drops text cross-attention
  bool no_image_branch = false;  // decoder drops image cross-attention
  bool no_early_fusion = false;  // image encoder skips instruction cross-attention
  bool last_action_only = false; // history truncated to the last action

  bool operator==(const Ablation&) const = default;
};

struct ModelConfig {
  int vocab_size = 0;  // 0 means the shipped vocabulary
  int d_word = 64;
  int d_feat = 64;
  int d_model = 64;
  int heads = 4;
  int d_ff = 256;
  int blocks = 1;  // encoder blocks per branch
  double dropout = 0.1;
  int view_count = 36;
  ActionSpace action_space = ActionSpace::kLow;
  Ablation ablation;

  static ModelConfig desk();
  /// 512 / 8 heads / 2048, 300-d word table, 2048-d features.
  static ModelConfig paper();
  static ModelConfig preset(const std::string& name);

  int resolved_vocab() const;
  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);

  bool operator==(const ModelConfig&) const = default;
};

inline constexpr int kStartAction = kNumLowActions;  // history row for <start>

struct EncoderBlock {
  MultiHeadParams self_attn;
  LayerNormParams self_norm;
  MultiHeadParams cross_attn;  // image branch only
  LayerNormParams cross_norm;
  FeedForwardParams ff;
  LayerNormParams ff_norm;
};

struct PTAParameters {
  Tensor word_embedding;  // vocab x d_word
  InputProjection instruction_proj;
  LayerNormParams instruction_proj_norm;
  std::vector<EncoderBlock> instruction_blocks;

  InputProjection image_proj;  // (d_feat + 3) -> d_model
  LayerNormParams image_proj_norm;
  std::vector<EncoderBlock> image_blocks;

  Tensor action_embedding;  // (6 + 1) x d_model; last row is <start>
  MultiHeadParams history_attn;
  LayerNormParams history_norm;
  MultiHeadParams text_attn;
  LayerNormParams text_norm;
  MultiHeadParams image_attn;
  LayerNormParams image_norm;
  Tensor fusion_w, fusion_b;  // 2*d_model -> d_model

  // low-level head
  Tensor low_w, low_b;
  // high-level head
  Tensor state_w, state_b;
  Tensor view_w, view_b;
  Tensor stop_embedding;
};

struct CallCounters {
  long encode_instruction = 0;
  long encode_observation = 0;
  long decode_state = 0;
  long select = 0;

  void reset();
};

class PTAModel {
 public:
  PTAModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  PTAParameters& params() { return params_; }
  const PTAParameters& params() const { return params_; }

  /// Every learnable tensor under a stable dotted name.
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;
  void zero_grad();
  std::size_t parameter_count() const;

  /// Deep copy of all parameter values.
  std::vector<Matrix> snapshot() const;
  void restore(const std::vector<Matrix>& values);

  CallCounters& counters() const { return counters_; }

 private:
  ModelConfig config_;
  PTAParameters params_;
  mutable CallCounters counters_;
};

struct InstructionEncoding {
  Tensor encoded;  // n_kept x d_model
  int n_kept = 0;
  // Keys/values of `encoded`, projected once per episode for every
  // cross-attention that reads the instruction.
  std::vector<ProjectedMemory> image_memory;
  ProjectedMemory decoder_memory;
};

struct VisualEncoding {
  Tensor encoded;  // views x d_model, rows in observation order
};

InstructionEncoding encode_instruction(const PTAModel& model, std::span<const int> tokens,
                                       const ForwardContext& ctx = {});

/// `observation` is views x (d_feat + 3): features with coordinates appended.
VisualEncoding encode_observation(const PTAModel& model, const Matrix& observation,
                                  const InstructionEncoding& instruction,
                                  const ForwardContext& ctx = {});

/// Decoder output for the last history position (1 x d_model).
Tensor decode_state(const PTAModel& model, std::span<const int> history,
                    const InstructionEncoding& instruction, const VisualEncoding& visual,
                    const ForwardContext& ctx = {});

/// Decoder outputs for every history position under a causal mask.
Tensor decode_states(const PTAModel& model, std::span<const int> history,
                     const InstructionEncoding& instruction, const VisualEncoding& visual,
                     const ForwardContext& ctx = {});

/// Logits of the 6 atomic actions (1 x 6).
Tensor low_logits(const PTAModel& model, const Tensor& state);
Tensor select_low(const PTAModel& model, const Tensor& state);

/// Bilinear logits over `candidates` (n x (d_feat + 3)) followed by stop,
/// which is always the last entry (1 x (n + 1)).
Tensor high_logits(const PTAModel& model, const Tensor& state, const Matrix& candidates);
Tensor select_high(const PTAModel& model, const Tensor& state, const Matrix& candidates);

enum class ActMode { kTrain, kEval };

/// kTrain samples from `probabilities`; kEval takes the argmax, lowest
/// index on ties.
int act(const RowVector& probabilities, ActMode mode, std::mt19937_64& rng);

// ---- checkpoints -------------------------------------------------------------

inline constexpr int kCheckpointFormatVersion = 1;

/// JSON container: {"format_version", "config", "heads", "parameters":
/// {name: {"shape": [r, c], "data": [...]}}, "metadata"}. Values are written
/// with round-trip precision.
nlohmann::json checkpoint_to_json(const PTAModel& model, const nlohmann::json& metadata = {});
PTAModel model_from_checkpoint(const nlohmann::json& j, nlohmann::json* metadata = nullptr);
void save_checkpoint(const std::filesystem::path& path, const PTAModel& model,
                     const nlohmann::json& metadata = {});
PTAModel load_checkpoint(const std::filesystem::path& path, nlohmann::json* metadata = nullptr);

}  // namespace pta
