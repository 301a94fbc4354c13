#include "pta/model.hpp"

#include <algorithm>
#include <numeric>

namespace pta {

std::string to_string(ActionSpace space) { return space == ActionSpace::kLow ? "low" : "high"; }

ActionSpace action_space_from_string(const std::string& s) {
  if (s == "low") return ActionSpace::kLow;
  if (s == "high") return ActionSpace::kHigh;
  throw ConfigError("action space must be 'low' or 'high', got '" + s + "'");
}

// ---- config --------------------------------------------------------------------

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::paper() {
  ModelConfig c;
  c.d_word = 300;
  c.d_feat = 2048;
  c.d_model = 512;
  c.heads = 8;
  c.d_ff = 2048;
  return c;
}

ModelConfig ModelConfig::preset(const std::string& name) {
  if (name == "desk") return desk();
  if (name == "paper") return paper();
  throw ConfigError("unknown preset '" + name + "' (expected desk or paper)");
}

int ModelConfig::resolved_vocab() const { return vocab_size > 0 ? vocab_size : pta::vocab_size(); }

void ModelConfig::validate() const {
  auto positive = [](int v, const char* what) {
    if (v <= 0) throw ConfigError(std::string("model: ") + what + " must be positive");
  };
  positive(d_word, "d_word");
  positive(d_feat, "d_feat");
  positive(d_model, "d_model");
  positive(heads, "heads");
  positive(d_ff, "d_ff");
  positive(blocks, "blocks");
  positive(view_count, "view_count");
  if (d_model % 2 != 0) throw ConfigError("model: d_model must be even");
  if (d_model % heads != 0) throw ConfigError("model: d_model must be divisible by heads");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("model: dropout must lie in [0, 1)");
  if (ablation.no_text_branch && ablation.no_image_branch) {
    throw ConfigError("model: cannot drop both decoder branches");
  }
}

nlohmann::json ModelConfig::to_json() const {
  return {{"vocab_size", resolved_vocab()},
          {"d_word", d_word},
          {"d_feat", d_feat},
          {"d_model", d_model},
          {"heads", heads},
          {"d_ff", d_ff},
          {"blocks", blocks},
          {"dropout", dropout},
          {"view_count", view_count},
          {"action_space", to_string(action_space)},
          {"ablation",
           {{"no_text_branch", ablation.no_text_branch},
            {"no_image_branch", ablation.no_image_branch},
            {"no_early_fusion", ablation.no_early_fusion},
            {"last_action_only", ablation.last_action_only}}}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  static const std::vector<std::string> known = {"vocab_size", "d_word", "d_feat", "d_model",
                                                 "heads",      "d_ff",   "blocks", "dropout",
                                                 "view_count", "action_space", "ablation"};
  if (!j.is_object()) throw ConfigError("model config must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
      throw ConfigError("model config: unknown key '" + it.key() + "'");
    }
  }
  ModelConfig c;
  try {
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.d_word = j.value("d_word", c.d_word);
    c.d_feat = j.value("d_feat", c.d_feat);
    c.d_model = j.value("d_model", c.d_model);
    c.heads = j.value("heads", c.heads);
    c.d_ff = j.value("d_ff", c.d_ff);
    c.blocks = j.value("blocks", c.blocks);
    c.dropout = j.value("dropout", c.dropout);
    c.view_count = j.value("view_count", c.view_count);
    if (j.contains("action_space")) c.action_space = action_space_from_string(j["action_space"].get<std::string>());
    if (j.contains("ablation")) {
      const auto& a = j["ablation"];
      static const std::vector<std::string> flags = {"no_text_branch", "no_image_branch",
                                                     "no_early_fusion", "last_action_only"};
      for (auto it = a.begin(); it != a.end(); ++it) {
        if (std::find(flags.begin(), flags.end(), it.key()) == flags.end()) {
          throw ConfigError("model config: unknown ablation flag '" + it.key() + "'");
        }
      }
      c.ablation.no_text_branch = a.value("no_text_branch", false);
      c.ablation.no_image_branch = a.value("no_image_branch", false);
      c.ablation.no_early_fusion = a.value("no_early_fusion", false);
      c.ablation.last_action_only = a.value("last_action_only", false);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---- parameters ----------------------------------------------------------------

void CallCounters::reset() {
  encode_instruction = 0;
  encode_observation = 0;
  decode_state = 0;
  select = 0;
}

namespace {

EncoderBlock make_block(const ModelConfig& c, bool with_cross, std::mt19937_64& rng) {
  EncoderBlock b;
  b.self_attn = make_multi_head(c.d_model, c.heads, rng);
  b.self_norm = make_layer_norm(c.d_model);
  if (with_cross) {
    b.cross_attn = make_multi_head(c.d_model, c.heads, rng);
    b.cross_norm = make_layer_norm(c.d_model);
  }
  b.ff = make_feed_forward(c.d_model, c.d_ff, rng);
  b.ff_norm = make_layer_norm(c.d_model);
  return b;
}

void add_mh(std::vector<std::pair<std::string, Tensor>>& out, const std::string& prefix,
            const MultiHeadParams& p) {
  out.emplace_back(prefix + ".w_q", p.w_q);
  out.emplace_back(prefix + ".w_k", p.w_k);
  out.emplace_back(prefix + ".w_v", p.w_v);
  out.emplace_back(prefix + ".w_o", p.w_o);
}

void add_ln(std::vector<std::pair<std::string, Tensor>>& out, const std::string& prefix,
            const LayerNormParams& p) {
  out.emplace_back(prefix + ".gain", p.gain);
  out.emplace_back(prefix + ".bias", p.bias);
}

void add_block(std::vector<std::pair<std::string, Tensor>>& out, const std::string& prefix,
               const EncoderBlock& b) {
  add_mh(out, prefix + ".self_attn", b.self_attn);
  add_ln(out, prefix + ".self_norm", b.self_norm);
  if (b.cross_attn.w_q.defined()) {
    add_mh(out, prefix + ".cross_attn", b.cross_attn);
    add_ln(out, prefix + ".cross_norm", b.cross_norm);
  }
  out.emplace_back(prefix + ".ff.w1", b.ff.w1);
  out.emplace_back(prefix + ".ff.b1", b.ff.b1);
  out.emplace_back(prefix + ".ff.w2", b.ff.w2);
  out.emplace_back(prefix + ".ff.b2", b.ff.b2);
  add_ln(out, prefix + ".ff_norm", b.ff_norm);
}

}  // namespace

PTAModel::PTAModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  if (config_.vocab_size == 0) config_.vocab_size = pta::vocab_size();
  std::mt19937_64 rng(seed);
  const auto& c = config_;
  auto& p = params_;

  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix words(c.vocab_size, c.d_word);
  for (Index i = 0; i < words.size(); ++i) words.data()[i] = normal(rng);
  p.word_embedding = Tensor::parameter(std::move(words));
  p.instruction_proj = make_input_projection(c.d_word, c.d_model, rng);
  p.instruction_proj_norm = make_layer_norm(c.d_model);
  for (int b = 0; b < c.blocks; ++b) p.instruction_blocks.push_back(make_block(c, false, rng));

  p.image_proj = make_input_projection(c.d_feat + 3, c.d_model, rng);
  p.image_proj_norm = make_layer_norm(c.d_model);
  for (int b = 0; b < c.blocks; ++b) p.image_blocks.push_back(make_block(c, true, rng));

  Matrix actions(kNumLowActions + 1, c.d_model);
  for (Index i = 0; i < actions.size(); ++i) actions.data()[i] = normal(rng);
  p.action_embedding = Tensor::parameter(std::move(actions));
  p.history_attn = make_multi_head(c.d_model, c.heads, rng);
  p.history_norm = make_layer_norm(c.d_model);
  p.text_attn = make_multi_head(c.d_model, c.heads, rng);
  p.text_norm = make_layer_norm(c.d_model);
  p.image_attn = make_multi_head(c.d_model, c.heads, rng);
  p.image_norm = make_layer_norm(c.d_model);
  p.fusion_w = Tensor::parameter(glorot_uniform(2 * c.d_model, c.d_model, rng));
  p.fusion_b = Tensor::parameter(Matrix::Zero(1, c.d_model));

  if (c.action_space == ActionSpace::kLow) {
    p.low_w = Tensor::parameter(glorot_uniform(c.d_model, kNumLowActions, rng));
    p.low_b = Tensor::parameter(Matrix::Zero(1, kNumLowActions));
  } else {
    p.state_w = Tensor::parameter(glorot_uniform(c.d_model, c.d_model, rng));
    p.state_b = Tensor::parameter(Matrix::Zero(1, c.d_model));
    p.view_w = Tensor::parameter(glorot_uniform(c.d_feat + 3, c.d_model, rng));
    p.view_b = Tensor::parameter(Matrix::Zero(1, c.d_model));
    Matrix stop(1, c.d_model);
    for (Index i = 0; i < stop.size(); ++i) stop.data()[i] = normal(rng) / std::sqrt(static_cast<double>(c.d_model));
    p.stop_embedding = Tensor::parameter(std::move(stop));
  }
}

std::vector<std::pair<std::string, Tensor>> PTAModel::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  const auto& p = params_;
  out.emplace_back("word_embedding", p.word_embedding);
  out.emplace_back("instruction.proj.w", p.instruction_proj.w);
  out.emplace_back("instruction.proj.b", p.instruction_proj.b);
  add_ln(out, "instruction.proj_norm", p.instruction_proj_norm);
  for (std::size_t b = 0; b < p.instruction_blocks.size(); ++b) {
    add_block(out, "instruction.block" + std::to_string(b), p.instruction_blocks[b]);
  }
  out.emplace_back("image.proj.w", p.image_proj.w);
  out.emplace_back("image.proj.b", p.image_proj.b);
  add_ln(out, "image.proj_norm", p.image_proj_norm);
  for (std::size_t b = 0; b < p.image_blocks.size(); ++b) {
    add_block(out, "image.block" + std::to_string(b), p.image_blocks[b]);
  }
  out.emplace_back("decoder.action_embedding", p.action_embedding);
  add_mh(out, "decoder.history_attn", p.history_attn);
  add_ln(out, "decoder.history_norm", p.history_norm);
  add_mh(out, "decoder.text_attn", p.text_attn);
  add_ln(out, "decoder.text_norm", p.text_norm);
  add_mh(out, "decoder.image_attn", p.image_attn);
  add_ln(out, "decoder.image_norm", p.image_norm);
  out.emplace_back("decoder.fusion.w", p.fusion_w);
  out.emplace_back("decoder.fusion.b", p.fusion_b);
  if (p.low_w.defined()) {
    out.emplace_back("head.low.w", p.low_w);
    out.emplace_back("head.low.b", p.low_b);
  }
  if (p.state_w.defined()) {
    out.emplace_back("head.high.state_w", p.state_w);
    out.emplace_back("head.high.state_b", p.state_b);
    out.emplace_back("head.high.view_w", p.view_w);
    out.emplace_back("head.high.view_b", p.view_b);
    out.emplace_back("head.high.stop", p.stop_embedding);
  }
  return out;
}

std::vector<Tensor> PTAModel::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

void PTAModel::zero_grad() {
  for (auto& t : parameters()) t.zero_grad();
}

std::size_t PTAModel::parameter_count() const {
  std::size_t n = 0;
  for (auto& t : parameters()) n += static_cast<std::size_t>(t.value().size());
  return n;
}

std::vector<Matrix> PTAModel::snapshot() const {
  std::vector<Matrix> out;
  for (auto& t : parameters()) out.push_back(t.value());
  return out;
}

void PTAModel::restore(const std::vector<Matrix>& values) {
  auto params = parameters();
  if (values.size() != params.size()) throw ContractError("restore: parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (values[i].rows() != params[i].rows() || values[i].cols() != params[i].cols()) {
      throw DimensionError("restore: shape mismatch for parameter " + std::to_string(i));
    }
    params[i].mutable_value() = values[i];
  }
}

// ---- forward -------------------------------------------------------------------

InstructionEncoding encode_instruction(const PTAModel& model, std::span<const int> tokens,
                                       const ForwardContext& ctx) {
  ++model.counters().encode_instruction;
  const auto& c = model.config();
  const auto& p = model.params();
  std::vector<int> kept = filter_stop_words(tokens);
  if (kept.empty()) throw InstructionError("encode_instruction: no tokens left after stop-word filtering");

  Tensor x = embedding_lookup(kept, p.word_embedding);
  x = project_input(p.instruction_proj, p.instruction_proj_norm, x);
  x = add(x, Tensor::constant(positional_encodings(static_cast<Index>(kept.size()), c.d_model)));
  for (const auto& block : p.instruction_blocks) {
    x = residual_norm_block(
        [&](const Tensor& in) { return multi_head_attention(block.self_attn, in, in, in); }, x,
        block.self_norm, ctx);
    x = residual_norm_block([&](const Tensor& in) { return feed_forward(block.ff, in); }, x,
                            block.ff_norm, ctx);
  }

  InstructionEncoding enc;
  enc.encoded = x;
  enc.n_kept = static_cast<int>(kept.size());
  if (!c.ablation.no_early_fusion) {
    for (const auto& block : p.image_blocks) enc.image_memory.push_back(project_memory(block.cross_attn, x));
  }
  if (!c.ablation.no_text_branch) enc.decoder_memory = project_memory(p.text_attn, x);
  return enc;
}

VisualEncoding encode_observation(const PTAModel& model, const Matrix& observation,
                                  const InstructionEncoding& instruction, const ForwardContext& ctx) {
  ++model.counters().encode_observation;
  const auto& c = model.config();
  const auto& p = model.params();
  if (observation.rows() != c.view_count) {
    throw ContractError("encode_observation: expected " + std::to_string(c.view_count) +
                        " views, got " + std::to_string(observation.rows()));
  }
  if (observation.cols() != c.d_feat + 3) {
    throw DimensionError("encode_observation: views must have width d_feat + 3 = " +
                         std::to_string(c.d_feat + 3) + ", got " + std::to_string(observation.cols()));
  }
  Tensor x = project_input(p.image_proj, p.image_proj_norm, Tensor::constant(observation));
  for (std::size_t b = 0; b < p.image_blocks.size(); ++b) {
    const auto& block = p.image_blocks[b];
    x = residual_norm_block(
        [&](const Tensor& in) { return multi_head_attention(block.self_attn, in, in, in); }, x,
        block.self_norm, ctx);
    if (!c.ablation.no_early_fusion) {
      x = residual_norm_block(
          [&](const Tensor& in) {
            return multi_head_attention(block.cross_attn, in, instruction.image_memory.at(b));
          },
          x, block.cross_norm, ctx);
    }
    x = residual_norm_block([&](const Tensor& in) { return feed_forward(block.ff, in); }, x,
                            block.ff_norm, ctx);
  }
  return {x};
}

namespace {

// History as fed to the decoder: ids plus the positions they are encoded at.
Tensor embed_history(const PTAModel& model, std::span<const int> history) {
  const auto& c = model.config();
  std::span<const int> used = history;
  if (c.ablation.last_action_only) used = history.last(1);
  for (int id : used) {
    if (id < 0 || id > kStartAction) throw IndexError("decoder: history action id " + std::to_string(id) + " out of range");
  }
  Tensor e = embedding_lookup(used, model.params().action_embedding);
  return add(e, Tensor::constant(positional_encodings(static_cast<Index>(used.size()), c.d_model)));
}

// Decoder tail shared by the full and last-row paths: both cross-attention
// branches on the attended history rows, then the fusion projection.
Tensor fuse(const PTAModel& model, const Tensor& attended, const InstructionEncoding& instruction,
            const VisualEncoding& visual, const ForwardContext& ctx) {
  const auto& c = model.config();
  const auto& p = model.params();
  Tensor zeros = Tensor::constant(Matrix::Zero(attended.rows(), c.d_model));
  Tensor text = zeros, image = zeros;
  if (!c.ablation.no_text_branch) {
    text = residual_norm_block(
        [&](const Tensor& in) { return multi_head_attention(p.text_attn, in, instruction.decoder_memory); },
        attended, p.text_norm, ctx);
  }
  if (!c.ablation.no_image_branch) {
    const ProjectedMemory memory = project_memory(p.image_attn, visual.encoded);
    image = residual_norm_block(
        [&](const Tensor& in) { return multi_head_attention(p.image_attn, in, memory); }, attended,
        p.image_norm, ctx);
  }
  return add_row(matmul(concat(text, image, 1), p.fusion_w), p.fusion_b);
}

}  // namespace

Tensor decode_state(const PTAModel& model, std::span<const int> history,
                    const InstructionEncoding& instruction, const VisualEncoding& visual,
                    const ForwardContext& ctx) {
  ++model.counters().decode_state;
  if (history.empty()) throw ContractError("decode_state: history must contain <start>");
  const auto& p = model.params();
  Tensor embedded = embed_history(model, history);
  // Under the causal mask the last row attends to every position, so only
  // that query is needed.
  Tensor last = slice_rows(embedded, embedded.rows() - 1, 1);
  Tensor attended = residual_norm_block(
      [&](const Tensor& in) { return multi_head_attention(p.history_attn, in, embedded, embedded); },
      last, p.history_norm, ctx);
  return fuse(model, attended, instruction, visual, ctx);
}

Tensor decode_states(const PTAModel& model, std::span<const int> history,
                     const InstructionEncoding& instruction, const VisualEncoding& visual,
                     const ForwardContext& ctx) {
  ++model.counters().decode_state;
  if (history.empty()) throw ContractError("decode_states: history must contain <start>");
  const auto& p = model.params();
  Tensor embedded = embed_history(model, history);
  const Matrix mask = causal_mask(embedded.rows());
  Tensor attended = residual_norm_block(
      [&](const Tensor& in) { return multi_head_attention(p.history_attn, in, in, in, &mask); },
      embedded, p.history_norm, ctx);
  return fuse(model, attended, instruction, visual, ctx);
}

Tensor low_logits(const PTAModel& model, const Tensor& state) {
  const auto& p = model.params();
  if (!p.low_w.defined()) throw ConfigError("model has no low-level head");
  return add_row(matmul(state, p.low_w), p.low_b);
}

Tensor select_low(const PTAModel& model, const Tensor& state) {
  ++model.counters().select;
  return softmax(low_logits(model, state), 1);
}

Tensor high_logits(const PTAModel& model, const Tensor& state, const Matrix& candidates) {
  const auto& p = model.params();
  if (!p.state_w.defined()) throw ConfigError("model has no high-level head");
  Tensor s = add_row(matmul(state, p.state_w), p.state_b);
  Tensor keys = p.stop_embedding;
  if (candidates.rows() > 0) {
    if (candidates.cols() != model.config().d_feat + 3) {
      throw DimensionError("high_logits: candidates must have width d_feat + 3");
    }
    Tensor g = relu(add_row(matmul(Tensor::constant(candidates), p.view_w), p.view_b));
    keys = concat(g, p.stop_embedding, 0);
  }
  return matmul_nt(s, keys);
}

Tensor select_high(const PTAModel& model, const Tensor& state, const Matrix& candidates) {
  ++model.counters().select;
  return softmax(high_logits(model, state, candidates), 1);
}

int act(const RowVector& probabilities, ActMode mode, std::mt19937_64& rng) {
  if (probabilities.size() == 0) throw ContractError("act: empty distribution");
  if (mode == ActMode::kEval) {
    Index best = 0;
    for (Index i = 1; i < probabilities.size(); ++i) {
      if (probabilities(i) > probabilities(best)) best = i;
    }
    return static_cast<int>(best);
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = unit(rng) * probabilities.sum();
  double acc = 0.0;
  for (Index i = 0; i < probabilities.size(); ++i) {
    acc += probabilities(i);
    if (u < acc) return static_cast<int>(i);
  }
  // Rounding left u at the very top; take the last nonzero entry.
  for (Index i = probabilities.size() - 1; i >= 0; --i) {
    if (probabilities(i) > 0.0) return static_cast<int>(i);
  }
  return 0;
}

}  // namespace pta
