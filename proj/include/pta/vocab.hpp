#pragma once

// Fixed instruction vocabulary (version 2) and the filler-word list removed
// before encoding. Ids are stable: corpora written with this version can be
// reloaded bit-for-bit.

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pta {

inline constexpr int kVocabVersion = 2;
inline constexpr int kNumLandmarks = 10;

enum class LowAction : int {
  kTurnLeft = 0,
  kTurnRight = 1,
  kTiltUp = 2,
  kTiltDown = 3,
  kStepForward = 4,
  kEndEpisode = 5,
};
inline constexpr int kNumLowActions = 6;

const std::vector<std::string>& vocabulary();
int vocab_size();
int token_id(std::string_view word);  // <unk> for unknown words
const std::string& token_word(int id);

inline constexpr int kPadToken = 0;
inline constexpr int kUnknownToken = 1;

bool is_stop_word(int id);
std::vector<int> filter_stop_words(std::span<const int> tokens);

/// Lowercase, strip punctuation (apostrophes kept), split on whitespace,
/// map out-of-vocabulary words to <unk>.
std::vector<int> tokenize(std::string_view text);
std::string detokenize(std::span<const int> tokens);

/// Clock word for a relative facing of `sectors` x 30 degrees (1..11).
int clock_token(int sectors);
/// Ordinal word for the 1-based hop index; saturates at the last ordinal.
int ordinal_token(int hop);
bool is_forward_token(int id);
/// Word naming landmark class `cls` (0..kNumLandmarks-1).
int landmark_token(int cls);
bool is_landmark_token(int id);

/// The atomic action a content token verbalizes, if any.
std::optional<LowAction> token_action(int id);
/// Literal action verbs of an instruction, in order. A clock word expands to
/// the turns that reach its facing from the current one.
std::vector<LowAction> instruction_actions(std::span<const int> tokens);

}  // namespace pta
