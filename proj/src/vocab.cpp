#include "pta/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>
#include <unordered_map>

#include "pta/errors.hpp"

namespace pta {

namespace {

// Order is part of the on-disk format. Function-local so lookups work from
// other translation units' static initializers.
const std::vector<std::string>& words() {
  static const std::vector<std::string> list = {
    // filler words (removed before encoding)
    "<pad>", "<unk>", "the", "and", "then", "to", "go", "turn", "look", "walk", "through",
    "doorway", "o'clock", "there", "now", "next", "finally", "toward", "step", "your", "face",
    "a", "of", "at", "please", "after", "that",
    // facing, relative to where the current leg began
    "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven",
    // legs
    "first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth",
    // remaining verbs and directions
    "up", "down", "stop", "wait", "left", "right", "forward", "ahead",
    // landmark classes
    "kitchen", "bedroom", "bathroom", "hallway", "staircase", "office", "garden", "lobby",
    "closet", "balcony"};
  return list;
}

constexpr int kFirstClock = 27;
constexpr int kFirstOrdinal = 38;
constexpr int kNumOrdinals = 8;
constexpr int kUp = 46;
constexpr int kDown = 47;
constexpr int kStop = 48;
constexpr int kWait = 49;
constexpr int kFirstLandmark = 54;

const std::unordered_map<std::string, int>& index() {
  static const std::unordered_map<std::string, int> map = [] {
    std::unordered_map<std::string, int> m;
    for (int i = 0; i < static_cast<int>(words().size()); ++i) m.emplace(words()[i], i);
    return m;
  }();
  return map;
}

}  // namespace

const std::vector<std::string>& vocabulary() { return words(); }
int vocab_size() { return static_cast<int>(words().size()); }

int token_id(std::string_view word) {
  auto it = index().find(std::string(word));
  return it == index().end() ? kUnknownToken : it->second;
}

const std::string& token_word(int id) {
  static const std::string unk = "<unk>";
  if (id < 0 || id >= vocab_size()) return unk;
  return words()[static_cast<std::size_t>(id)];
}

bool is_stop_word(int id) { return id == kPadToken || (id >= 2 && id < kFirstClock); }

std::vector<int> filter_stop_words(std::span<const int> tokens) {
  std::vector<int> kept;
  for (int t : tokens) {
    if (!is_stop_word(t)) kept.push_back(t);
  }
  return kept;
}

std::vector<int> tokenize(std::string_view text) {
  std::vector<int> ids;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) ids.push_back(token_id(word));
    word.clear();
  };
  for (char raw : text) {
    const auto c = static_cast<unsigned char>(raw);
    if (std::isspace(c)) {
      flush();
    } else if (std::isalnum(c) || c == '\'') {
      word.push_back(static_cast<char>(std::tolower(c)));
    } else if (c == '<' || c == '>') {
      word.push_back(static_cast<char>(c));
    }
    // other punctuation is dropped
  }
  flush();
  return ids;
}

std::string detokenize(std::span<const int> tokens) {
  std::ostringstream os;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) os << ' ';
    os << token_word(tokens[i]);
  }
  return os.str();
}

int clock_token(int sectors) {
  const int s = ((sectors % 12) + 12) % 12;
  if (s == 0) throw ContractError("clock_token: no clock word for a full turn");
  return kFirstClock + s - 1;
}

int ordinal_token(int hop) {
  return kFirstOrdinal + std::clamp(hop, 1, kNumOrdinals) - 1;
}

bool is_forward_token(int id) { return id >= kFirstOrdinal && id < kFirstOrdinal + kNumOrdinals; }

int landmark_token(int cls) {
  if (cls < 0 || cls >= kNumLandmarks) throw IndexError("landmark_token: class " + std::to_string(cls) + " out of range");
  return kFirstLandmark + cls;
}

bool is_landmark_token(int id) { return id >= kFirstLandmark && id < kFirstLandmark + kNumLandmarks; }

std::optional<LowAction> token_action(int id) {
  if (id >= kFirstClock && id < kFirstClock + 11) {
    const int sectors = id - kFirstClock + 1;
    return sectors <= 6 ? LowAction::kTurnRight : LowAction::kTurnLeft;
  }
  if (is_forward_token(id) || id == token_id("forward") || id == token_id("ahead")) {
    return LowAction::kStepForward;
  }
  if (id == kUp) return LowAction::kTiltUp;
  if (id == kDown) return LowAction::kTiltDown;
  if (id == kStop || id == kWait) return LowAction::kEndEpisode;
  if (id == token_id("left")) return LowAction::kTurnLeft;
  if (id == token_id("right")) return LowAction::kTurnRight;
  return std::nullopt;
}

std::vector<LowAction> instruction_actions(std::span<const int> tokens) {
  std::vector<LowAction> actions;
  int facing = 0;  // sectors turned since the last forward step
  for (int t : filter_stop_words(tokens)) {
    if (t >= kFirstClock && t < kFirstClock + 11) {
      // Clock words name the facing relative to the start of the leg; reach
      // it with the fewest turns, right on ties.
      const int want = t - kFirstClock + 1;
      const int right = ((want - facing) % 12 + 12) % 12;
      const bool go_right = right <= 12 - right;
      for (int k = 0; k < (go_right ? right : 12 - right); ++k) {
        actions.push_back(go_right ? LowAction::kTurnRight : LowAction::kTurnLeft);
      }
      facing = want;
      continue;
    }
    if (auto a = token_action(t)) {
      actions.push_back(*a);
      if (*a == LowAction::kStepForward) facing = 0;
      if (*a == LowAction::kTurnRight) facing = (facing + 1) % 12;
      if (*a == LowAction::kTurnLeft) facing = (facing + 11) % 12;
    }
  }
  return actions;
}

}  // namespace pta
