#pragma once

#include <string>
#include <vector>

#include "avnav/common.hpp"
#include "avnav/world.hpp"

namespace avnav {

// Dense token ids; 0 = PAD, 1 = UNK.
struct Vocabulary {
  std::vector<std::string> words;

  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  int id(const std::string& word) const;
  const std::string& word(int id) const { return words[static_cast<size_t>(id)]; }
  int size() const { return static_cast<int>(words.size()); }
};

Vocabulary default_vocabulary();
std::string vocabulary_to_json(const Vocabulary& vocab);
Vocabulary vocabulary_from_json(const std::string& text);

struct Instruction {
  std::vector<int> tokens;
  bool empty() const { return tokens.empty(); }
  int size() const { return static_cast<int>(tokens.size()); }
};

std::string instruction_to_string(const Instruction& instr, const Vocabulary& vocab);

struct Segment {
  std::vector<std::pair<Pose, Action>> pairs;
  bool empty() const { return pairs.empty(); }
  int size() const { return static_cast<int>(pairs.size()); }
  std::vector<Action> actions() const;
};

// Phrase tables are word sequences joined by spaces; the parser inverts them.
struct SpeakerConfig {
  std::vector<std::string> forward_phrases = {"walk forward", "go straight", "move ahead",
                                              "keep going", "proceed forward"};
  std::vector<std::string> left_phrases = {"turn left", "take a left", "rotate left",
                                           "veer left"};
  std::vector<std::string> right_phrases = {"turn right", "take a right", "rotate right",
                                            "veer right"};
  std::vector<std::string> room_intros = {"down the", "along the", "through the"};
  std::vector<std::string> object_intros = {"past the", "by the", "near the"};
  double p_land = 0.3;
  double p_drop = 0.1;
  std::uint64_t rng_seed = 0;
  int max_tokens = 12;
};

std::string speaker_config_to_json(const SpeakerConfig& cfg);
SpeakerConfig speaker_config_from_json(const std::string& text);

const std::vector<std::string>& room_words();
const std::vector<std::string>& object_words();
const std::string& room_word(int room_label);
const std::string& object_word(int category);

enum class FeedbackMode { Language, GtActions };
const char* to_string(FeedbackMode m);
FeedbackMode feedback_mode_from_string(const std::string& s);

struct Feedback {
  bool is_language = false;
  Instruction instruction;          // Language mode
  std::vector<Action> actions;      // GtActions mode, length nu (Stop padded)
};

// First n (pose, action) pairs of the shortest action path; empty when the
// agent already stands on the goal.
Segment extract_segment(const Scene& scene, const Pose& pose, Cell goal, int n);

// Run-length clauses rendered through the synonym tables; counts are spelled
// out so the mapping stays invertible. Landmarks ground each clause in a room
// or object seen along the traversed cells and are the first tokens dropped
// when the instruction would exceed max_tokens.
Instruction speak(const Segment& segment, const Scene& scene, const SpeakerConfig& cfg,
                  const Vocabulary& vocab);

// Exact inverse of the clause mapping (test oracle; requires p_drop = 0).
std::vector<Action> reference_parse(const Instruction& instr, const Vocabulary& vocab,
                                    const SpeakerConfig& cfg);

Feedback answer_query(const Scene& scene, const Pose& pose, Cell goal, FeedbackMode mode,
                      const SpeakerConfig& cfg, const Vocabulary& vocab, int segment_n, int nu);

}  // namespace avnav
