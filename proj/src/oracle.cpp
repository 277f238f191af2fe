#include "avnav/oracle.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "json.hpp"

namespace avnav {

using nlohmann::json;

int Vocabulary::id(const std::string& word) const {
  for (size_t i = 0; i < words.size(); ++i) {
    if (words[i] == word) return static_cast<int>(i);
  }
  return kUnk;
}

const std::vector<std::string>& room_words() {
  static const std::vector<std::string> kWords = {"hallway", "kitchen", "bedroom", "office",
                                                  "lobby",   "studio",  "pantry",  "den"};
  return kWords;
}

const std::vector<std::string>& object_words() {
  static const std::vector<std::string> kWords = {
      "piano",  "phone",   "sink",    "shower", "fan",    "clock",     "drum",
      "kettle", "doorbell", "speaker", "tv",     "printer", "fridge",    "washer",
      "guitar", "radio",   "vacuum",  "microwave", "bell", "fountain",  "alarm"};
  return kWords;
}

const std::string& room_word(int room_label) {
  const auto& words = room_words();
  return words[static_cast<size_t>(room_label) % words.size()];
}

const std::string& object_word(int category) {
  const auto& words = object_words();
  return words[static_cast<size_t>(category) % words.size()];
}

static std::vector<std::string> split_words(const std::string& phrase) {
  std::vector<std::string> out;
  std::istringstream ss(phrase);
  std::string w;
  while (ss >> w) out.push_back(w);
  return out;
}

Vocabulary default_vocabulary() {
  Vocabulary vocab;
  vocab.words = {"<pad>", "<unk>"};
  auto add = [&vocab](const std::string& w) {
    if (std::find(vocab.words.begin(), vocab.words.end(), w) == vocab.words.end()) {
      vocab.words.push_back(w);
    }
  };
  SpeakerConfig defaults;
  for (const auto& table : {defaults.forward_phrases, defaults.left_phrases,
                            defaults.right_phrases, defaults.room_intros,
                            defaults.object_intros}) {
    for (const auto& phrase : table) {
      for (const auto& w : split_words(phrase)) add(w);
    }
  }
  for (const auto& w : {"two", "three", "four", "steps", "times", "twice", "stop"}) add(w);
  for (const auto& w : room_words()) add(w);
  for (const auto& w : object_words()) add(w);
  return vocab;
}

std::string vocabulary_to_json(const Vocabulary& vocab) { return json(vocab.words).dump(); }

Vocabulary vocabulary_from_json(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_array()) throw parse_error("vocabulary JSON must be an array");
  Vocabulary vocab;
  vocab.words = j.get<std::vector<std::string>>();
  return vocab;
}

std::string instruction_to_string(const Instruction& instr, const Vocabulary& vocab) {
  std::string out;
  for (int t : instr.tokens) {
    if (!out.empty()) out += ' ';
    out += vocab.word(t);
  }
  return out;
}

std::vector<Action> Segment::actions() const {
  std::vector<Action> out;
  out.reserve(pairs.size());
  for (const auto& [pose, action] : pairs) out.push_back(action);
  return out;
}

std::string speaker_config_to_json(const SpeakerConfig& cfg) {
  json j;
  j["forward_phrases"] = cfg.forward_phrases;
  j["left_phrases"] = cfg.left_phrases;
  j["right_phrases"] = cfg.right_phrases;
  j["room_intros"] = cfg.room_intros;
  j["object_intros"] = cfg.object_intros;
  j["p_land"] = cfg.p_land;
  j["p_drop"] = cfg.p_drop;
  j["rng_seed"] = cfg.rng_seed;
  j["max_tokens"] = cfg.max_tokens;
  return j.dump();
}

SpeakerConfig speaker_config_from_json(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw parse_error("speaker config JSON is malformed");
  SpeakerConfig cfg;
  if (j.contains("forward_phrases")) cfg.forward_phrases = j["forward_phrases"].get<std::vector<std::string>>();
  if (j.contains("left_phrases")) cfg.left_phrases = j["left_phrases"].get<std::vector<std::string>>();
  if (j.contains("right_phrases")) cfg.right_phrases = j["right_phrases"].get<std::vector<std::string>>();
  if (j.contains("room_intros")) cfg.room_intros = j["room_intros"].get<std::vector<std::string>>();
  if (j.contains("object_intros")) cfg.object_intros = j["object_intros"].get<std::vector<std::string>>();
  cfg.p_land = j.value("p_land", cfg.p_land);
  cfg.p_drop = j.value("p_drop", cfg.p_drop);
  cfg.rng_seed = j.value("rng_seed", cfg.rng_seed);
  cfg.max_tokens = j.value("max_tokens", cfg.max_tokens);
  if (cfg.p_land < 0 || cfg.p_land > 1 || cfg.p_drop < 0 || cfg.p_drop > 1) {
    throw config_error("speaker probabilities must lie in [0, 1]");
  }
  return cfg;
}

const char* to_string(FeedbackMode m) {
  return m == FeedbackMode::Language ? "language" : "gt_actions";
}

FeedbackMode feedback_mode_from_string(const std::string& s) {
  if (s == "language") return FeedbackMode::Language;
  if (s == "gt_actions") return FeedbackMode::GtActions;
  throw config_error("unknown feedback mode: " + s);
}

Segment extract_segment(const Scene& scene, const Pose& pose, Cell goal, int n) {
  if (n < 1) throw input_error("segment length must be >= 1");
  Segment segment;
  if (pose.cell() == goal) return segment;
  auto path = shortest_action_path(scene, pose, goal);
  Pose p = pose;
  for (size_t i = 0; i < path.size() && static_cast<int>(i) < n; ++i) {
    segment.pairs.emplace_back(p, path[i]);
    p = step(scene, p, path[i]);
  }
  return segment;
}

namespace {

struct Clause {
  Action action;
  int count;
  std::vector<Cell> cells;  // traversed while executing this clause
};

std::vector<Clause> run_length_clauses(const Scene& scene, const Segment& segment) {
  std::vector<Clause> clauses;
  for (const auto& [pose, action] : segment.pairs) {
    if (!clauses.empty() && clauses.back().action == action) {
      ++clauses.back().count;
    } else {
      clauses.push_back({action, 1, {}});
    }
    clauses.back().cells.push_back(pose.cell());
    Pose next = step(scene, pose, action);
    clauses.back().cells.push_back(next.cell());
  }
  return clauses;
}

const std::string& count_word(int n) {
  static const std::string kTwo = "two", kThree = "three", kFour = "four";
  switch (n) {
    case 2: return kTwo;
    case 3: return kThree;
    default: return kFour;
  }
}

int count_from_word(const std::string& w) {
  if (w == "two") return 2;
  if (w == "three") return 3;
  if (w == "four") return 4;
  return -1;
}

}  // namespace

Instruction speak(const Segment& segment, const Scene& scene, const SpeakerConfig& cfg,
                  const Vocabulary& vocab) {
  if (segment.empty()) throw input_error("speak: segment is empty");
  Rng rng(mix_seed(cfg.rng_seed, 0x5feaC));
  std::uniform_real_distribution<double> coin(0.0, 1.0);

  std::vector<Clause> clauses = run_length_clauses(scene, segment);

  // Clause dropout, never dropping everything.
  std::vector<char> keep(clauses.size(), 1);
  for (size_t i = 0; i < clauses.size(); ++i) keep[i] = coin(rng) >= cfg.p_drop;
  if (std::find(keep.begin(), keep.end(), 1) == keep.end()) keep[0] = 1;

  struct Rendered {
    std::vector<std::string> base;
    std::vector<std::string> landmark;
  };
  std::vector<Rendered> rendered;
  for (size_t i = 0; i < clauses.size(); ++i) {
    if (!keep[i]) continue;
    const Clause& c = clauses[i];
    const std::vector<std::string>* table = nullptr;
    switch (c.action) {
      case Action::MoveForward: table = &cfg.forward_phrases; break;
      case Action::TurnLeft: table = &cfg.left_phrases; break;
      case Action::TurnRight: table = &cfg.right_phrases; break;
      case Action::Stop: continue;
    }
    std::uniform_int_distribution<size_t> vpick(0, table->size() - 1);
    Rendered r;
    r.base = split_words((*table)[vpick(rng)]);
    if (c.count >= 2) {
      if (c.action == Action::MoveForward) {
        r.base.push_back(count_word(c.count));
        r.base.push_back("steps");
      } else if (c.count == 2) {
        r.base.push_back("twice");
      } else {
        r.base.push_back(count_word(c.count));
        r.base.push_back("times");
      }
    }
    if (coin(rng) < cfg.p_land) {
      // Candidates from cells the clause traverses: room labels always,
      // plus objects sitting on or next to those cells.
      std::set<int> labels;
      std::set<int> categories;
      for (Cell cell : c.cells) {
        labels.insert(scene.label(cell.x, cell.y));
        const int dx[5] = {0, 0, 1, 0, -1};
        const int dy[5] = {0, -1, 0, 1, 0};
        for (int k = 0; k < 5; ++k) {
          if (const SemanticObject* o = scene.object_at(cell.x + dx[k], cell.y + dy[k])) {
            categories.insert(o->category);
          }
        }
      }
      struct Candidate {
        bool is_room;
        std::string word;
      };
      std::vector<Candidate> pool;
      for (int label : labels) pool.push_back({true, room_word(label)});
      for (int cat : categories) pool.push_back({false, object_word(cat)});
      std::uniform_int_distribution<size_t> cpick(0, pool.size() - 1);
      const Candidate& chosen = pool[cpick(rng)];
      const auto& intros = chosen.is_room ? cfg.room_intros : cfg.object_intros;
      std::uniform_int_distribution<size_t> ipick(0, intros.size() - 1);
      r.landmark = split_words(intros[ipick(rng)]);
      r.landmark.push_back(chosen.word);
    }
    rendered.push_back(std::move(r));
  }

  auto total_len = [&rendered]() {
    size_t n = 0;
    for (const auto& r : rendered) n += r.base.size() + r.landmark.size();
    return static_cast<int>(n);
  };
  // Landmarks are optional color; drop from the back until the budget fits.
  for (auto it = rendered.rbegin(); it != rendered.rend() && total_len() > cfg.max_tokens; ++it) {
    it->landmark.clear();
  }

  Instruction instr;
  for (const auto& r : rendered) {
    for (const auto& w : r.base) instr.tokens.push_back(vocab.id(w));
    for (const auto& w : r.landmark) instr.tokens.push_back(vocab.id(w));
  }
  return instr;
}

std::vector<Action> reference_parse(const Instruction& instr, const Vocabulary& vocab,
                                    const SpeakerConfig& cfg) {
  std::vector<std::string> words;
  words.reserve(instr.tokens.size());
  for (int t : instr.tokens) words.push_back(vocab.word(t));

  auto match_phrase = [&words](size_t pos, const std::vector<std::string>& table) {
    for (const auto& phrase : table) {
      auto pw = split_words(phrase);
      if (pos + pw.size() > words.size()) continue;
      if (std::equal(pw.begin(), pw.end(), words.begin() + static_cast<long>(pos))) {
        return pw.size();
      }
    }
    return static_cast<size_t>(0);
  };

  std::set<std::string> intro_heads;
  for (const auto& table : {cfg.room_intros, cfg.object_intros}) {
    for (const auto& phrase : table) intro_heads.insert(split_words(phrase).front());
  }

  std::vector<Action> actions;
  size_t pos = 0;
  while (pos < words.size()) {
    if (words[pos] == "stop") {
      actions.push_back(Action::Stop);
      ++pos;
      continue;
    }
    Action action;
    size_t used = match_phrase(pos, cfg.forward_phrases);
    if (used > 0) {
      action = Action::MoveForward;
    } else if ((used = match_phrase(pos, cfg.left_phrases)) > 0) {
      action = Action::TurnLeft;
    } else if ((used = match_phrase(pos, cfg.right_phrases)) > 0) {
      action = Action::TurnRight;
    } else {
      throw parse_error("unparseable clause at token " + std::to_string(pos) + ": " + words[pos]);
    }
    pos += used;
    int count = 1;
    if (pos < words.size()) {
      if (words[pos] == "twice") {
        count = 2;
        ++pos;
      } else if (int n = count_from_word(words[pos]);
                 n > 0 && pos + 1 < words.size() &&
                 (words[pos + 1] == "steps" || words[pos + 1] == "times")) {
        count = n;
        pos += 2;
      }
    }
    if (pos < words.size() && intro_heads.count(words[pos])) {
      // Landmark phrase: intro words then one landmark word.
      size_t used_intro = match_phrase(pos, cfg.room_intros);
      if (used_intro == 0) used_intro = match_phrase(pos, cfg.object_intros);
      if (used_intro == 0 || pos + used_intro >= words.size()) {
        throw parse_error("dangling landmark phrase at token " + std::to_string(pos));
      }
      pos += used_intro + 1;
    }
    for (int i = 0; i < count; ++i) actions.push_back(action);
  }
  if (actions.empty()) throw parse_error("instruction contains no clause");
  return actions;
}

Feedback answer_query(const Scene& scene, const Pose& pose, Cell goal, FeedbackMode mode,
                      const SpeakerConfig& cfg, const Vocabulary& vocab, int segment_n, int nu) {
  Feedback fb;
  if (mode == FeedbackMode::GtActions) {
    fb.is_language = false;
    auto path = pose.cell() == goal ? std::vector<Action>{} : shortest_action_path(scene, pose, goal);
    for (int i = 0; i < nu; ++i) {
      fb.actions.push_back(i < static_cast<int>(path.size()) ? path[static_cast<size_t>(i)]
                                                             : Action::Stop);
    }
    return fb;
  }
  fb.is_language = true;
  Segment segment = extract_segment(scene, pose, goal, segment_n);
  if (segment.empty()) {
    fb.instruction.tokens.push_back(vocab.id("stop"));  // already there
  } else {
    fb.instruction = speak(segment, scene, cfg, vocab);
  }
  return fb;
}

}  // namespace avnav
