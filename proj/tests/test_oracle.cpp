#include "avnav/oracle.hpp"

#include "doctest.h"

using namespace avnav;

namespace {

Scene open_room(int w, int h) {
  Scene scene;
  scene.width = w;
  scene.height = h;
  scene.room_label.assign(static_cast<size_t>(w) * h, -1);
  for (int y = 1; y < h - 1; ++y) {
    for (int x = 1; x < w - 1; ++x) scene.room_label[static_cast<size_t>(y) * w + x] = 0;
  }
  scene.num_rooms = 1;
  return scene;
}

SpeakerConfig quiet_config(std::uint64_t seed = 0) {
  SpeakerConfig cfg;
  cfg.p_land = 0.0;
  cfg.p_drop = 0.0;
  cfg.rng_seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("extract_segment basics") {
  Scene scene = open_room(12, 12);
  Pose p{5, 5, Heading::East};
  CHECK(extract_segment(scene, p, {5, 5}, 4).empty());

  Segment adjacent = extract_segment(scene, p, {6, 5}, 4);
  REQUIRE(adjacent.size() == 1);
  CHECK(adjacent.pairs[0].first == p);
  CHECK(adjacent.pairs[0].second == Action::MoveForward);

  Segment corridor = extract_segment(scene, p, {10, 5}, 4);
  CHECK(corridor.size() == 4);  // truncated to n
}

TEST_CASE("segment execution reduces geodesic distance by its forward count") {
  Rng rng(31);
  SceneParams params;
  params.width = 16;
  params.height = 16;
  params.target_rooms = 4;
  params.min_room_extent = 3;
  params.categories = 5;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Scene scene = generate_scene(seed + 7, params);
    std::vector<Cell> cells;
    for (int y = 0; y < scene.height; ++y) {
      for (int x = 0; x < scene.width; ++x) {
        if (scene.navigable(x, y)) cells.push_back({x, y});
      }
    }
    std::uniform_int_distribution<size_t> pick(0, cells.size() - 1);
    std::uniform_int_distribution<int> hpick(0, 3);
    for (int trial = 0; trial < 30; ++trial) {
      Cell sc = cells[pick(rng)];
      Cell goal = cells[pick(rng)];
      if (sc == goal) continue;
      Pose pose{sc.x, sc.y, static_cast<Heading>(hpick(rng))};
      Segment segment = extract_segment(scene, pose, goal, 4);
      double d0 = geodesic_distance(scene, pose.cell(), goal);
      Pose p = pose;
      int forwards = 0;
      double prev = d0;
      for (const auto& [spose, action] : segment.pairs) {
        p = step(scene, p, action);
        if (action == Action::MoveForward) ++forwards;
        double now = geodesic_distance(scene, p.cell(), goal);
        CHECK(now <= prev);  // no prefix increases the distance
        prev = now;
      }
      CHECK(geodesic_distance(scene, p.cell(), goal) == doctest::Approx(d0 - forwards));
    }
  }
}

TEST_CASE("speak renders run-length clauses with counts") {
  Scene scene = open_room(12, 12);
  Vocabulary vocab = default_vocabulary();
  SpeakerConfig cfg = quiet_config();
  // Canonical zero-noise rendering of [F, F, TR, F]; counts are spelled out
  // so the parse stays exact.
  Segment segment;
  Pose p{3, 5, Heading::East};
  segment.pairs = {{p, Action::MoveForward},
                   {Pose{4, 5, Heading::East}, Action::MoveForward},
                   {Pose{5, 5, Heading::East}, Action::TurnRight},
                   {Pose{5, 5, Heading::South}, Action::MoveForward}};
  Instruction instr = speak(segment, scene, cfg, vocab);
  auto actions = reference_parse(instr, vocab, cfg);
  REQUIRE(actions.size() == 4);
  CHECK(actions[0] == Action::MoveForward);
  CHECK(actions[1] == Action::MoveForward);
  CHECK(actions[2] == Action::TurnRight);
  CHECK(actions[3] == Action::MoveForward);
  std::string text = instruction_to_string(instr, vocab);
  CHECK(text.find("steps") != std::string::npos);  // the count word survives

  Instruction again = speak(segment, scene, cfg, vocab);
  CHECK(instr.tokens == again.tokens);  // fixed rng, identical output
}

TEST_CASE("speak grounds landmarks in traversed rooms") {
  Scene scene = open_room(12, 12);  // single room, label 0 -> "hallway"
  Vocabulary vocab = default_vocabulary();
  SpeakerConfig cfg = quiet_config(3);
  cfg.p_land = 1.0;
  Segment segment;
  segment.pairs = {{Pose{3, 5, Heading::East}, Action::MoveForward}};
  Instruction instr = speak(segment, scene, cfg, vocab);
  std::string text = instruction_to_string(instr, vocab);
  CHECK(text.find("hallway") != std::string::npos);
}

TEST_CASE("speak respects the token budget") {
  Scene scene = open_room(12, 12);
  Vocabulary vocab = default_vocabulary();
  Rng rng(8);
  std::uniform_int_distribution<int> hpick(0, 3);
  std::vector<Cell> cells;
  for (int y = 1; y < 11; ++y) {
    for (int x = 1; x < 11; ++x) cells.push_back({x, y});
  }
  std::uniform_int_distribution<size_t> pick(0, cells.size() - 1);
  for (int trial = 0; trial < 200; ++trial) {
    Cell sc = cells[pick(rng)];
    Cell goal = cells[pick(rng)];
    if (sc == goal) continue;
    Pose pose{sc.x, sc.y, static_cast<Heading>(hpick(rng))};
    Segment segment = extract_segment(scene, pose, goal, 4);
    SpeakerConfig cfg;
    cfg.p_land = 1.0;
    cfg.p_drop = 0.2;
    cfg.rng_seed = static_cast<std::uint64_t>(trial);
    Instruction instr = speak(segment, scene, cfg, vocab);
    CHECK(instr.size() <= cfg.max_tokens);
    CHECK(instr.size() >= 1);
    for (int t : instr.tokens) CHECK(t < vocab.size());
  }
}

TEST_CASE("speak errors on an empty segment") {
  Scene scene = open_room(12, 12);
  Vocabulary vocab = default_vocabulary();
  CHECK_THROWS_AS(speak(Segment{}, scene, quiet_config(), vocab), Error);
}

TEST_CASE("reference_parse inverts speak on 1000 random segments") {
  Vocabulary vocab = default_vocabulary();
  Rng rng(77);
  SceneParams params;
  params.width = 20;
  params.height = 20;
  params.target_rooms = 5;
  params.min_room_extent = 3;
  params.categories = 21;
  int done = 0;
  for (std::uint64_t seed = 0; done < 1000; ++seed) {
    Scene scene = generate_scene(seed + 100, params);
    std::vector<Cell> cells;
    for (int y = 0; y < scene.height; ++y) {
      for (int x = 0; x < scene.width; ++x) {
        if (scene.navigable(x, y)) cells.push_back({x, y});
      }
    }
    std::uniform_int_distribution<size_t> pick(0, cells.size() - 1);
    std::uniform_int_distribution<int> hpick(0, 3);
    for (int trial = 0; trial < 200 && done < 1000; ++trial) {
      Cell sc = cells[pick(rng)];
      Cell goal = cells[pick(rng)];
      if (sc == goal) continue;
      Pose pose{sc.x, sc.y, static_cast<Heading>(hpick(rng))};
      Segment segment = extract_segment(scene, pose, goal, 4);
      SpeakerConfig cfg;
      cfg.p_drop = 0.0;  // zero noise: exact inversion required
      cfg.p_land = (done % 2 == 0) ? 0.0 : 1.0;
      cfg.rng_seed = static_cast<std::uint64_t>(done);
      Instruction instr = speak(segment, scene, cfg, vocab);
      auto actions = reference_parse(instr, vocab, cfg);
      REQUIRE(actions == segment.actions());
      ++done;
    }
  }
  CHECK(done == 1000);
}

TEST_CASE("reference_parse handles single clauses and rejects junk") {
  Vocabulary vocab = default_vocabulary();
  SpeakerConfig cfg = quiet_config();
  Instruction turn_left;
  turn_left.tokens = {vocab.id("turn"), vocab.id("left")};
  auto actions = reference_parse(turn_left, vocab, cfg);
  REQUIRE(actions.size() == 1);
  CHECK(actions[0] == Action::TurnLeft);

  Instruction junk;
  junk.tokens = {vocab.id("the"), vocab.id("hallway")};
  CHECK_THROWS_AS(reference_parse(junk, vocab, cfg), Error);
}

TEST_CASE("answer_query modes") {
  Scene scene = open_room(12, 12);
  Vocabulary vocab = default_vocabulary();
  SpeakerConfig cfg = quiet_config();
  Pose p{3, 5, Heading::East};

  Feedback gt = answer_query(scene, p, {6, 5}, FeedbackMode::GtActions, cfg, vocab, 4, 3);
  REQUIRE(gt.actions.size() == 3);
  CHECK(gt.actions == std::vector<Action>{Action::MoveForward, Action::MoveForward,
                                          Action::MoveForward});

  Feedback near = answer_query(scene, p, {4, 5}, FeedbackMode::GtActions, cfg, vocab, 4, 3);
  CHECK(near.actions == std::vector<Action>{Action::MoveForward, Action::Stop, Action::Stop});

  Feedback lang = answer_query(scene, p, {6, 5}, FeedbackMode::Language, cfg, vocab, 4, 3);
  CHECK(lang.is_language);
  CHECK(!lang.instruction.empty());

  Feedback at_goal = answer_query(scene, p, {3, 5}, FeedbackMode::Language, cfg, vocab, 4, 3);
  CHECK(instruction_to_string(at_goal.instruction, vocab) == "stop");
}
