#include <algorithm>
#include <set>

#include "avnav/world.hpp"
#include "doctest.h"

using namespace avnav;

namespace {

// All-pairs shortest paths, independent of the BFS in the library.
std::vector<std::vector<int>> floyd_warshall(const Scene& scene) {
  std::vector<Cell> cells;
  for (int y = 0; y < scene.height; ++y) {
    for (int x = 0; x < scene.width; ++x) {
      if (scene.navigable(x, y)) cells.push_back({x, y});
    }
  }
  const int n = static_cast<int>(cells.size());
  const int inf = 1 << 20;
  std::vector<std::vector<int>> d(static_cast<size_t>(n), std::vector<int>(static_cast<size_t>(n), inf));
  auto idx = [&cells](Cell c) {
    for (size_t i = 0; i < cells.size(); ++i) {
      if (cells[i] == c) return static_cast<int>(i);
    }
    return -1;
  };
  for (int i = 0; i < n; ++i) {
    d[i][i] = 0;
    Cell c = cells[static_cast<size_t>(i)];
    const int dx[4] = {0, 1, 0, -1};
    const int dy[4] = {-1, 0, 1, 0};
    for (int k = 0; k < 4; ++k) {
      Cell nb{c.x + dx[k], c.y + dy[k]};
      if (scene.navigable(nb)) d[i][static_cast<size_t>(idx(nb))] = 1;
    }
  }
  for (int k = 0; k < n; ++k) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
      }
    }
  }
  return d;
}

// Plain BFS over (cell, heading) states; counts minimal actions to the goal cell.
int bfs_action_steps(const Scene& scene, const Pose& start, Cell goal) {
  if (start.cell() == goal) return 0;
  std::set<std::tuple<int, int, int>> seen;
  std::vector<std::pair<Pose, int>> frontier{{start, 0}};
  seen.insert({start.x, start.y, static_cast<int>(start.heading)});
  size_t head = 0;
  while (head < frontier.size()) {
    auto [p, steps] = frontier[head++];
    for (Action a : {Action::MoveForward, Action::TurnLeft, Action::TurnRight}) {
      Pose q = step(scene, p, a);
      if (q == p) continue;
      if (q.cell() == goal) return steps + 1;
      auto key = std::make_tuple(q.x, q.y, static_cast<int>(q.heading));
      if (seen.insert(key).second) frontier.push_back({q, steps + 1});
    }
  }
  return -1;
}

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

}  // namespace

TEST_CASE("generate_scene produces one connected component") {
  SceneParams params;
  Scene scene = generate_scene(7, params);
  std::vector<Cell> nav;
  for (int y = 0; y < scene.height; ++y) {
    for (int x = 0; x < scene.width; ++x) {
      if (scene.navigable(x, y)) nav.push_back({x, y});
    }
  }
  REQUIRE(!nav.empty());
  auto field = distance_field(scene, nav.front());
  for (Cell c : nav) {
    CHECK(field[static_cast<size_t>(c.y) * scene.width + c.x] >= 0);
  }
  CHECK(scene.objects.size() == 21);
  for (const auto& o : scene.objects) CHECK(scene.navigable(o.cell));
  std::set<std::pair<int, int>> cells;
  for (const auto& o : scene.objects) cells.insert({o.cell.x, o.cell.y});
  CHECK(cells.size() == scene.objects.size());
}

TEST_CASE("generate_scene is deterministic and seed-sensitive") {
  SceneParams params;
  Scene a = generate_scene(7, params);
  Scene b = generate_scene(7, params);
  CHECK(scene_to_json(a) == scene_to_json(b));
  Scene c = generate_scene(8, params);
  CHECK(scene_to_json(a) != scene_to_json(c));
}

TEST_CASE("generate_scene rejects out-of-bounds params") {
  SceneParams params;
  params.width = 4;
  CHECK_THROWS_AS(generate_scene(1, params), Error);
  params.width = 65;
  CHECK_THROWS_AS(generate_scene(1, params), Error);
}

TEST_CASE("scene JSON round trip") {
  Scene a = generate_scene(21, SceneParams{});
  Scene b = scene_from_json(scene_to_json(a));
  CHECK(scene_to_json(a) == scene_to_json(b));
  CHECK_THROWS_AS(scene_from_json("{\"schema\":2}"), Error);
}

TEST_CASE("geodesic_distance basics") {
  Scene scene = open_room(10, 10);
  CHECK(geodesic_distance(scene, {2, 2}, {2, 2}) == 0.0);
  CHECK(geodesic_distance(scene, {2, 2}, {3, 2}) == 1.0);
  CHECK_THROWS_AS(geodesic_distance(scene, {0, 0}, {2, 2}), Error);
}

TEST_CASE("geodesic_distance matches Floyd-Warshall on random scenes") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    SceneParams params;
    params.width = 12;
    params.height = 12;
    params.target_rooms = 3;
    params.min_room_extent = 3;
    params.categories = 5;
    Scene scene = generate_scene(seed, params);
    auto oracle = floyd_warshall(scene);
    std::vector<Cell> cells;
    for (int y = 0; y < scene.height; ++y) {
      for (int x = 0; x < scene.width; ++x) {
        if (scene.navigable(x, y)) cells.push_back({x, y});
      }
    }
    Rng rng(seed + 99);
    std::uniform_int_distribution<size_t> pick(0, cells.size() - 1);
    for (int trial = 0; trial < 40; ++trial) {
      size_t i = pick(rng), j = pick(rng);
      double d = geodesic_distance(scene, cells[i], cells[j]);
      CHECK(d == static_cast<double>(oracle[i][j]));
      CHECK(d == geodesic_distance(scene, cells[j], cells[i]));  // symmetry
    }
  }
}

TEST_CASE("geodesic triangle inequality on sampled triples") {
  Scene scene = generate_scene(3, SceneParams{});
  std::vector<Cell> cells;
  for (int y = 0; y < scene.height; ++y) {
    for (int x = 0; x < scene.width; ++x) {
      if (scene.navigable(x, y)) cells.push_back({x, y});
    }
  }
  Rng rng(5);
  std::uniform_int_distribution<size_t> pick(0, cells.size() - 1);
  for (int trial = 0; trial < 50; ++trial) {
    Cell a = cells[pick(rng)], b = cells[pick(rng)], c = cells[pick(rng)];
    CHECK(geodesic_distance(scene, a, c) <=
          geodesic_distance(scene, a, b) + geodesic_distance(scene, b, c));
  }
}

TEST_CASE("step kinematics") {
  Scene scene = open_room(8, 8);
  Pose p{3, 3, Heading::North};
  CHECK(step(scene, p, Action::TurnRight) == Pose{3, 3, Heading::East});
  CHECK(step(scene, p, Action::Stop) == p);
  Pose q = p;
  for (int i = 0; i < 4; ++i) q = step(scene, q, Action::TurnLeft);
  CHECK(q == p);
  Pose wall{1, 1, Heading::North};  // facing the border wall
  CHECK(step(scene, wall, Action::MoveForward) == wall);
}

TEST_CASE("step never leaves navigable cells") {
  Scene scene = generate_scene(11, SceneParams{});
  Rng rng(17);
  Pose p{0, 0, Heading::North};
  for (const auto& o : scene.objects) {
    p = Pose{o.cell.x, o.cell.y, Heading::East};
    break;
  }
  std::uniform_int_distribution<int> apick(0, 3);
  for (int i = 0; i < 2000; ++i) {
    p = step(scene, p, static_cast<Action>(apick(rng)));
    CHECK(scene.navigable(p.x, p.y));
  }
}

TEST_CASE("shortest_action_path basics") {
  Scene scene = open_room(10, 10);
  Pose p{2, 5, Heading::East};
  CHECK(shortest_action_path(scene, p, {2, 5}).empty());
  auto corridor = shortest_action_path(scene, p, {5, 5});
  REQUIRE(corridor.size() == 3);
  for (Action a : corridor) CHECK(a == Action::MoveForward);
}

TEST_CASE("shortest_action_path tie-break prefers TurnLeft") {
  Scene scene = open_room(10, 10);
  // Goal directly behind: both double-turns reach it, TurnLeft wins ties.
  Pose p{5, 5, Heading::East};
  auto path = shortest_action_path(scene, p, {4, 5});
  REQUIRE(path.size() == 3);
  CHECK(path[0] == Action::TurnLeft);
  CHECK(path[1] == Action::TurnLeft);
  CHECK(path[2] == Action::MoveForward);
}

TEST_CASE("shortest_action_path matches (cell,heading) BFS oracle") {
  Rng rng(123);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SceneParams params;
    params.width = 14;
    params.height = 14;
    params.target_rooms = 4;
    params.min_room_extent = 3;
    params.categories = 6;
    Scene scene = generate_scene(seed + 40, params);
    std::vector<Cell> cells;
    for (int y = 0; y < scene.height; ++y) {
      for (int x = 0; x < scene.width; ++x) {
        if (scene.navigable(x, y)) cells.push_back({x, y});
      }
    }
    std::uniform_int_distribution<size_t> pick(0, cells.size() - 1);
    std::uniform_int_distribution<int> hpick(0, 3);
    for (int trial = 0; trial < 40; ++trial) {
      Cell sc = cells[pick(rng)];
      Pose start{sc.x, sc.y, static_cast<Heading>(hpick(rng))};
      Cell goal = cells[pick(rng)];
      auto path = shortest_action_path(scene, start, goal);
      CHECK(static_cast<int>(path.size()) == bfs_action_steps(scene, start, goal));
      Pose p = start;
      for (Action a : path) {
        Pose q = step(scene, p, a);
        CHECK(q != p);  // every action on the path is effective
        p = q;
      }
      CHECK(p.cell() == goal);
    }
  }
}

TEST_CASE("render_audio silent and symmetric cases") {
  Scene scene = open_room(12, 12);
  scene.objects.push_back({0, 0, {6, 2}, true});
  Eigen::MatrixXd sigs = Eigen::MatrixXd::Identity(3, 8);
  AudioParams params;
  params.sigma_a = 0.0;
  Rng rng(1);

  Pose p{6, 6, Heading::North};
  AudioSignal none = render_audio(scene, p, {}, sigs, params, rng);
  CHECK(!none.audible);
  CHECK(none.left == 0.0);
  CHECK(none.right == 0.0);
  CHECK(none.signature.isZero());

  // Source dead ahead: equal ears.
  AudioSignal ahead = render_audio(scene, p, {{&scene.objects[0], 1.0}}, sigs, params, rng);
  CHECK(ahead.audible);
  CHECK(ahead.left == doctest::Approx(ahead.right));
}

TEST_CASE("render_audio decay formula and ear split") {
  Scene scene = open_room(12, 12);
  scene.objects.push_back({0, 2, {3, 6}, true});  // 3 west of the agent
  Eigen::MatrixXd sigs = Eigen::MatrixXd::Identity(3, 8);
  AudioParams params;
  params.sigma_a = 0.0;
  Rng rng(1);
  Pose p{6, 6, Heading::North};  // source 90 degrees to the left
  AudioSignal s = render_audio(scene, p, {{&scene.objects[0], 1.0}}, sigs, params, rng);
  CHECK(s.left + s.right == doctest::Approx(0.25));  // d=3, alpha=1
  CHECK(s.left == doctest::Approx(0.25));            // sin(theta) = +1
  CHECK(s.right == doctest::Approx(0.0));
  CHECK(s.signature[2] == doctest::Approx(0.25));

  // Intensity is monotone non-increasing with geodesic distance.
  double prev = 1e9;
  for (int y = 6; y >= 2; --y) {
    Pose q{3, y, Heading::North};
    AudioSignal at = render_audio(scene, q, {{&scene.objects[0], 1.0}}, sigs, params, rng);
    double total = at.left + at.right;
    CHECK(total <= prev + 1e-12);
    prev = total;
  }
}

TEST_CASE("render_audio superimposes distractor sources additively") {
  Scene scene = open_room(12, 12);
  scene.objects.push_back({0, 0, {4, 6}, true});
  scene.objects.push_back({1, 1, {8, 6}, true});
  Eigen::MatrixXd sigs = Eigen::MatrixXd::Identity(3, 8);
  AudioParams params;
  params.sigma_a = 0.0;
  Rng rng(1);
  Pose p{6, 6, Heading::North};
  AudioSignal a = render_audio(scene, p, {{&scene.objects[0], 1.0}}, sigs, params, rng);
  AudioSignal b = render_audio(scene, p, {{&scene.objects[1], 1.0}}, sigs, params, rng);
  AudioSignal both =
      render_audio(scene, p, {{&scene.objects[0], 1.0}, {&scene.objects[1], 1.0}}, sigs, params, rng);
  CHECK(both.left == doctest::Approx(a.left + b.left));
  CHECK(both.right == doctest::Approx(a.right + b.right));
  CHECK((both.signature - a.signature - b.signature).norm() == doctest::Approx(0.0));
}

TEST_CASE("render_visual marks blocked cells and objects") {
  Scene scene = open_room(12, 12);
  VisualParams params;
  params.categories = 3;
  const int channels = 1 + params.room_channels + params.categories;

  Pose facing_wall{1, 6, Heading::West};  // wall right in front
  Eigen::VectorXd v = render_visual(scene, facing_wall, params);
  int front_base = (1 * params.window + 2) * channels;  // fwd=1, lat=0
  CHECK(v[front_base] == 0.0);
  int own_base = (0 * params.window + 2) * channels;
  CHECK(v[own_base] == 1.0);

  scene.objects.push_back({0, 2, {6, 4}, true});
  Pose p{6, 6, Heading::North};
  Eigen::VectorXd with_obj = render_visual(scene, p, params);
  int obj_base = (2 * params.window + 2) * channels;  // two cells ahead
  CHECK(with_obj[obj_base + 1 + params.room_channels + 2] == 1.0);
  // Exactly one category channel hot across the window.
  double hot = 0.0;
  for (int cell = 0; cell < params.window * params.window; ++cell) {
    for (int c = 0; c < params.categories; ++c) {
      hot += with_obj[cell * channels + 1 + params.room_channels + c];
    }
  }
  CHECK(hot == 1.0);
}

TEST_CASE("render_visual is invariant to rotation in symmetric surroundings") {
  Scene scene = open_room(13, 13);
  VisualParams params;
  params.categories = 3;
  Pose p{6, 6, Heading::North};
  Eigen::VectorXd north = render_visual(scene, p, params);
  p.heading = Heading::East;
  Eigen::VectorXd east = render_visual(scene, p, params);
  CHECK((north - east).norm() == 0.0);
}

TEST_CASE("agent frame rotation example") {
  // Goal two cells ahead, agent turns left: location becomes (0, -2).
  Pose before{5, 5, Heading::North};
  Cell target{5, 3};
  Eigen::Vector2d loc = to_agent_frame(before, target);
  CHECK(loc.x() == doctest::Approx(2.0));
  CHECK(loc.y() == doctest::Approx(0.0));
  Pose after{5, 5, Heading::West};
  Eigen::Vector2d rotated = to_agent_frame(after, target);
  CHECK(rotated.x() == doctest::Approx(0.0));
  CHECK(rotated.y() == doctest::Approx(-2.0));
}
