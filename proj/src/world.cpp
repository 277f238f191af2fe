#include "avnav/world.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <queue>

#include "json.hpp"

namespace avnav {

using nlohmann::json;

const char* to_string(Action a) {
  switch (a) {
    case Action::Stop: return "stop";
    case Action::MoveForward: return "forward";
    case Action::TurnRight: return "turn_right";
    case Action::TurnLeft: return "turn_left";
  }
  return "?";
}

const char* to_string(Heading h) {
  switch (h) {
    case Heading::North: return "N";
    case Heading::East: return "E";
    case Heading::South: return "S";
    case Heading::West: return "W";
  }
  return "?";
}

Action action_from_string(const std::string& s) {
  for (int i = 0; i < kNumActions; ++i) {
    if (s == to_string(static_cast<Action>(i))) return static_cast<Action>(i);
  }
  throw parse_error("unknown action name: " + s);
}

Cell heading_vec(Heading h) {
  switch (h) {
    case Heading::North: return {0, -1};
    case Heading::East: return {1, 0};
    case Heading::South: return {0, 1};
    case Heading::West: return {-1, 0};
  }
  return {0, 0};
}

Heading turn_right(Heading h) { return static_cast<Heading>((static_cast<int>(h) + 1) & 3); }
Heading turn_left(Heading h) { return static_cast<Heading>((static_cast<int>(h) + 3) & 3); }

const SemanticObject* Scene::object_at(int x, int y) const {
  for (const auto& o : objects) {
    if (o.cell.x == x && o.cell.y == y) return &o;
  }
  return nullptr;
}

const SemanticObject* Scene::object_by_id(int id) const {
  for (const auto& o : objects) {
    if (o.id == id) return &o;
  }
  return nullptr;
}

namespace {

struct Rect {
  int x0, y0, x1, y1;  // half-open
  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  int area() const { return width() * height(); }
};

// Flood fill over navigable cells; returns visited count from `from`.
int flood_count(const Scene& scene, Cell from) {
  std::vector<char> seen(static_cast<size_t>(scene.width) * scene.height, 0);
  std::deque<Cell> queue{from};
  seen[static_cast<size_t>(from.y) * scene.width + from.x] = 1;
  int count = 0;
  while (!queue.empty()) {
    Cell c = queue.front();
    queue.pop_front();
    ++count;
    const int dx[4] = {0, 1, 0, -1};
    const int dy[4] = {-1, 0, 1, 0};
    for (int k = 0; k < 4; ++k) {
      int nx = c.x + dx[k], ny = c.y + dy[k];
      if (!scene.navigable(nx, ny)) continue;
      char& s = seen[static_cast<size_t>(ny) * scene.width + nx];
      if (!s) {
        s = 1;
        queue.push_back({nx, ny});
      }
    }
  }
  return count;
}

}  // namespace

Scene generate_scene(std::uint64_t seed, const SceneParams& params) {
  if (params.width < 8 || params.width > 64 || params.height < 8 || params.height > 64) {
    throw config_error("scene width/height must be in [8, 64]");
  }
  if (params.target_rooms < 1 || params.min_room_extent < 2 || params.categories < 1) {
    throw config_error("invalid scene params (rooms/min_room/categories)");
  }

  Scene scene;
  scene.width = params.width;
  scene.height = params.height;
  scene.seed = seed;
  scene.room_label.assign(static_cast<size_t>(params.width) * params.height, -1);

  Rng rng(mix_seed(seed, 0x5ce9e5));

  // Carve the interior, then split recursively; each split wall keeps one door.
  std::vector<Rect> leaves{{1, 1, params.width - 1, params.height - 1}};
  struct Door {
    Cell cell;
    Cell neighbor;  // room-side cell providing the door's label
  };
  std::vector<Door> doors;

  const int min_ext = params.min_room_extent;
  while (static_cast<int>(leaves.size()) < params.target_rooms) {
    int best = -1;
    for (size_t i = 0; i < leaves.size(); ++i) {
      const Rect& r = leaves[i];
      bool splittable = r.width() >= 2 * min_ext + 1 || r.height() >= 2 * min_ext + 1;
      if (!splittable) continue;
      if (best < 0 || r.area() > leaves[best].area()) best = static_cast<int>(i);
    }
    if (best < 0) break;
    Rect r = leaves[best];
    bool vertical = r.width() >= r.height();  // wall along a column when wide
    if (vertical && r.width() < 2 * min_ext + 1) vertical = false;
    if (!vertical && r.height() < 2 * min_ext + 1) vertical = true;
    if (vertical) {
      std::uniform_int_distribution<int> pos(r.x0 + min_ext, r.x1 - 1 - min_ext);
      int s = pos(rng);
      std::uniform_int_distribution<int> dpos(r.y0, r.y1 - 1);
      int door_y = dpos(rng);
      doors.push_back({{s, door_y}, {s - 1, door_y}});
      leaves[best] = {r.x0, r.y0, s, r.y1};
      leaves.push_back({s + 1, r.y0, r.x1, r.y1});
    } else {
      std::uniform_int_distribution<int> pos(r.y0 + min_ext, r.y1 - 1 - min_ext);
      int s = pos(rng);
      std::uniform_int_distribution<int> dpos(r.x0, r.x1 - 1);
      int door_x = dpos(rng);
      doors.push_back({{door_x, s}, {door_x, s - 1}});
      leaves[best] = {r.x0, r.y0, r.x1, s};
      leaves.push_back({r.x0, s + 1, r.x1, r.y1});
    }
  }

  for (size_t i = 0; i < leaves.size(); ++i) {
    const Rect& r = leaves[i];
    for (int y = r.y0; y < r.y1; ++y) {
      for (int x = r.x0; x < r.x1; ++x) {
        scene.room_label[static_cast<size_t>(y) * scene.width + x] = static_cast<int>(i);
      }
    }
  }
  for (const Door& d : doors) {
    int neighbor_label = scene.room_label[static_cast<size_t>(d.neighbor.y) * scene.width + d.neighbor.x];
    scene.room_label[static_cast<size_t>(d.cell.y) * scene.width + d.cell.x] = neighbor_label;
  }
  scene.num_rooms = static_cast<int>(leaves.size());

  // A later split can wall off the cell an earlier door opened into; open
  // interior wall cells (row-major scan, so deterministic) until the
  // navigable set is a single component.
  auto components = [&scene]() {
    std::vector<int> comp(scene.room_label.size(), -1);
    int count = 0;
    for (int y = 0; y < scene.height; ++y) {
      for (int x = 0; x < scene.width; ++x) {
        if (!scene.navigable(x, y) || comp[static_cast<size_t>(y) * scene.width + x] >= 0) continue;
        std::deque<Cell> queue{{x, y}};
        comp[static_cast<size_t>(y) * scene.width + x] = count;
        while (!queue.empty()) {
          Cell c = queue.front();
          queue.pop_front();
          const int dx[4] = {0, 1, 0, -1};
          const int dy[4] = {-1, 0, 1, 0};
          for (int k = 0; k < 4; ++k) {
            int nx = c.x + dx[k], ny = c.y + dy[k];
            if (!scene.navigable(nx, ny)) continue;
            int& cc = comp[static_cast<size_t>(ny) * scene.width + nx];
            if (cc < 0) {
              cc = count;
              queue.push_back({nx, ny});
            }
          }
        }
        ++count;
      }
    }
    return std::make_pair(comp, count);
  };
  for (auto [comp, count] = components(); count > 1; std::tie(comp, count) = components()) {
    bool opened = false;
    for (int y = 1; y < scene.height - 1 && !opened; ++y) {
      for (int x = 1; x < scene.width - 1 && !opened; ++x) {
        if (scene.navigable(x, y)) continue;
        const int dx[4] = {0, 1, 0, -1};
        const int dy[4] = {-1, 0, 1, 0};
        int first_comp = -1, adopt_label = -1;
        bool bridges = false;
        for (int k = 0; k < 4; ++k) {
          int nx = x + dx[k], ny = y + dy[k];
          if (!scene.navigable(nx, ny)) continue;
          int c = comp[static_cast<size_t>(ny) * scene.width + nx];
          if (adopt_label < 0) adopt_label = scene.label(nx, ny);
          if (first_comp < 0) {
            first_comp = c;
          } else if (c != first_comp) {
            bridges = true;
          }
        }
        if (bridges) {
          scene.room_label[static_cast<size_t>(y) * scene.width + x] = adopt_label;
          opened = true;
        }
      }
    }
    if (!opened) {
      // No single cell bridges two components; widen the first component by
      // one wall cell and rescan.
      for (int y = 1; y < scene.height - 1 && !opened; ++y) {
        for (int x = 1; x < scene.width - 1 && !opened; ++x) {
          if (scene.navigable(x, y)) continue;
          const int dx[4] = {0, 1, 0, -1};
          const int dy[4] = {-1, 0, 1, 0};
          for (int k = 0; k < 4; ++k) {
            if (scene.navigable(x + dx[k], y + dy[k])) {
              scene.room_label[static_cast<size_t>(y) * scene.width + x] =
                  scene.label(x + dx[k], y + dy[k]);
              opened = true;
              break;
            }
          }
        }
      }
      if (!opened) throw config_error("scene repair failed");
    }
  }

  // One object per category on distinct navigable cells.
  std::vector<Cell> free;
  for (int y = 0; y < scene.height; ++y) {
    for (int x = 0; x < scene.width; ++x) {
      if (scene.navigable(x, y)) free.push_back({x, y});
    }
  }
  if (static_cast<int>(free.size()) < params.categories) {
    throw config_error("scene too small to place one object per category");
  }
  std::shuffle(free.begin(), free.end(), rng);
  for (int c = 0; c < params.categories; ++c) {
    scene.objects.push_back({c, c, free[static_cast<size_t>(c)], true});
  }

  int navigable_total = static_cast<int>(free.size());
  if (flood_count(scene, free[0]) != navigable_total) {
    throw config_error("generated scene is not connected");  // unreachable by construction
  }
  return scene;
}

std::vector<int> distance_field(const Scene& scene, Cell from) {
  std::vector<int> dist(static_cast<size_t>(scene.width) * scene.height, -1);
  if (!scene.navigable(from)) throw input_error("distance_field: source not navigable");
  std::deque<Cell> queue{from};
  dist[static_cast<size_t>(from.y) * scene.width + from.x] = 0;
  const int dx[4] = {0, 1, 0, -1};
  const int dy[4] = {-1, 0, 1, 0};
  while (!queue.empty()) {
    Cell c = queue.front();
    queue.pop_front();
    int d = dist[static_cast<size_t>(c.y) * scene.width + c.x];
    for (int k = 0; k < 4; ++k) {
      int nx = c.x + dx[k], ny = c.y + dy[k];
      if (!scene.navigable(nx, ny)) continue;
      int& nd = dist[static_cast<size_t>(ny) * scene.width + nx];
      if (nd < 0) {
        nd = d + 1;
        queue.push_back({nx, ny});
      }
    }
  }
  return dist;
}

double geodesic_distance(const Scene& scene, Cell a, Cell b) {
  if (!scene.navigable(a) || !scene.navigable(b)) {
    throw input_error("geodesic_distance: cell not navigable");
  }
  auto dist = distance_field(scene, a);
  int d = dist[static_cast<size_t>(b.y) * scene.width + b.x];
  if (d < 0) throw input_error("geodesic_distance: disconnected cells");
  return static_cast<double>(d);
}

const std::vector<int>& DistanceFieldCache::field(Cell from) {
  auto key = std::make_pair(from.x, from.y);
  auto it = fields_.find(key);
  if (it == fields_.end()) {
    it = fields_.emplace(key, distance_field(*scene_, from)).first;
  }
  return it->second;
}

std::vector<Action> shortest_action_path(const Scene& scene, const Pose& pose, Cell goal) {
  if (!scene.navigable(pose.x, pose.y)) throw input_error("shortest_action_path: pose not navigable");
  if (!scene.navigable(goal)) throw input_error("shortest_action_path: goal not navigable");
  if (pose.cell() == goal) return {};

  auto index = [&](int x, int y, int h) {
    return (static_cast<size_t>(y) * scene.width + x) * 4 + h;
  };
  std::vector<int> parent_state(static_cast<size_t>(scene.width) * scene.height * 4, -1);
  std::vector<Action> parent_action(parent_state.size(), Action::Stop);
  std::deque<int> queue;
  int start = static_cast<int>(index(pose.x, pose.y, static_cast<int>(pose.heading)));
  parent_state[static_cast<size_t>(start)] = start;
  queue.push_back(start);

  // Expansion order fixes the tie-break: Forward, TurnLeft, TurnRight.
  const std::array<Action, 3> order = {Action::MoveForward, Action::TurnLeft, Action::TurnRight};
  int found = -1;
  while (!queue.empty() && found < 0) {
    int cur = queue.front();
    queue.pop_front();
    int h = cur & 3;
    int flat = cur >> 2;
    int x = flat % scene.width;
    int y = flat / scene.width;
    Pose p{x, y, static_cast<Heading>(h)};
    for (Action a : order) {
      Pose q = step(scene, p, a);
      if (q == p) continue;  // blocked forward adds nothing in a search
      int ni = static_cast<int>(index(q.x, q.y, static_cast<int>(q.heading)));
      if (parent_state[static_cast<size_t>(ni)] >= 0) continue;
      parent_state[static_cast<size_t>(ni)] = cur;
      parent_action[static_cast<size_t>(ni)] = a;
      if (q.cell() == goal) {
        found = ni;
        break;
      }
      queue.push_back(ni);
    }
  }
  if (found < 0) throw input_error("shortest_action_path: goal unreachable");

  std::vector<Action> actions;
  for (int s = found; s != start; s = parent_state[static_cast<size_t>(s)]) {
    actions.push_back(parent_action[static_cast<size_t>(s)]);
  }
  std::reverse(actions.begin(), actions.end());
  return actions;
}

Pose step(const Scene& scene, const Pose& pose, Action action) {
  switch (action) {
    case Action::Stop:
      return pose;
    case Action::MoveForward: {
      Cell v = heading_vec(pose.heading);
      int nx = pose.x + v.x, ny = pose.y + v.y;
      if (scene.navigable(nx, ny)) return {nx, ny, pose.heading};
      return pose;
    }
    case Action::TurnRight:
      return {pose.x, pose.y, turn_right(pose.heading)};
    case Action::TurnLeft:
      return {pose.x, pose.y, turn_left(pose.heading)};
  }
  return pose;
}

Eigen::Vector2d to_agent_frame(const Pose& pose, Cell target) {
  double rx = target.x - pose.x;
  double ry = target.y - pose.y;
  Cell f = heading_vec(pose.heading);
  Cell l = heading_vec(turn_left(pose.heading));
  return {rx * f.x + ry * f.y, rx * l.x + ry * l.y};
}

AudioSignal render_audio(const Scene& scene, const Pose& pose,
                         const std::vector<ActiveSource>& sources,
                         const Eigen::MatrixXd& signatures, const AudioParams& params,
                         Rng& rng, DistanceFieldCache* cache) {
  AudioSignal out;
  out.signature = Eigen::VectorXd::Zero(signatures.cols());
  if (sources.empty()) return out;

  out.audible = true;
  for (const ActiveSource& src : sources) {
    const SemanticObject* obj = src.object;
    double d;
    if (cache != nullptr) {
      const auto& field = cache->field(obj->cell);
      d = field[static_cast<size_t>(pose.y) * scene.width + pose.x];
    } else {
      d = geodesic_distance(scene, obj->cell, pose.cell());
    }
    double intensity = src.gain / std::pow(1.0 + d, params.alpha);
    Eigen::Vector2d rel = to_agent_frame(pose, obj->cell);
    double norm = rel.norm();
    double sin_theta = norm > 0.0 ? rel.y() / norm : 0.0;
    out.left += intensity * (1.0 + sin_theta) * 0.5;
    out.right += intensity * (1.0 - sin_theta) * 0.5;
    out.signature += intensity * signatures.row(obj->category).transpose();
  }
  if (params.sigma_a > 0.0) {
    std::normal_distribution<double> noise(0.0, params.sigma_a);
    for (Eigen::Index i = 0; i < out.signature.size(); ++i) out.signature[i] += noise(rng);
  }
  return out;
}

int visual_dim(const VisualParams& params) {
  return params.window * params.window * (1 + params.room_channels + params.categories);
}

Eigen::VectorXd render_visual(const Scene& scene, const Pose& pose, const VisualParams& params) {
  const int w = params.window;
  const int half = w / 2;
  const int channels = 1 + params.room_channels + params.categories;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(visual_dim(params));

  Cell f = heading_vec(pose.heading);
  Cell l = heading_vec(turn_left(pose.heading));
  for (int fwd = 0; fwd < w; ++fwd) {
    for (int lat = -half; lat <= half; ++lat) {
      int x = pose.x + fwd * f.x + lat * l.x;
      int y = pose.y + fwd * f.y + lat * l.y;
      int base = (fwd * w + (lat + half)) * channels;
      if (!scene.navigable(x, y)) continue;  // blocked/out cells stay all-zero
      out[base] = 1.0;
      out[base + 1 + scene.label(x, y) % params.room_channels] = 1.0;
      if (const SemanticObject* obj = scene.object_at(x, y)) {
        out[base + 1 + params.room_channels + obj->category] = 1.0;
      }
    }
  }
  return out;
}

std::string scene_to_json(const Scene& scene) {
  json j;
  j["schema"] = 1;
  j["width"] = scene.width;
  j["height"] = scene.height;
  j["cells"] = scene.room_label;
  json objs = json::array();
  for (const auto& o : scene.objects) {
    objs.push_back({{"id", o.id}, {"category", o.category}, {"x", o.cell.x}, {"y", o.cell.y}});
  }
  j["objects"] = objs;
  j["seed"] = scene.seed;
  j["num_rooms"] = scene.num_rooms;
  return j.dump();
}

Scene scene_from_json(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw parse_error("scene JSON is malformed");
  if (!j.contains("schema") || j["schema"].get<int>() != 1) {
    throw parse_error("unsupported scene schema");
  }
  Scene scene;
  scene.width = j.at("width").get<int>();
  scene.height = j.at("height").get<int>();
  scene.room_label = j.at("cells").get<std::vector<int>>();
  scene.seed = j.at("seed").get<std::uint64_t>();
  scene.num_rooms = j.value("num_rooms", 0);
  if (scene.room_label.size() != static_cast<size_t>(scene.width) * scene.height) {
    throw parse_error("scene cells length mismatch");
  }
  for (const auto& o : j.at("objects")) {
    scene.objects.push_back({o.at("id").get<int>(), o.at("category").get<int>(),
                             {o.at("x").get<int>(), o.at("y").get<int>()}, true});
  }
  return scene;
}

}  // namespace avnav
