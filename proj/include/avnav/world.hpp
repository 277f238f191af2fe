#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "avnav/common.hpp"

namespace avnav {

// Grid axes: x grows east, y grows south (row-major storage).
enum class Heading : std::uint8_t { North = 0, East = 1, South = 2, West = 3 };
enum class Action : std::uint8_t { Stop = 0, MoveForward = 1, TurnRight = 2, TurnLeft = 3 };
constexpr int kNumActions = 4;

const char* to_string(Action a);
const char* to_string(Heading h);
Action action_from_string(const std::string& s);

struct Cell {
  int x = 0;
  int y = 0;
  bool operator==(const Cell&) const = default;
};

Cell heading_vec(Heading h);
Heading turn_right(Heading h);
Heading turn_left(Heading h);

struct Pose {
  int x = 0;
  int y = 0;
  Heading heading = Heading::North;
  Cell cell() const { return {x, y}; }
  bool operator==(const Pose&) const = default;
};

struct SemanticObject {
  int id = 0;
  int category = 0;
  Cell cell;
  bool is_sound_source = true;
};

struct SceneParams {
  int width = 24;
  int height = 24;
  int target_rooms = 6;
  int min_room_extent = 4;
  int categories = 21;
};

struct Scene {
  int width = 0;
  int height = 0;
  std::vector<int> room_label;  // row-major; -1 = wall
  std::vector<SemanticObject> objects;
  std::uint64_t seed = 0;
  int num_rooms = 0;

  bool in_bounds(int x, int y) const {
    return x >= 0 && x < width && y >= 0 && y < height;
  }
  int label(int x, int y) const { return room_label[static_cast<size_t>(y) * width + x]; }
  bool navigable(int x, int y) const { return in_bounds(x, y) && label(x, y) >= 0; }
  bool navigable(Cell c) const { return navigable(c.x, c.y); }
  // Objects occupy distinct cells by construction; returns nullptr when empty.
  const SemanticObject* object_at(int x, int y) const;
  const SemanticObject* object_by_id(int id) const;
};

// Deterministic BSP room layout; throws config_error on bad params.
Scene generate_scene(std::uint64_t seed, const SceneParams& params);

// BFS over navigable 4-connected cells; -1 where unreachable.
std::vector<int> distance_field(const Scene& scene, Cell from);

// Shortest navigable path length in cells; throws input_error off the grid.
double geodesic_distance(const Scene& scene, Cell a, Cell b);

// Minimal action sequence (turns included, Stop excluded) reaching `goal`.
// Ties resolved lexicographically with Forward < TurnLeft < TurnRight.
std::vector<Action> shortest_action_path(const Scene& scene, const Pose& pose, Cell goal);

// Kinematics: Forward into a wall is a consumed no-op, turns always succeed.
Pose step(const Scene& scene, const Pose& pose, Action action);

struct AudioParams {
  double alpha = 1.0;    // intensity decay exponent: I = 1/(1+d)^alpha
  double sigma_a = 0.01; // signature noise std
};

struct AudioSignal {
  double left = 0.0;
  double right = 0.0;
  Eigen::VectorXd signature;  // D_a floats; all-zero when silent
  bool audible = false;
};

struct ActiveSource {
  const SemanticObject* object = nullptr;
  double gain = 1.0;
};

// Memoizes per-source BFS fields; one per (scene, episode) worker.
class DistanceFieldCache {
 public:
  explicit DistanceFieldCache(const Scene& scene) : scene_(&scene) {}
  const std::vector<int>& field(Cell from);

 private:
  const Scene* scene_;
  std::map<std::pair<int, int>, std::vector<int>> fields_;
};

// Bearing angle is measured counter-clockwise from the agent heading
// (positive = source on the left); ear gains are (1 +- sin theta)/2.
AudioSignal render_audio(const Scene& scene, const Pose& pose,
                         const std::vector<ActiveSource>& sources,
                         const Eigen::MatrixXd& signatures,  // C x D_a
                         const AudioParams& params, Rng& rng,
                         DistanceFieldCache* cache = nullptr);

struct VisualParams {
  int window = 5;         // egocentric window side (forward depth = lateral span)
  int room_channels = 8;  // room labels folded modulo this
  int categories = 21;
};

int visual_dim(const VisualParams& params);

// Egocentric window rotated into the agent frame, channels per cell:
// [navigable, room one-hot, object-category one-hot], flattened forward-major.
Eigen::VectorXd render_visual(const Scene& scene, const Pose& pose, const VisualParams& params);

// Scene JSON, schema 1: {schema, width, height, cells, objects, seed}.
std::string scene_to_json(const Scene& scene);
Scene scene_from_json(const std::string& text);

// Agent-frame coordinates (x = forward, y = left) of a world cell.
Eigen::Vector2d to_agent_frame(const Pose& pose, Cell target);

}  // namespace avnav
