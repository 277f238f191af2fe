#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "avnav/common.hpp"
#include "avnav/world.hpp"

namespace avnav {

enum class Regime { Heard, Unheard, UnheardDistractor };

const char* to_string(Regime r);
Regime regime_from_string(const std::string& s);

struct DistractorSpec {
  int object_id = -1;
  int onset = 0;
  int duration = 0;
};

struct EpisodeSpec {
  std::uint64_t scene_seed = 0;
  Pose start;
  int goal_object_id = -1;
  int sound_onset = 0;
  int sound_duration = 0;
  std::optional<DistractorSpec> distractor;
  bool unheard_split = false;
  std::optional<Eigen::VectorXd> target_onehot;  // present iff distractor present
};

// Category split for the unheard regime plus per-category audio signatures.
struct SplitConfig {
  std::vector<int> train_categories;
  std::vector<int> test_categories;
  Eigen::MatrixXd signatures;  // C x D_a, orthonormal rows
  std::uint64_t seed = 0;
};

struct EpisodeParams {
  int min_start_goal = 4;
  double duration_mean = 15.0;
  double duration_std = 9.0;
  int duration_min = 5;
  int duration_max = 500;
};

// Signatures are rows of a random orthogonal matrix, so categories are
// acoustically separable without any audio synthesis.
SplitConfig make_split(int categories, int test_count, int d_a, std::uint64_t seed);

int sample_duration(const EpisodeParams& params, Rng& rng);

EpisodeSpec sample_episode(const Scene& scene, const SplitConfig& split, Regime regime,
                           const EpisodeParams& params, Rng& rng);

// Goal (and distractor) gains are 1 while onset <= t < onset + duration.
std::vector<ActiveSource> active_sources(const Scene& scene, const EpisodeSpec& spec, int t);

std::string episode_to_json(const EpisodeSpec& spec);
EpisodeSpec episode_from_json(const std::string& line);

std::string split_to_json(const SplitConfig& split);
SplitConfig split_from_json(const std::string& text);

void save_episodes_jsonl(const std::string& path, const std::vector<EpisodeSpec>& specs);
std::vector<EpisodeSpec> load_episodes_jsonl(const std::string& path);

}  // namespace avnav
