#include "avnav/episode.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace avnav {

using nlohmann::json;

const char* to_string(Regime r) {
  switch (r) {
    case Regime::Heard: return "heard";
    case Regime::Unheard: return "unheard";
    case Regime::UnheardDistractor: return "distractor";
  }
  return "?";
}

Regime regime_from_string(const std::string& s) {
  if (s == "heard") return Regime::Heard;
  if (s == "unheard") return Regime::Unheard;
  if (s == "distractor") return Regime::UnheardDistractor;
  throw config_error("unknown regime: " + s);
}

SplitConfig make_split(int categories, int test_count, int d_a, std::uint64_t seed) {
  if (d_a < categories) throw config_error("signature dim must be >= category count");
  if (test_count <= 0 || test_count >= categories) {
    throw config_error("test category count must be in (0, categories)");
  }
  SplitConfig split;
  split.seed = seed;

  Rng rng(mix_seed(seed, 0xa0d10));
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd m(d_a, d_a);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = gauss(rng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
  Eigen::MatrixXd q = qr.householderQ();
  split.signatures = q.leftCols(categories).transpose();

  std::vector<int> cats(static_cast<size_t>(categories));
  for (int c = 0; c < categories; ++c) cats[static_cast<size_t>(c)] = c;
  std::shuffle(cats.begin(), cats.end(), rng);
  split.test_categories.assign(cats.begin(), cats.begin() + test_count);
  split.train_categories.assign(cats.begin() + test_count, cats.end());
  std::sort(split.test_categories.begin(), split.test_categories.end());
  std::sort(split.train_categories.begin(), split.train_categories.end());
  return split;
}

int sample_duration(const EpisodeParams& params, Rng& rng) {
  std::normal_distribution<double> normal(params.duration_mean, params.duration_std);
  double d = std::clamp(normal(rng), static_cast<double>(params.duration_min),
                        static_cast<double>(params.duration_max));
  return static_cast<int>(std::lround(d));
}

EpisodeSpec sample_episode(const Scene& scene, const SplitConfig& split, Regime regime,
                           const EpisodeParams& params, Rng& rng) {
  const std::vector<int>& pool =
      regime == Regime::Heard ? split.train_categories : split.test_categories;
  if (pool.empty()) throw sampling_error("empty category pool for regime");

  EpisodeSpec spec;
  spec.scene_seed = scene.seed;
  spec.unheard_split = regime != Regime::Heard;

  std::uniform_int_distribution<size_t> pick(0, pool.size() - 1);
  int goal_category = pool[pick(rng)];
  const SemanticObject* goal = nullptr;
  for (const auto& o : scene.objects) {
    if (o.category == goal_category && o.is_sound_source) {
      goal = &o;
      break;
    }
  }
  if (goal == nullptr) throw sampling_error("no sound-source object of sampled category");
  spec.goal_object_id = goal->id;
  spec.sound_onset = 0;
  spec.sound_duration = sample_duration(params, rng);

  auto dist = distance_field(scene, goal->cell);
  std::vector<Cell> candidates;
  for (int y = 0; y < scene.height; ++y) {
    for (int x = 0; x < scene.width; ++x) {
      int d = dist[static_cast<size_t>(y) * scene.width + x];
      if (d >= params.min_start_goal) candidates.push_back({x, y});
    }
  }
  if (candidates.empty()) throw sampling_error("no start cell at required distance from goal");
  std::uniform_int_distribution<size_t> cpick(0, candidates.size() - 1);
  Cell start = candidates[cpick(rng)];
  std::uniform_int_distribution<int> hpick(0, 3);
  spec.start = {start.x, start.y, static_cast<Heading>(hpick(rng))};

  if (regime == Regime::UnheardDistractor) {
    std::vector<const SemanticObject*> others;
    for (const auto& o : scene.objects) {
      if (o.is_sound_source && o.category != goal_category) others.push_back(&o);
    }
    if (others.empty()) throw sampling_error("no distractor candidate object");
    std::uniform_int_distribution<size_t> dpick(0, others.size() - 1);
    const SemanticObject* d = others[dpick(rng)];
    // Distractor timing sampled i.i.d. like the goal's (onset 0).
    spec.distractor = DistractorSpec{d->id, 0, sample_duration(params, rng)};
    Eigen::VectorXd onehot = Eigen::VectorXd::Zero(split.signatures.rows());
    onehot[goal_category] = 1.0;
    spec.target_onehot = onehot;
  }
  return spec;
}

std::vector<ActiveSource> active_sources(const Scene& scene, const EpisodeSpec& spec, int t) {
  std::vector<ActiveSource> sources;
  if (t >= spec.sound_onset && t < spec.sound_onset + spec.sound_duration) {
    sources.push_back({scene.object_by_id(spec.goal_object_id), 1.0});
  }
  if (spec.distractor.has_value()) {
    const DistractorSpec& d = *spec.distractor;
    if (t >= d.onset && t < d.onset + d.duration) {
      sources.push_back({scene.object_by_id(d.object_id), 1.0});
    }
  }
  return sources;
}

std::string episode_to_json(const EpisodeSpec& spec) {
  json j;
  j["scene_seed"] = spec.scene_seed;
  j["start"] = {{"x", spec.start.x}, {"y", spec.start.y}, {"heading", to_string(spec.start.heading)}};
  j["goal_object_id"] = spec.goal_object_id;
  j["sound_onset"] = spec.sound_onset;
  j["sound_duration"] = spec.sound_duration;
  j["split"] = spec.unheard_split ? "unheard" : "heard";
  if (spec.distractor.has_value()) {
    j["distractor"] = {{"object_id", spec.distractor->object_id},
                       {"onset", spec.distractor->onset},
                       {"duration", spec.distractor->duration}};
    std::vector<double> onehot(spec.target_onehot->data(),
                               spec.target_onehot->data() + spec.target_onehot->size());
    j["target_onehot"] = onehot;
  }
  return j.dump();
}

static Heading heading_from_string(const std::string& s) {
  for (int h = 0; h < 4; ++h) {
    if (s == to_string(static_cast<Heading>(h))) return static_cast<Heading>(h);
  }
  throw parse_error("unknown heading: " + s);
}

EpisodeSpec episode_from_json(const std::string& line) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded()) throw parse_error("episode JSON is malformed");
  EpisodeSpec spec;
  spec.scene_seed = j.at("scene_seed").get<std::uint64_t>();
  spec.start.x = j.at("start").at("x").get<int>();
  spec.start.y = j.at("start").at("y").get<int>();
  spec.start.heading = heading_from_string(j.at("start").at("heading").get<std::string>());
  spec.goal_object_id = j.at("goal_object_id").get<int>();
  spec.sound_onset = j.at("sound_onset").get<int>();
  spec.sound_duration = j.at("sound_duration").get<int>();
  spec.unheard_split = j.at("split").get<std::string>() == "unheard";
  if (j.contains("distractor")) {
    spec.distractor = DistractorSpec{j["distractor"].at("object_id").get<int>(),
                                     j["distractor"].at("onset").get<int>(),
                                     j["distractor"].at("duration").get<int>()};
    auto onehot = j.at("target_onehot").get<std::vector<double>>();
    spec.target_onehot = Eigen::Map<Eigen::VectorXd>(onehot.data(), static_cast<Eigen::Index>(onehot.size()));
  }
  return spec;
}

std::string split_to_json(const SplitConfig& split) {
  json j;
  j["schema"] = 1;
  j["seed"] = split.seed;
  j["train_categories"] = split.train_categories;
  j["test_categories"] = split.test_categories;
  json sigs = json::array();
  for (Eigen::Index r = 0; r < split.signatures.rows(); ++r) {
    std::vector<double> row(split.signatures.cols());
    for (Eigen::Index c = 0; c < split.signatures.cols(); ++c) row[static_cast<size_t>(c)] = split.signatures(r, c);
    sigs.push_back(row);
  }
  j["signatures"] = sigs;
  return j.dump();
}

SplitConfig split_from_json(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw parse_error("split JSON is malformed");
  SplitConfig split;
  split.seed = j.at("seed").get<std::uint64_t>();
  split.train_categories = j.at("train_categories").get<std::vector<int>>();
  split.test_categories = j.at("test_categories").get<std::vector<int>>();
  const auto& sigs = j.at("signatures");
  if (sigs.empty()) throw parse_error("split has no signatures");
  split.signatures.resize(static_cast<Eigen::Index>(sigs.size()),
                          static_cast<Eigen::Index>(sigs[0].size()));
  for (Eigen::Index r = 0; r < split.signatures.rows(); ++r) {
    auto row = sigs[static_cast<size_t>(r)].get<std::vector<double>>();
    for (Eigen::Index c = 0; c < split.signatures.cols(); ++c) split.signatures(r, c) = row[static_cast<size_t>(c)];
  }
  return split;
}

void save_episodes_jsonl(const std::string& path, const std::vector<EpisodeSpec>& specs) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot open for writing: " + path);
  for (const auto& spec : specs) out << episode_to_json(spec) << "\n";
}

std::vector<EpisodeSpec> load_episodes_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open: " + path);
  std::vector<EpisodeSpec> specs;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) specs.push_back(episode_from_json(line));
  }
  return specs;
}

}  // namespace avnav
