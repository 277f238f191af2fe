#include "avnav/runner.hpp"

#include <fstream>
#include <omp.h>
#include <sstream>

#include "json.hpp"

namespace avnav {

using nlohmann::json;

namespace {

EpisodeRun run_one(const EvalSetup& setup, const EpisodeSpec& spec, std::uint64_t seed,
                   bool keep_log) {
  auto it = setup.scenes->find(spec.scene_seed);
  if (it == setup.scenes->end()) throw input_error("episode references unknown scene seed");
  EpisodeRun run;
  Controller controller(it->second, spec, *setup.split, setup.bundle, setup.controller,
                        setup.audio, setup.layout, setup.trigger, setup.speaker, *setup.vocab,
                        seed);
  if (keep_log) controller.log = &run.log;
  controller.run();
  run.outcome = controller.finish();
  return run;
}

}  // namespace

std::vector<EpisodeRun> run_episode_batch(const EvalSetup& setup,
                                          const std::vector<EpisodeSpec>& specs, ExecMode mode,
                                          bool keep_logs) {
  std::vector<EpisodeRun> runs(specs.size());
  if (mode == ExecMode::Serial) {
    for (size_t i = 0; i < specs.size(); ++i) {
      runs[i] = run_one(setup, specs[i], mix_seed(setup.base_seed, i), keep_logs);
    }
    return runs;
  }
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < static_cast<long>(specs.size()); ++i) {
    runs[static_cast<size_t>(i)] = run_one(setup, specs[static_cast<size_t>(i)],
                                           mix_seed(setup.base_seed, static_cast<size_t>(i)),
                                           keep_logs);
  }
  return runs;
}

void assert_budgets(const std::vector<EpisodeRun>& runs, int k_allowed, int nu) {
  for (size_t i = 0; i < runs.size(); ++i) {
    const EpisodeOutcome& o = runs[i].outcome;
    if (k_allowed >= 0 && static_cast<int>(o.query_steps.size()) > k_allowed) {
      throw usage_error("episode " + std::to_string(i) + " exceeded the query budget");
    }
    if (o.max_lang_steps > nu) {
      throw usage_error("episode " + std::to_string(i) + " ran a language option past nu");
    }
  }
}

std::vector<MetricsRecord> batch_metrics(const std::vector<EpisodeRun>& runs) {
  std::vector<MetricsRecord> records;
  records.reserve(runs.size());
  for (const EpisodeRun& run : runs) records.push_back(to_metrics(run.outcome));
  return records;
}

void write_trajectories_jsonl(const std::string& path, const EvalSetup& setup,
                              const std::vector<EpisodeSpec>& specs,
                              const std::vector<EpisodeRun>& runs) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot open for writing: " + path);
  for (size_t i = 0; i < specs.size(); ++i) {
    json header;
    header["type"] = "episode";
    header["index"] = i;
    header["spec"] = json::parse(episode_to_json(specs[i]));
    header["method"] = to_string(setup.trigger.kind);
    header["feedback"] = to_string(setup.controller.feedback);
    header["k_allowed"] = setup.controller.k_allowed;
    header["seed"] = mix_seed(setup.base_seed, i);
    out << header.dump() << "\n";

    for (const StepEvent& e : runs[i].log) {
      json line;
      line["type"] = "step";
      line["t"] = e.t;
      line["pose"] = {{"x", e.pose.x}, {"y", e.pose.y}, {"heading", to_string(e.pose.heading)}};
      line["action"] = to_string(e.action);
      line["option"] = e.option == 0 ? "audio" : (e.option == 1 ? "language" : "gt");
      line["reward"] = e.reward;
      line["query"] = e.query_flag;
      if (e.instruction.has_value()) line["instr"] = e.instruction->tokens;
      out << line.dump() << "\n";
    }

    const EpisodeOutcome& o = runs[i].outcome;
    json summary;
    summary["type"] = "summary";
    summary["success"] = o.success;
    summary["steps"] = o.steps;
    summary["path_cells"] = o.path_cells;
    summary["actions_taken"] = o.actions_taken;
    summary["shortest_len"] = o.shortest_len;
    summary["min_actions"] = o.min_actions;
    summary["dtg"] = o.final_dtg;
    summary["sound_end"] = o.sound_end_step;
    if (o.reach_step.has_value()) summary["reach_step"] = *o.reach_step;
    summary["queries"] = o.query_steps;
    summary["reward_sum"] = o.reward_sum;
    out << summary.dump() << "\n";
  }
}

std::vector<MetricsRecord> replay_metrics(const std::string& path,
                                          const std::map<std::uint64_t, Scene>& scenes,
                                          int success_radius) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open trajectory log: " + path);

  std::vector<MetricsRecord> records;
  std::string line;
  const Scene* scene = nullptr;
  EpisodeSpec spec;
  MetricsRecord current;
  Pose pose;
  bool in_episode = false;

  auto close_episode = [&]() {
    if (!in_episode) return;
    const SemanticObject* goal = scene->object_by_id(spec.goal_object_id);
    current.dtg = geodesic_distance(*scene, pose.cell(), goal->cell);
    current.success = current.reach_step.has_value();
    records.push_back(current);
    in_episode = false;
  };

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw parse_error("trajectory line is malformed");
    std::string type = j.at("type").get<std::string>();
    if (type == "episode") {
      close_episode();
      spec = episode_from_json(j.at("spec").dump());
      auto it = scenes.find(spec.scene_seed);
      if (it == scenes.end()) throw input_error("trajectory references unknown scene");
      scene = &it->second;
      current = MetricsRecord{};
      const SemanticObject* goal = scene->object_by_id(spec.goal_object_id);
      current.shortest_len = geodesic_distance(*scene, spec.start.cell(), goal->cell);
      current.min_actions =
          static_cast<int>(shortest_action_path(*scene, spec.start, goal->cell).size());
      current.sound_end_step = spec.sound_onset + spec.sound_duration;
      pose = spec.start;
      in_episode = true;
    } else if (type == "step") {
      Pose logged{j.at("pose").at("x").get<int>(), j.at("pose").at("y").get<int>(), Heading::North};
      std::string h = j.at("pose").at("heading").get<std::string>();
      for (int k = 0; k < 4; ++k) {
        if (h == to_string(static_cast<Heading>(k))) logged.heading = static_cast<Heading>(k);
      }
      if (!(logged == pose)) throw parse_error("trajectory poses do not replay consistently");
      Action action = action_from_string(j.at("action").get<std::string>());
      if (j.at("query").get<bool>()) current.queries.push_back(j.at("t").get<int>());
      if (action == Action::Stop) {
        const SemanticObject* goal = scene->object_by_id(spec.goal_object_id);
        if (geodesic_distance(*scene, pose.cell(), goal->cell) <= success_radius) {
          current.reach_step = j.at("t").get<int>();
        }
      } else {
        current.actions_taken += 1;
      }
      Pose next = step(*scene, pose, action);
      if (action == Action::MoveForward && !(next == pose)) current.path_len += 1.0;
      pose = next;
    }
    // Summary lines are redundant with the steps; replay ignores them.
  }
  close_episode();
  return records;
}

}  // namespace avnav
