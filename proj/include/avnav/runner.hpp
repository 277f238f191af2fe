#pragma once

#include <map>
#include <string>
#include <vector>

#include "avnav/common.hpp"
#include "avnav/metrics.hpp"
#include "avnav/policy.hpp"

namespace avnav {

enum class ExecMode { Serial, OpenMP };

// Read-shared context for a batch of evaluation episodes.
struct EvalSetup {
  const std::map<std::uint64_t, Scene>* scenes = nullptr;
  const SplitConfig* split = nullptr;
  PolicyBundle bundle;
  ControllerConfig controller;
  TriggerConfig trigger;
  SpeakerConfig speaker;
  const Vocabulary* vocab = nullptr;
  AudioParams audio;
  ObsLayout layout;
  std::uint64_t base_seed = 0;
};

struct EpisodeRun {
  EpisodeOutcome outcome;
  std::vector<StepEvent> log;
};

// Episode i always runs with rng stream mix(base_seed, i) and lands in slot i,
// so results are identical across thread counts and both execution modes.
std::vector<EpisodeRun> run_episode_batch(const EvalSetup& setup,
                                          const std::vector<EpisodeSpec>& specs, ExecMode mode,
                                          bool keep_logs);

// Budget discipline over a finished batch; throws on any violation.
void assert_budgets(const std::vector<EpisodeRun>& runs, int k_allowed, int nu);

std::vector<MetricsRecord> batch_metrics(const std::vector<EpisodeRun>& runs);

// Trajectory logs: one episode header line, one line per step, one summary.
void write_trajectories_jsonl(const std::string& path, const EvalSetup& setup,
                              const std::vector<EpisodeSpec>& specs,
                              const std::vector<EpisodeRun>& runs);

// Recomputes per-episode metrics from a trajectory log alone (plus scenes).
std::vector<MetricsRecord> replay_metrics(const std::string& path,
                                          const std::map<std::uint64_t, Scene>& scenes,
                                          int success_radius = 1);

}  // namespace avnav
