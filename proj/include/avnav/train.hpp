#pragma once

#include <string>
#include <vector>

#include "avnav/common.hpp"
#include "avnav/policy.hpp"

namespace avnav {

// Per-step navigation reward: distance progress + success bonus - step cost.
// The binary switch pays +1 for any strict progress instead of the
// proportional amount.
double nav_reward(double d_prev, double d_now, bool success, bool binary = false);

// Per-query penalty; k is the 1-based query index within the episode.
double zeta_q(int k, int K, int nu, double r_neg);

// Query-frequency penalty; j counts steps since the previous query
// (j = 0 marks the first query of an episode and carries no penalty).
double zeta_f(int j, double tau_f, double r_f);

struct OptimConfig {
  double lr = 2.5e-4;        // pi_g / pi_q policy learning rate
  double lr_goal = 1e-3;     // goal descriptor network
  double lr_lang = 1e-4;     // pi_l imitation
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip = 0.2;
  int epochs = 2;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double max_grad_norm = 0.5;
  int rollout_steps = 150;
  bool normalize_advantages = true;
};

// Generalized advantage estimation over possibly multi-time steps: each
// entry's bootstrap discount is gamma^duration, so a whole language option
// collapses into one decision-step reward.
void gae_advantages(const std::vector<RolloutStep>& steps, double last_value, double gamma,
                    double lambda, std::vector<double>& advantages, std::vector<double>& returns);

struct PpoStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double mean_reward = 0.0;
};

// Clipped-surrogate update (epochs passes over the full buffer). Throws
// training_error with diagnostics when the loss turns non-finite. Multiple
// buffers are worker shards, each bootstrapped with its own last_value.
PpoStats ppo_update(AudioPolicyNet& net, const std::vector<const RolloutCollector*>& buffers,
                    const OptimConfig& cfg, nn::Adam& adam);

PpoStats ppo_update(AudioPolicyNet& net, const RolloutCollector& buffer, const OptimConfig& cfg,
                    nn::Adam& adam);

// One epoch's mean surrogate loss; gradients accumulate when backward is set.
// Exposed so gradient checks can diff the exact training objective.
double ppo_epoch_loss(AudioPolicyNet& net, const std::vector<const RolloutCollector*>& buffers,
                      const OptimConfig& cfg, bool backward);

}  // namespace avnav
