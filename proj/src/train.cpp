#include "avnav/train.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace avnav {

using nn::Mat;
using nn::Vec;

double nav_reward(double d_prev, double d_now, bool success, bool binary) {
  double progress = binary ? (d_now < d_prev ? 1.0 : 0.0) : (d_prev - d_now);
  return progress + (success ? 10.0 : 0.0) - 0.01;
}

double zeta_q(int k, int K, int nu, double r_neg) {
  if (k < K) {
    return static_cast<double>(k) * (r_neg + std::exp(-static_cast<double>(nu))) /
           static_cast<double>(nu);
  }
  return r_neg + std::exp(-static_cast<double>(k));
}

double zeta_f(int j, double tau_f, double r_f) {
  if (j > 0 && static_cast<double>(j) < tau_f) return r_f / static_cast<double>(j);
  return 0.0;
}

void gae_advantages(const std::vector<RolloutStep>& steps, double last_value, double gamma,
                    double lambda, std::vector<double>& advantages, std::vector<double>& returns) {
  const int n = static_cast<int>(steps.size());
  advantages.assign(static_cast<size_t>(n), 0.0);
  returns.assign(static_cast<size_t>(n), 0.0);
  double acc = 0.0;
  for (int t = n - 1; t >= 0; --t) {
    const RolloutStep& s = steps[static_cast<size_t>(t)];
    // Multi-time steps discount their bootstrap by gamma^duration.
    double gd = std::pow(gamma, static_cast<double>(s.duration));
    double next_value = 0.0;
    if (!s.done) {
      next_value = t == n - 1 ? last_value : steps[static_cast<size_t>(t + 1)].value;
    }
    double not_done = s.done ? 0.0 : 1.0;
    double delta = s.reward + gd * next_value * not_done - s.value;
    acc = delta + gd * lambda * not_done * acc;
    advantages[static_cast<size_t>(t)] = acc;
    returns[static_cast<size_t>(t)] = acc + s.value;
  }
}

namespace {

struct AdvantageSets {
  std::vector<std::vector<double>> adv;
  std::vector<std::vector<double>> ret;
  int total_steps = 0;
};

AdvantageSets compute_advantages(const std::vector<const RolloutCollector*>& buffers,
                                 const OptimConfig& cfg) {
  AdvantageSets out;
  out.adv.resize(buffers.size());
  out.ret.resize(buffers.size());
  for (size_t b = 0; b < buffers.size(); ++b) {
    gae_advantages(buffers[b]->steps, buffers[b]->last_value, cfg.gamma, cfg.gae_lambda,
                   out.adv[b], out.ret[b]);
    out.total_steps += static_cast<int>(buffers[b]->steps.size());
  }
  if (out.total_steps == 0) throw training_error("ppo_update: empty rollout buffer");
  if (cfg.normalize_advantages) {
    double mean = 0.0;
    for (const auto& a : out.adv) {
      for (double v : a) mean += v;
    }
    mean /= out.total_steps;
    double var = 0.0;
    for (const auto& a : out.adv) {
      for (double v : a) var += (v - mean) * (v - mean);
    }
    double std = std::sqrt(var / out.total_steps) + 1e-8;
    for (auto& a : out.adv) {
      for (double& v : a) v = (v - mean) / std;
    }
  }
  return out;
}

double ppo_epoch(AudioPolicyNet& net, const std::vector<const RolloutCollector*>& buffers,
                 const OptimConfig& cfg, const AdvantageSets& sets, bool backward,
                 PpoStats* stats) {
  const double inv_n = 1.0 / static_cast<double>(sets.total_steps);
  double total_loss = 0.0;
  int clipped = 0;
  if (stats != nullptr) {
    stats->policy_loss = 0.0;
    stats->value_loss = 0.0;
    stats->entropy = 0.0;
  }

  for (size_t b = 0; b < buffers.size(); ++b) {
    const RolloutCollector& buffer = *buffers[b];
    // Shared per-episode projections: compute once per tape, route item
    // gradients back through the encoder afterwards.
    std::vector<Mat> proj(buffer.tapes.size());
    std::vector<Mat> dproj(buffer.tapes.size());
    for (size_t tp = 0; tp < buffer.tapes.size(); ++tp) {
      const EpisodeTape& tape = buffer.tapes[tp];
      proj[tp].resize(net.cfg.d_model, static_cast<Eigen::Index>(tape.obs.size()));
      for (size_t i = 0; i < tape.obs.size(); ++i) {
        proj[tp].col(static_cast<Eigen::Index>(i)) = net.project(tape.obs[i]);
      }
      if (backward) dproj[tp] = Mat::Zero(proj[tp].rows(), proj[tp].cols());
    }

    for (size_t i = 0; i < buffer.steps.size(); ++i) {
      const RolloutStep& s = buffer.steps[i];
      double advantage = sets.adv[b][i];
      double target = sets.ret[b][i];

      int width = s.index - s.win_begin + 1;
      auto items = proj[static_cast<size_t>(s.tape_id)].middleCols(s.win_begin, width);
      AudioPolicyNet::Trace trace;
      net.decide(items, s.goal_in, trace);

      double logp_new = std::log(std::max(trace.probs[s.action], 1e-12));
      double ratio = std::exp(logp_new - s.logp);
      double s1 = ratio * advantage;
      double clamped = std::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip);
      double s2 = clamped * advantage;
      double policy_loss = -std::min(s1, s2);
      if (ratio < 1.0 - cfg.clip || ratio > 1.0 + cfg.clip) ++clipped;

      double entropy = 0.0;
      for (Eigen::Index a = 0; a < trace.probs.size(); ++a) {
        entropy -= trace.probs[a] * std::log(std::max(trace.probs[a], 1e-12));
      }
      double verr = trace.value - target;
      double value_loss = 0.5 * verr * verr;
      total_loss += policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy;
      if (stats != nullptr) {
        stats->policy_loss += policy_loss;
        stats->value_loss += value_loss;
        stats->entropy += entropy;
      }

      if (!backward) continue;

      // Policy surrogate gradient flows only through the branch the min picked
      // (the clipped branch is constant in the parameters outside the window).
      Vec dlogits = Vec::Zero(trace.probs.size());
      bool unclipped_active = -s1 >= -s2;
      if (unclipped_active || (ratio >= 1.0 - cfg.clip && ratio <= 1.0 + cfg.clip)) {
        Vec dlogp = -trace.probs;
        dlogp[s.action] += 1.0;
        dlogits = (-advantage * ratio) * dlogp;
      }
      Vec dp = Vec::Zero(trace.probs.size());
      for (Eigen::Index a = 0; a < trace.probs.size(); ++a) {
        dp[a] = -(std::log(std::max(trace.probs[a], 1e-12)) + 1.0);
      }
      dlogits += -cfg.entropy_coef * nn::softmax_backward(trace.probs, dp);
      double dvalue = cfg.value_coef * verr;

      auto ditems = dproj[static_cast<size_t>(s.tape_id)].middleCols(s.win_begin, width);
      net.decide_backward(items, trace, dlogits * inv_n, dvalue * inv_n, ditems);
    }

    if (backward && net.encoder_trainable) {
      for (size_t tp = 0; tp < buffer.tapes.size(); ++tp) {
        const EpisodeTape& tape = buffer.tapes[tp];
        for (size_t i = 0; i < tape.obs.size(); ++i) {
          net.encoder_backward(tape.obs[i], proj[tp].col(static_cast<Eigen::Index>(i)),
                               dproj[tp].col(static_cast<Eigen::Index>(i)));
        }
      }
    }
  }

  if (stats != nullptr) {
    stats->policy_loss *= inv_n;
    stats->value_loss *= inv_n;
    stats->entropy *= inv_n;
    stats->clip_fraction = static_cast<double>(clipped) * inv_n;
  }
  return total_loss * inv_n;
}

}  // namespace

PpoStats ppo_update(AudioPolicyNet& net, const std::vector<const RolloutCollector*>& buffers,
                    const OptimConfig& cfg, nn::Adam& adam) {
  AdvantageSets sets = compute_advantages(buffers, cfg);

  auto refs = net.params();
  PpoStats stats;
  double mean_reward = 0.0;
  for (const RolloutCollector* b : buffers) {
    for (const auto& s : b->steps) mean_reward += s.reward;
  }
  stats.mean_reward = mean_reward / sets.total_steps;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    nn::zero_grads(refs);
    double loss = ppo_epoch(net, buffers, cfg, sets, true, &stats);
    if (!std::isfinite(loss) || !nn::grads_finite(refs)) {
      std::ostringstream msg;
      msg << "ppo_update: non-finite loss (policy=" << stats.policy_loss
          << ", value=" << stats.value_loss << ", grad_norm=" << nn::grad_norm(refs) << ")";
      throw training_error(msg.str());
    }
    nn::clip_grad_norm(refs, cfg.max_grad_norm);
    adam.step(refs, cfg.lr);
  }
  return stats;
}

double ppo_epoch_loss(AudioPolicyNet& net, const std::vector<const RolloutCollector*>& buffers,
                      const OptimConfig& cfg, bool backward) {
  AdvantageSets sets = compute_advantages(buffers, cfg);
  if (backward) nn::zero_grads(net.params());
  return ppo_epoch(net, buffers, cfg, sets, backward, nullptr);
}

PpoStats ppo_update(AudioPolicyNet& net, const RolloutCollector& buffer, const OptimConfig& cfg,
                    nn::Adam& adam) {
  return ppo_update(net, std::vector<const RolloutCollector*>{&buffer}, cfg, adam);
}

}  // namespace avnav
