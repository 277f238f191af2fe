#include "avnav/policy.hpp"

#include <algorithm>
#include <cmath>

#include "avnav/train.hpp"

namespace avnav {

using nn::Mat;
using nn::Vec;

AudioPolicyNet::AudioPolicyNet(const AudioPolicyConfig& config, Rng& rng)
    : cfg(config),
      enc(config.d_model, config.obs_dim, rng),
      wq(Mat::Zero(config.d_model, config.goal_dim)),
      gwq(Mat::Zero(config.d_model, config.goal_dim)),
      attn(config.d_model, config.d_model, rng),
      fuse(config.d_state, config.d_model + config.goal_dim, rng),
      actor(config.n_actions, config.d_state, rng),
      critic(1, config.d_state, rng) {
  double s = nn::uniform_init_scale(cfg.goal_dim, cfg.d_model);
  std::uniform_real_distribution<double> u(-s, s);
  for (Eigen::Index i = 0; i < wq.rows(); ++i) {
    for (Eigen::Index j = 0; j < wq.cols(); ++j) wq(i, j) = u(rng);
  }
}

std::vector<nn::ParamRef> AudioPolicyNet::params() {
  std::vector<nn::ParamRef> out;
  enc.collect("enc", encoder_trainable, out);
  out.push_back({"wq", wq.data(), gwq.data(), wq.size(), wq.rows(), wq.cols(), true});
  attn.collect("attn", true, out);
  fuse.collect("fuse", true, out);
  actor.collect("actor", true, out);
  critic.collect("critic", true, out);
  return out;
}

void AudioPolicyNet::zero_grad() { nn::zero_grads(params()); }

Vec AudioPolicyNet::project(const Vec& e_obs) const {
  return enc.forward(e_obs).array().tanh();
}

void AudioPolicyNet::decide(Eigen::Ref<const Mat> items, const Vec& goal, Trace& trace) const {
  trace.goal = goal;
  Vec q = wq * goal;
  trace.pooled = attn.forward(q, items, trace.tr);
  trace.fuse_in.resize(cfg.d_model + cfg.goal_dim);
  trace.fuse_in << trace.pooled, goal;
  trace.state = fuse.forward(trace.fuse_in).array().tanh();
  trace.probs = nn::softmax(actor.forward(trace.state));
  trace.value = critic.forward(trace.state)[0];
}

void AudioPolicyNet::decide_backward(Eigen::Ref<const Mat> items, const Trace& trace,
                                     const Vec& dlogits, double dvalue, Eigen::Ref<Mat> ditems) {
  Vec dstate = actor.backward(trace.state, dlogits);
  if (dvalue != 0.0) {
    Vec dv(1);
    dv[0] = dvalue;
    dstate += critic.backward(trace.state, dv);
  }
  Vec dpre = dstate.array() * (1.0 - trace.state.array().square());
  Vec dfuse_in = fuse.backward(trace.fuse_in, dpre);
  Vec dpooled = dfuse_in.head(cfg.d_model);
  Vec dq = attn.backward(items, trace.tr, dpooled, ditems);
  gwq.noalias() += dq * trace.goal.transpose();
}

void AudioPolicyNet::encoder_backward(const Vec& e_obs, const Vec& projection, const Vec& dproj) {
  Vec dpre = dproj.array() * (1.0 - projection.array().square());
  enc.backward(e_obs, dpre);
}

static Mat window_from_memory(const AudioPolicyNet& net, const Memory& memory, const Vec& e_obs) {
  Mat items(net.cfg.d_model, memory.size() + 1);
  for (int i = 0; i < memory.size(); ++i) items.col(i) = net.project(memory[i]);
  items.col(memory.size()) = net.project(e_obs);
  return items;
}

std::pair<Vec, double> audio_policy_step(const AudioPolicyNet& net, const Memory& memory,
                                         const Vec& e_obs, const Vec& goal_in) {
  Mat items = window_from_memory(net, memory, e_obs);
  AudioPolicyNet::Trace trace;
  net.decide(items, goal_in, trace);
  return {trace.probs, trace.value};
}

std::pair<Vec, double> query_policy_step(const AudioPolicyNet& net, const Memory& memory,
                                         const Vec& e_obs, const Vec& goal_in, bool mask_query) {
  auto [probs, value] = audio_policy_step(net, memory, e_obs, goal_in);
  if (mask_query) {
    probs[1] = 0.0;
    probs /= probs.sum();
  }
  return {probs, value};
}

bool mu_trigger(const Vec& action_probs, double threshold) {
  double top1 = -1.0, top2 = -1.0;
  for (Eigen::Index i = 0; i < action_probs.size(); ++i) {
    double p = action_probs[i];
    if (p > top1) {
      top2 = top1;
      top1 = p;
    } else if (p > top2) {
      top2 = p;
    }
  }
  return (top1 - top2) <= threshold + 1e-12;
}

const char* to_string(TriggerKind k) {
  switch (k) {
    case TriggerKind::None: return "none";
    case TriggerKind::Learned: return "learned";
    case TriggerKind::Random: return "random";
    case TriggerKind::Uniform: return "uniform";
    case TriggerKind::ModelUncertainty: return "mu";
  }
  return "?";
}

TriggerKind trigger_from_string(const std::string& s) {
  if (s == "none") return TriggerKind::None;
  if (s == "learned") return TriggerKind::Learned;
  if (s == "random") return TriggerKind::Random;
  if (s == "uniform") return TriggerKind::Uniform;
  if (s == "mu") return TriggerKind::ModelUncertainty;
  throw config_error("unknown trigger: " + s);
}

Controller::Controller(const Scene& scene, const EpisodeSpec& spec, const SplitConfig& split,
                       const PolicyBundle& bundle, const ControllerConfig& cfg,
                       const AudioParams& audio, const ObsLayout& layout,
                       const TriggerConfig& trigger, const SpeakerConfig& speaker,
                       const Vocabulary& vocab, std::uint64_t seed)
    : scene_(&scene),
      spec_(&spec),
      split_(&split),
      bundle_(bundle),
      cfg_(cfg),
      trigger_(trigger),
      speaker_(speaker),
      vocab_(&vocab),
      cache_(scene),
      rng_(mix_seed(seed, 0xc0117)),
      memory_(cfg.memory_size) {
  ctx_.scene = scene_;
  ctx_.spec = spec_;
  ctx_.split = split_;
  ctx_.audio = audio;
  ctx_.layout = layout;
  ctx_.cache = &cache_;

  const SemanticObject* goal_obj = scene.object_by_id(spec.goal_object_id);
  if (goal_obj == nullptr) throw input_error("episode goal object missing from scene");
  goal_cell_ = goal_obj->cell;
  goal_field_ = distance_field(scene, goal_cell_);

  start_ = spec.start;
  pose_ = spec.start;
  prev_pose_ = spec.start;
  outcome_.shortest_len = static_cast<double>(goal_field_[static_cast<size_t>(pose_.y) * scene.width + pose_.x]);
  outcome_.min_actions = static_cast<int>(shortest_action_path(scene, pose_, goal_cell_).size());
  outcome_.sound_end_step = spec.sound_onset + spec.sound_duration;

  if (trigger_.kind == TriggerKind::Random && cfg_.k_allowed > 0) {
    std::vector<int> steps(static_cast<size_t>(trigger_.random_window));
    for (int i = 0; i < trigger_.random_window; ++i) steps[static_cast<size_t>(i)] = i;
    std::shuffle(steps.begin(), steps.end(), rng_);
    int n = std::min(cfg_.k_allowed, trigger_.random_window);
    random_steps_.assign(steps.begin(), steps.begin() + n);
    std::sort(random_steps_.begin(), random_steps_.end());
  }
}

void Controller::ensure_observed() {
  if (observed_) return;
  obs_ = encode_observation(ctx_, pose_, start_, t_, prev_action_, rng_);
  GoalDescriptor estimate = bundle_.estimator != nullptr
                                ? bundle_.estimator->estimate(obs_.audio)
                                : uniform_goal(static_cast<int>(split_->signatures.rows()));
  bool audible = obs_.audio.audible && bundle_.estimator != nullptr;
  if (t_ == 0) {
    goal_ = audible ? estimate : uniform_goal(static_cast<int>(split_->signatures.rows()));
  } else {
    goal_ = fuse_goal(goal_, estimate, prev_pose_, pose_, audible, cfg_.lambda);
  }
  if (regressor_samples_ok()) {
    AudioSample sample;
    sample.audio = obs_.audio;
    sample.location = to_agent_frame(pose_, goal_cell_);
    sample.category = scene_->object_by_id(spec_->goal_object_id)->category;
    regressor_samples->push_back(std::move(sample));
  }
  observed_ = true;
  pi_g_cached_.reset();
}

bool Controller::regressor_samples_ok() const {
  // Only audible single-source steps supervise the location regressor.
  return regressor_samples != nullptr && obs_.audio.audible && !spec_->distractor.has_value();
}

nn::Mat Controller::window(const std::deque<Vec>& projections, const Vec& current) const {
  int m = cfg_.use_memory ? static_cast<int>(projections.size()) : 0;
  Mat items(current.size(), m + 1);
  for (int i = 0; i < m; ++i) items.col(i) = projections[static_cast<size_t>(i)];
  items.col(m) = current;
  return items;
}

nn::Vec Controller::pi_q_goal_input() const {
  Vec base = goal_input(goal_, spec_->target_onehot, static_cast<int>(split_->signatures.rows()));
  Vec out(base.size() + 2);
  double k_feat = static_cast<double>(queries_) / std::max(1, cfg_.k_soft);
  double j_feat = last_query_step_ < 0
                      ? 1.0
                      : std::min(50.0, static_cast<double>(t_ - last_query_step_)) / 50.0;
  out << base, std::min(k_feat, 3.0), j_feat;
  return out;
}

double Controller::exec_primitive(Action action, int option, bool query_flag,
                                  const std::optional<Instruction>& instr, double zeta) {
  int d_prev = goal_field_[static_cast<size_t>(pose_.y) * scene_->width + pose_.x];
  Pose next = avnav::step(*scene_, pose_, action);
  int d_now = goal_field_[static_cast<size_t>(next.y) * scene_->width + next.x];
  bool success_now = action == Action::Stop && d_prev <= cfg_.success_radius;

  double reward = nav_reward(d_prev, d_now, success_now, cfg_.reward_binary) + zeta;

  if (log != nullptr) {
    log->push_back({t_, pose_, action, option, reward, query_flag, instr});
  }

  // The decision consumed this step's observation; only now does it join the
  // memory so the next window is memory plus the fresh observation.
  memory_.push(obs_.flat);
  if (bundle_.pi_g != nullptr) {
    proj_g_.push_back(bundle_.pi_g->project(obs_.flat));
    while (static_cast<int>(proj_g_.size()) > cfg_.memory_size) proj_g_.pop_front();
  }
  if (bundle_.pi_q != nullptr) {
    proj_q_.push_back(bundle_.pi_q->project(obs_.flat));
    while (static_cast<int>(proj_q_.size()) > cfg_.memory_size) proj_q_.pop_front();
  }
  if (collector != nullptr && collector_tape >= 0) {
    EpisodeTape& tape = collector->tapes[static_cast<size_t>(collector_tape)];
    tape.obs.push_back(obs_.flat);
    tape.goal_in.push_back(goal_input(goal_, spec_->target_onehot,
                                      static_cast<int>(split_->signatures.rows())));
  }

  if (action == Action::MoveForward && next.cell() != pose_.cell()) outcome_.path_cells += 1.0;
  if (action != Action::Stop) outcome_.actions_taken += 1;
  outcome_.reward_sum += reward;

  prev_pose_ = pose_;
  pose_ = next;
  prev_action_ = static_cast<int>(action);
  t_ += 1;
  observed_ = false;
  outcome_.steps = t_;

  if (success_now) {
    outcome_.success = true;
    outcome_.reach_step = t_ - 1;
  }
  if (action == Action::Stop || t_ >= cfg_.step_cap) done_ = true;
  return reward;
}

bool Controller::trigger_fires() {
  bool capped = cfg_.k_allowed >= 0 && queries_ >= cfg_.k_allowed;
  switch (trigger_.kind) {
    case TriggerKind::None:
      return false;
    case TriggerKind::Random:
      return !capped &&
             std::find(random_steps_.begin(), random_steps_.end(), t_) != random_steps_.end();
    case TriggerKind::Uniform:
      return !capped && t_ > 0 && t_ % trigger_.uniform_period == 0;
    case TriggerKind::ModelUncertainty: {
      if (capped) return false;
      Mat items = window(proj_g_, bundle_.pi_g->project(obs_.flat));
      pi_g_cached_.emplace();
      bundle_.pi_g->decide(items, goal_input(goal_, spec_->target_onehot,
                                             static_cast<int>(split_->signatures.rows())),
                           *pi_g_cached_);
      return mu_trigger(pi_g_cached_->probs, trigger_.mu_threshold);
    }
    case TriggerKind::Learned:
      break;  // handled in step() so the log-prob can be recorded
  }
  return false;
}

void Controller::step() {
  if (done_) throw usage_error("controller stepped after the episode ended");
  ensure_observed();

  bool query = false;
  double q_logp = 0.0, q_value = 0.0;
  if (trigger_.kind == TriggerKind::Learned) {
    Mat items = window(proj_q_, bundle_.pi_q->project(obs_.flat));
    AudioPolicyNet::Trace trace;
    bundle_.pi_q->decide(items, pi_q_goal_input(), trace);
    Vec probs = trace.probs;
    bool capped = cfg_.k_allowed >= 0 && queries_ >= cfg_.k_allowed;
    if (capped) {
      probs[1] = 0.0;
      probs /= probs.sum();
    }
    int choice = nn::sample_categorical(probs, rng_);
    query = choice == 1;
    q_logp = std::log(std::max(probs[choice], 1e-12));
    q_value = trace.value;
  } else {
    query = trigger_fires();
  }

  int decision_index = -1;
  int win_begin = 0;
  if (collector != nullptr && collect_mode == CollectMode::PiQ && collector_tape >= 0) {
    decision_index = static_cast<int>(collector->tapes[static_cast<size_t>(collector_tape)].obs.size());
    win_begin = cfg_.use_memory ? std::max(0, decision_index - cfg_.memory_size) : decision_index;
  }
  Vec q_goal_in = trigger_.kind == TriggerKind::Learned ? pi_q_goal_input() : Vec();

  double decision_reward = 0.0;
  int duration = 0;

  if (query) {
    queries_ += 1;
    int j = last_query_step_ < 0 ? 0 : t_ - last_query_step_;
    double zeta = zeta_q(queries_, cfg_.k_soft, cfg_.nu, cfg_.r_neg) + zeta_f(j, cfg_.tau_f, cfg_.r_f);
    last_query_step_ = t_;
    outcome_.query_steps.push_back(t_);

    SpeakerConfig speaker = speaker_;
    speaker.rng_seed = rng_();
    Feedback fb = answer_query(*scene_, pose_, goal_cell_, cfg_.feedback, speaker, *vocab_,
                               cfg_.segment_n, cfg_.nu);

    if (!fb.is_language) {
      for (int i = 0; i < static_cast<int>(fb.actions.size()) && !done_; ++i) {
        ensure_observed();
        double r = exec_primitive(fb.actions[static_cast<size_t>(i)], 2, i == 0, std::nullopt,
                                  i == 0 ? zeta : 0.0);
        decision_reward += std::pow(cfg_.gamma_option, i) * r;
        ++duration;
      }
    } else {
      if (finetune_pairs != nullptr) {
        LangExample pair;
        pair.scene = scene_;
        pair.split = split_;
        pair.spec = *spec_;
        pair.start = pose_;
        pair.episode_start = start_;
        pair.t0 = t_;
        pair.prev_action = prev_action_;
        pair.goal = goal_cell_;
        pair.g0 = goal_;
        pair.instruction = fb.instruction;
        pair.noise_seed = rng_();
        finetune_pairs->push_back(std::move(pair));
      }
      Vec instr_vec;
      if (!lang_override) instr_vec = embed_instruction(*bundle_.pi_l, fb.instruction);
      std::vector<Vec> history;
      int lang_steps = 0;
      for (int i = 0; i < cfg_.nu && !done_; ++i) {
        ensure_observed();
        int a;
        if (lang_override) {
          a = static_cast<int>(lang_override(fb.instruction, i));
        } else {
          Vec g_in = goal_input(goal_, spec_->target_onehot,
                                static_cast<int>(split_->signatures.rows()));
          LangStepTrace trace;
          lang_step(*bundle_.pi_l, obs_.flat, g_in, instr_vec, history, trace);
          history.push_back(trace.belief);
          while (static_cast<int>(history.size()) > bundle_.pi_l->cfg.history) {
            history.erase(history.begin());
          }
          a = cfg_.sample_actions ? nn::sample_categorical(trace.probs, rng_)
                                  : nn::argmax(trace.probs);
        }
        double r = exec_primitive(static_cast<Action>(a), 1, i == 0,
                                  i == 0 ? std::optional<Instruction>(fb.instruction) : std::nullopt,
                                  i == 0 ? zeta : 0.0);
        decision_reward += std::pow(cfg_.gamma_option, i) * r;
        ++duration;
        ++lang_steps;
        if (static_cast<Action>(a) == Action::Stop) break;  // option early-stop
      }
      outcome_.max_lang_steps = std::max(outcome_.max_lang_steps, lang_steps);
    }
  } else {
    Vec g_in = goal_input(goal_, spec_->target_onehot, static_cast<int>(split_->signatures.rows()));
    AudioPolicyNet::Trace trace;
    if (pi_g_cached_.has_value()) {
      trace = *pi_g_cached_;  // MU trigger already ran pi_g this step
    } else {
      Mat items = window(proj_g_, bundle_.pi_g->project(obs_.flat));
      bundle_.pi_g->decide(items, g_in, trace);
    }
    int a = cfg_.sample_actions ? nn::sample_categorical(trace.probs, rng_)
                                : nn::argmax(trace.probs);
    double logp = std::log(std::max(trace.probs[a], 1e-12));

    if (collector != nullptr && collect_mode == CollectMode::PiG && collector_tape >= 0) {
      int index = static_cast<int>(collector->tapes[static_cast<size_t>(collector_tape)].obs.size());
      int begin = cfg_.use_memory ? std::max(0, index - cfg_.memory_size) : index;
      RolloutStep rs;
      rs.tape_id = collector_tape;
      rs.index = index;
      rs.win_begin = begin;
      rs.goal_in = g_in;
      rs.action = a;
      rs.logp = logp;
      rs.value = trace.value;
      rs.duration = 1;
      double r = exec_primitive(static_cast<Action>(a), 0, false, std::nullopt, 0.0);
      rs.reward = r;
      rs.done = done_;
      collector->steps.push_back(std::move(rs));
      return;
    }
    decision_reward = exec_primitive(static_cast<Action>(a), 0, false, std::nullopt, 0.0);
    duration = 1;
  }

  if (collector != nullptr && collect_mode == CollectMode::PiQ && decision_index >= 0) {
    RolloutStep rs;
    rs.tape_id = collector_tape;
    rs.index = decision_index;
    rs.win_begin = win_begin;
    rs.goal_in = q_goal_in;
    rs.action = query ? 1 : 0;
    rs.logp = q_logp;
    rs.value = q_value;
    rs.reward = decision_reward;
    rs.duration = std::max(1, duration);
    rs.done = done_;
    collector->steps.push_back(std::move(rs));
  }
}

void Controller::run() {
  while (!done_) step();
}

double Controller::state_value(CollectMode mode) {
  if (done_) return 0.0;
  ensure_observed();
  AudioPolicyNet::Trace trace;
  if (mode == CollectMode::PiQ) {
    Mat items = window(proj_q_, bundle_.pi_q->project(obs_.flat));
    bundle_.pi_q->decide(items, pi_q_goal_input(), trace);
  } else {
    Mat items = window(proj_g_, bundle_.pi_g->project(obs_.flat));
    bundle_.pi_g->decide(items, goal_input(goal_, spec_->target_onehot,
                                           static_cast<int>(split_->signatures.rows())),
                         trace);
  }
  return trace.value;
}

EpisodeOutcome Controller::finish() {
  outcome_.final_dtg =
      static_cast<double>(goal_field_[static_cast<size_t>(pose_.y) * scene_->width + pose_.x]);
  return outcome_;
}

}  // namespace avnav
