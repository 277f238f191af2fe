#pragma once

#include <deque>
#include <functional>
#include <optional>
#include <vector>

#include "avnav/common.hpp"
#include "avnav/episode.hpp"
#include "avnav/language.hpp"
#include "avnav/nn.hpp"
#include "avnav/oracle.hpp"
#include "avnav/percept.hpp"
#include "avnav/world.hpp"

namespace avnav {

struct AudioPolicyConfig {
  int obs_dim = 0;
  int goal_dim = 0;
  int d_model = 48;
  int d_state = 64;
  int n_actions = kNumActions;  // 2 for pi_q: {continue, query}
};

// Shared actor-critic architecture of pi_g and pi_q: observation encoder,
// goal-queried attention pooling over the memory, fusion trunk, linear heads.
struct AudioPolicyNet {
  AudioPolicyConfig cfg;
  nn::Linear enc;          // observation encoder (frozen in stage 2)
  nn::Mat wq, gwq;         // query projection of the goal descriptor
  nn::AttentionPool attn;
  nn::Linear fuse;         // (d_model + goal_dim) -> d_state
  nn::Linear actor;
  nn::Linear critic;
  bool encoder_trainable = true;

  AudioPolicyNet() = default;
  AudioPolicyNet(const AudioPolicyConfig& cfg, Rng& rng);
  std::vector<nn::ParamRef> params();
  void zero_grad();

  nn::Vec project(const nn::Vec& e_obs) const;  // tanh encoder output

  struct Trace {
    nn::AttnTrace tr;
    nn::Vec goal;
    nn::Vec pooled;
    nn::Vec fuse_in;
    nn::Vec state;
    nn::Vec probs;
    double value = 0.0;
  };
  // items: d_model x m matrix of projections (memory window plus current).
  void decide(Eigen::Ref<const nn::Mat> items, const nn::Vec& goal, Trace& trace) const;
  // Accumulates parameter grads and d(items); encoder backward is separate.
  void decide_backward(Eigen::Ref<const nn::Mat> items, const Trace& trace,
                       const nn::Vec& dlogits, double dvalue, Eigen::Ref<nn::Mat> ditems);
  // d(e_obs) path for one projected item given its post-tanh projection.
  void encoder_backward(const nn::Vec& e_obs, const nn::Vec& projection, const nn::Vec& dproj);
};

// Spec-level entry points; the controller uses cached projections instead.
std::pair<nn::Vec, double> audio_policy_step(const AudioPolicyNet& net, const Memory& memory,
                                             const nn::Vec& e_obs, const nn::Vec& goal_in);
// mask_query forces the query probability to zero and renormalizes.
std::pair<nn::Vec, double> query_policy_step(const AudioPolicyNet& net, const Memory& memory,
                                             const nn::Vec& e_obs, const nn::Vec& goal_in,
                                             bool mask_query);

// Model-uncertainty trigger: top-2 action probability gap at or below threshold.
bool mu_trigger(const nn::Vec& action_probs, double threshold);

enum class TriggerKind { None, Learned, Random, Uniform, ModelUncertainty };
const char* to_string(TriggerKind k);
TriggerKind trigger_from_string(const std::string& s);

struct TriggerConfig {
  TriggerKind kind = TriggerKind::None;
  int random_window = 50;   // Random: queries within the first 50 steps
  int uniform_period = 15;  // Uniform: every 15 steps
  double mu_threshold = 0.1;
};

struct ControllerConfig {
  int nu = 3;
  int k_allowed = 3;  // evaluation cap; -1 disables the hard mask (training)
  int k_soft = 3;     // K in the zeta_q formula
  double tau_f = 10.0;
  double r_neg = -1.2;
  double r_f = -0.5;
  int success_radius = 1;
  int step_cap = 500;
  int memory_size = 150;
  bool use_memory = true;  // stage-1 pi_g training turns this off
  double lambda = 0.5;
  int segment_n = 4;
  bool sample_actions = true;  // sample vs argmax for pi_g / pi_l primitives
  bool reward_binary = false;  // +1 per step of progress instead of proportional
  double gamma_option = 0.99;  // discounts option rewards onto the decision step
  FeedbackMode feedback = FeedbackMode::Language;
};

struct PolicyBundle {
  AudioPolicyNet* pi_g = nullptr;
  AudioPolicyNet* pi_q = nullptr;  // only needed by the Learned trigger
  LangPolicyNet* pi_l = nullptr;   // only needed for language feedback
  GoalEstimator* estimator = nullptr;
};

// One logged primitive step.
struct StepEvent {
  int t = 0;
  Pose pose;  // before the action
  Action action = Action::Stop;
  int option = 0;  // 0 audio-goal, 1 language, 2 gt-actions
  double reward = 0.0;
  bool query_flag = false;
  std::optional<Instruction> instruction;
};

// Per-episode raw observation tape for gradient recomputation.
struct EpisodeTape {
  std::vector<nn::Vec> obs;
  std::vector<nn::Vec> goal_in;  // pi_g goal input per step
};

struct RolloutStep {
  int tape_id = 0;
  int index = 0;       // tape position of the decision observation
  int win_begin = 0;   // attention window [win_begin, index]
  nn::Vec goal_in;     // goal input seen by the updated net
  int action = 0;
  double logp = 0.0;
  double value = 0.0;
  double reward = 0.0;
  int duration = 1;    // primitive steps spanned (nu for language options)
  bool done = false;
};

struct RolloutCollector {
  std::vector<EpisodeTape> tapes;
  std::vector<RolloutStep> steps;
  double last_value = 0.0;  // bootstrap value when the rollout is truncated
  void clear() {
    tapes.clear();
    steps.clear();
    last_value = 0.0;
  }
};

enum class CollectMode { None, PiG, PiQ };

struct EpisodeOutcome {
  bool success = false;
  int steps = 0;
  double path_cells = 0.0;
  int actions_taken = 0;
  double shortest_len = 0.0;
  int min_actions = 0;
  double final_dtg = 0.0;
  int sound_end_step = 0;
  std::optional<int> reach_step;
  std::vector<int> query_steps;
  int max_lang_steps = 0;  // longest language option actually executed
  double reward_sum = 0.0;
};

// Drives one episode as a semi-MDP: each step() call makes one high-level
// decision and executes one primitive step (xi_g) or a whole option (xi_l).
class Controller {
 public:
  Controller(const Scene& scene, const EpisodeSpec& spec, const SplitConfig& split,
             const PolicyBundle& bundle, const ControllerConfig& cfg, const AudioParams& audio,
             const ObsLayout& layout, const TriggerConfig& trigger, const SpeakerConfig& speaker,
             const Vocabulary& vocab, std::uint64_t seed);

  bool done() const { return done_; }
  void step();            // throws usage_error on a finished episode
  void run();             // until done
  EpisodeOutcome finish();

  // Optional hooks, all owned by the caller.
  RolloutCollector* collector = nullptr;
  CollectMode collect_mode = CollectMode::None;
  int collector_tape = -1;  // tape index for this episode inside the collector
  std::vector<StepEvent>* log = nullptr;
  std::vector<LangExample>* finetune_pairs = nullptr;
  std::vector<AudioSample>* regressor_samples = nullptr;
  // Test seam: replaces pi_l inside language options (instruction, option step).
  std::function<Action(const Instruction&, int)> lang_override;

  int t() const { return t_; }
  const Pose& pose() const { return pose_; }
  const GoalDescriptor& goal_estimate() const { return goal_; }
  int queries() const { return queries_; }
  // Critic value of the pending state; bootstraps truncated rollouts.
  double state_value(CollectMode mode);

 private:
  void ensure_observed();
  bool regressor_samples_ok() const;
  double exec_primitive(Action action, int option, bool query_flag,
                        const std::optional<Instruction>& instr, double zeta);
  nn::Mat window(const std::deque<nn::Vec>& projections, const nn::Vec& current) const;
  nn::Vec pi_q_goal_input() const;
  bool trigger_fires();

  const Scene* scene_;
  const EpisodeSpec* spec_;
  const SplitConfig* split_;
  PolicyBundle bundle_;
  ControllerConfig cfg_;
  TriggerConfig trigger_;
  SpeakerConfig speaker_;
  const Vocabulary* vocab_;
  ObservationContext ctx_;
  DistanceFieldCache cache_;
  std::vector<int> goal_field_;
  Cell goal_cell_;
  Rng rng_;

  Pose start_, pose_, prev_pose_;
  int t_ = 0;
  bool done_ = false;
  bool observed_ = false;
  ObservationEmbedding obs_;
  GoalDescriptor goal_;
  Memory memory_;
  std::deque<nn::Vec> proj_g_, proj_q_;
  int prev_action_ = -1;
  int queries_ = 0;
  int last_query_step_ = -1;
  std::vector<int> random_steps_;
  EpisodeOutcome outcome_;
  std::optional<AudioPolicyNet::Trace> pi_g_cached_;  // reused by the MU trigger
};

}  // namespace avnav
