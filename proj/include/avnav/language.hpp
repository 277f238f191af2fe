#pragma once

#include <optional>
#include <vector>

#include "avnav/common.hpp"
#include "avnav/episode.hpp"
#include "avnav/nn.hpp"
#include "avnav/oracle.hpp"
#include "avnav/percept.hpp"
#include "avnav/world.hpp"

namespace avnav {

// Goal-descriptor network input: [0.1 * location | category probs | target one-hot].
Eigen::VectorXd goal_input(const GoalDescriptor& g,
                           const std::optional<Eigen::VectorXd>& target_onehot, int categories);
int goal_input_dim(int categories);

struct LangConfig {
  int vocab_size = 0;
  int d_tok = 32;
  int d_obs = 48;
  int d_b = 64;
  int categories = 21;
  ObsLayout layout;
  int history = 2;  // S_V - 1 past beliefs
  int nu = 3;
  double pos_scale = 0.1;
};

// pi_l: instruction embedding, attention-pooled observation state, fusion,
// belief attention over a short history, and a 4-way action head.
struct LangPolicyNet {
  LangConfig cfg;
  nn::Mat embed, gembed;  // d_tok x vocab
  nn::Linear proj_vis, proj_aud, proj_act, proj_pose, proj_goal;
  nn::Vec obs_query, gobs_query;
  nn::AttentionPool obs_attn;
  nn::Linear fuse;     // (d_obs + d_tok) -> d_b
  nn::Mat bel_wq, gbel_wq;
  nn::AttentionPool bel_attn;
  nn::Linear bel_out;  // 2 d_b -> d_b
  nn::Linear actor;    // d_b -> 4
  nn::Linear critic;   // d_b -> 1 (kept for interface parity; unused in imitation)

  LangPolicyNet() = default;
  LangPolicyNet(const LangConfig& cfg, Rng& rng);
  std::vector<nn::ParamRef> params();
  void zero_grad();
};

// Mean of per-position contributions E[token] * (1 + pos_scale * i); PAD skipped.
Eigen::VectorXd embed_instruction(const LangPolicyNet& net, const Instruction& instr);

struct LangStepTrace {
  nn::Vec parts[5];    // visual, audio, prev action, pose, goal (net inputs)
  nn::Mat tokens;      // d_obs x 5, post-tanh
  nn::AttnTrace tr_obs;
  nn::Vec obs_state;
  nn::Vec fuse_in;     // [obs_state; instr_vec]
  nn::Vec fused;       // post-tanh
  nn::Mat bel_items;   // d_b x (1 + history)
  nn::AttnTrace tr_bel;
  nn::Vec att;
  nn::Vec bel_cat;     // [fused; att]
  nn::Vec belief;      // post-tanh
  nn::Vec probs;
  double value = 0.0;
};

// One pi_l step; history holds at most cfg.history previous beliefs,
// oldest first. The caller pushes trace.belief afterwards.
void lang_step(const LangPolicyNet& net, const Eigen::VectorXd& e_obs,
               const Eigen::VectorXd& goal_in, const Eigen::VectorXd& instr_vec,
               const std::vector<nn::Vec>& history, LangStepTrace& trace);

// Backward through one step. dbelief collects gradient w.r.t. this step's
// belief (CE path plus future-step attention); dhistory receives additions
// for each history item; dinstr accumulates the shared instruction gradient.
void lang_step_backward(LangPolicyNet& net, const LangStepTrace& trace, const nn::Vec& dlogits,
                        const nn::Vec& dbelief_extra, std::vector<nn::Vec>& dhistory,
                        nn::Vec& dinstr);

void embed_instruction_backward(LangPolicyNet& net, const Instruction& instr,
                                const nn::Vec& dinstr);

// One instruction-following pair with enough context to replay observations.
struct LangExample {
  const Scene* scene = nullptr;
  const SplitConfig* split = nullptr;
  EpisodeSpec spec;        // silent (duration 0) for offline corpus pairs
  Pose start;              // pose when the instruction was issued
  Pose episode_start;      // anchor for pose deltas
  int t0 = 0;              // episode step at the query
  int prev_action = -1;
  Cell goal;
  GoalDescriptor g0;       // goal estimate when the option began
  Instruction instruction;
  std::vector<Action> oracle_actions;  // as spoken (n pairs)
  std::uint64_t noise_seed = 0;
};

struct UnrollResult {
  double loss = 0.0;
  std::vector<int> teacher;
  std::vector<int> greedy;
  int match_prefix = 0;  // greedy == teacher for this many leading steps
};

// Teacher-forced nu-step unroll. Teacher actions are the first step of the
// shortest path recomputed at each pose. With backprop the mean cross entropy
// gradient (scaled by loss_scale) is accumulated into the net.
UnrollResult lang_unroll(LangPolicyNet& net, const LangExample& example,
                         const GoalEstimator* estimator, const AudioParams& audio, bool backprop,
                         double loss_scale, bool mask_instruction = false);

// Chunk-parallel batch gradient; chunk boundaries (not thread count) fix the
// reduction order, so results are thread-count independent.
double imitation_batch_grad(LangPolicyNet& net, const std::vector<LangExample>& batch,
                            const GoalEstimator* estimator, const AudioParams& audio,
                            bool parallel, int chunks = 8);

// One Adam step on the mean cross entropy of a batch; returns the loss.
double imitation_update(LangPolicyNet& net, const std::vector<LangExample>& batch,
                        const GoalEstimator* estimator, const AudioParams& audio, nn::Adam& adam,
                        bool parallel = true);

std::vector<LangExample> make_lang_corpus(const std::vector<Scene>& scenes,
                                          const SplitConfig& split, const SpeakerConfig& speaker,
                                          const Vocabulary& vocab, int count, int segment_n,
                                          Rng& rng);

void save_lang_corpus_jsonl(const std::string& path, const std::vector<LangExample>& corpus);
// Scenes are re-attached by seed through the provided list.
std::vector<LangExample> load_lang_corpus_jsonl(const std::string& path,
                                                const std::vector<Scene>& scenes,
                                                const SplitConfig& split);

struct PretrainOptions {
  int epochs = 20;
  int batch_size = 64;
  int patience = 3;
  double lr = 1e-4;
  double val_fraction = 0.05;
  bool parallel = true;
};

struct PretrainStats {
  int epochs_run = 0;
  std::vector<double> epoch_loss;
  double val_step1 = 0.0;
};

// Off-policy stage: imitation until validation step-1 accuracy plateaus.
PretrainStats pretrain_offline(LangPolicyNet& net, const std::vector<LangExample>& corpus,
                               const GoalEstimator* estimator, const AudioParams& audio,
                               const PretrainOptions& opts);

// On-policy stage over pairs gathered from actual queries; a no-op on an
// empty collection.
double online_finetune(LangPolicyNet& net, const std::vector<LangExample>& pairs,
                       const GoalEstimator* estimator, const AudioParams& audio, nn::Adam& adam,
                       int batch_size = 64, bool parallel = true);

// Fraction of pairs whose first n greedy actions all match the teacher.
double vln_step_n(LangPolicyNet& net, const std::vector<LangExample>& pairs,
                  const GoalEstimator* estimator, const AudioParams& audio, int n,
                  bool mask_instruction = false);

}  // namespace avnav
