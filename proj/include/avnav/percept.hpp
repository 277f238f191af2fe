#pragma once

#include <Eigen/Dense>
#include <deque>
#include <vector>

#include "avnav/common.hpp"
#include "avnav/episode.hpp"
#include "avnav/nn.hpp"
#include "avnav/world.hpp"

namespace avnav {

// Flat layout of e_t = [visual | audio (left,right,signature) | prev action | pose delta].
struct ObsLayout {
  VisualParams visual;
  int d_a = 24;

  int visual_dim() const { return avnav::visual_dim(visual); }
  int audio_dim() const { return 2 + d_a; }
  int action_dim() const { return kNumActions; }
  int pose_dim() const { return 4; }  // forward, left (x0.1), sin/cos heading delta
  int total_dim() const { return visual_dim() + audio_dim() + action_dim() + pose_dim(); }
  int audio_offset() const { return visual_dim(); }
  int action_offset() const { return visual_dim() + audio_dim(); }
  int pose_offset() const { return visual_dim() + audio_dim() + action_dim(); }
};

struct ObservationEmbedding {
  Eigen::VectorXd flat;
  AudioSignal audio;  // kept unflattened for the goal estimator
};

struct ObservationContext {
  const Scene* scene = nullptr;
  const EpisodeSpec* spec = nullptr;
  const SplitConfig* split = nullptr;
  AudioParams audio;
  ObsLayout layout;
  DistanceFieldCache* cache = nullptr;
};

// prev_action < 0 encodes "no previous action" (all-zero block at t = 0).
ObservationEmbedding encode_observation(const ObservationContext& ctx, const Pose& pose,
                                        const Pose& start, int t, int prev_action, Rng& rng);

// FIFO ring buffer of past observations; emptied at episode start.
class Memory {
 public:
  explicit Memory(int capacity) : capacity_(capacity) {}
  void push(Eigen::VectorXd e);
  void clear() { items_.clear(); }
  int size() const { return static_cast<int>(items_.size()); }
  int capacity() const { return capacity_; }
  const Eigen::VectorXd& operator[](int i) const { return items_[static_cast<size_t>(i)]; }

 private:
  std::deque<Eigen::VectorXd> items_;
  int capacity_ = 0;
};

struct GoalDescriptor {
  Eigen::Vector2d location = Eigen::Vector2d::Zero();  // agent frame: x forward, y left
  Eigen::VectorXd category_probs;
};

GoalDescriptor uniform_goal(int categories);

struct GoalEstimatorConfig {
  int d_a = 24;
  int categories = 21;
  int regressor_hidden = 32;
};

// f_g: linear softmax classifier over the signature plus a small MLP
// regressing the agent-frame goal offset from (left, right, signature).
struct GoalEstimator {
  GoalEstimatorConfig cfg;
  nn::Linear classifier;
  nn::Linear reg_hidden;
  nn::Linear reg_out;

  GoalEstimator() = default;
  GoalEstimator(const GoalEstimatorConfig& cfg, Rng& rng);

  GoalDescriptor estimate(const AudioSignal& audio) const;
  Eigen::VectorXd regressor_input(const AudioSignal& audio) const;

  std::vector<nn::ParamRef> classifier_params();
  std::vector<nn::ParamRef> regressor_params();
  std::vector<nn::ParamRef> params();
};

// Rigid transform of the previous estimate into the new agent frame;
// category probabilities are carried unchanged.
GoalDescriptor propagate_goal(const GoalDescriptor& prev, const Pose& from, const Pose& to);

// g = lambda * ghat + (1 - lambda) * f_p(g_prev); lambda forced to 0 when the
// sound is inaudible. Category probabilities are renormalized after the blend.
GoalDescriptor fuse_goal(const GoalDescriptor& prev, const GoalDescriptor& estimate,
                         const Pose& from, const Pose& to, bool audible, double lambda = 0.5);

struct AudioSample {
  AudioSignal audio;
  Eigen::Vector2d location;  // agent frame ground truth
  int category = 0;
};

// Random (scene, pose, source) draws from heard categories only.
std::vector<AudioSample> make_audio_corpus(const std::vector<Scene>& scenes,
                                           const SplitConfig& split, const AudioParams& params,
                                           int count, Rng& rng);

struct GoalTrainStats {
  std::vector<double> epoch_loss;
  double val_accuracy = 0.0;
};

// Full-batch Adam on cross entropy; throws training_error on an empty dataset.
GoalTrainStats train_goal_classifier(GoalEstimator& est, const std::vector<AudioSample>& data,
                                     int epochs, double lr, double val_fraction, Rng& rng);

// Squared error on agent-frame locations; used on-policy during rollouts.
double train_goal_regressor(GoalEstimator& est, const std::vector<AudioSample>& batch,
                            int steps, double lr, nn::Adam& adam);

// Convenience wrapper fitting both heads on one dataset.
GoalTrainStats train_goal_estimator(GoalEstimator& est, const std::vector<AudioSample>& data,
                                    int epochs, double lr_classifier, double lr_regressor,
                                    Rng& rng);

}  // namespace avnav
