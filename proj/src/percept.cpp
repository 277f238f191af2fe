#include "avnav/percept.hpp"

#include <algorithm>
#include <cmath>

namespace avnav {

using nn::Vec;

ObservationEmbedding encode_observation(const ObservationContext& ctx, const Pose& pose,
                                        const Pose& start, int t, int prev_action, Rng& rng) {
  const ObsLayout& layout = ctx.layout;
  ObservationEmbedding obs;
  obs.flat = Vec::Zero(layout.total_dim());

  obs.flat.head(layout.visual_dim()) = render_visual(*ctx.scene, pose, layout.visual);

  auto sources = active_sources(*ctx.scene, *ctx.spec, t);
  obs.audio = render_audio(*ctx.scene, pose, sources, ctx.split->signatures, ctx.audio, rng,
                           ctx.cache);
  obs.flat[layout.audio_offset()] = obs.audio.left;
  obs.flat[layout.audio_offset() + 1] = obs.audio.right;
  obs.flat.segment(layout.audio_offset() + 2, layout.d_a) = obs.audio.signature;

  if (prev_action >= 0) obs.flat[layout.action_offset() + prev_action] = 1.0;

  // Pose relative to the episode start, in the start frame; offsets scaled
  // by 0.1 to keep network inputs O(1).
  Eigen::Vector2d rel = to_agent_frame(start, pose.cell());
  int dh = (static_cast<int>(pose.heading) - static_cast<int>(start.heading) + 4) & 3;
  double angle = dh * M_PI_2;
  obs.flat[layout.pose_offset()] = 0.1 * rel.x();
  obs.flat[layout.pose_offset() + 1] = 0.1 * rel.y();
  obs.flat[layout.pose_offset() + 2] = std::sin(angle);
  obs.flat[layout.pose_offset() + 3] = std::cos(angle);
  return obs;
}

void Memory::push(Eigen::VectorXd e) {
  items_.push_back(std::move(e));
  while (static_cast<int>(items_.size()) > capacity_) items_.pop_front();
}

GoalDescriptor uniform_goal(int categories) {
  GoalDescriptor g;
  g.category_probs = Vec::Constant(categories, 1.0 / categories);
  return g;
}

GoalEstimator::GoalEstimator(const GoalEstimatorConfig& config, Rng& rng)
    : cfg(config),
      classifier(config.categories, config.d_a, rng),
      reg_hidden(config.regressor_hidden, 2 + config.d_a, rng),
      reg_out(2, config.regressor_hidden, rng) {}

Eigen::VectorXd GoalEstimator::regressor_input(const AudioSignal& audio) const {
  Vec x(2 + cfg.d_a);
  x[0] = audio.left;
  x[1] = audio.right;
  x.tail(cfg.d_a) = audio.signature;
  return x;
}

GoalDescriptor GoalEstimator::estimate(const AudioSignal& audio) const {
  GoalDescriptor g;
  g.category_probs = nn::softmax(classifier.forward(audio.signature));
  Vec h = reg_hidden.forward(regressor_input(audio)).array().tanh();
  Vec loc = reg_out.forward(h);
  g.location = {loc[0], loc[1]};
  return g;
}

std::vector<nn::ParamRef> GoalEstimator::classifier_params() {
  std::vector<nn::ParamRef> out;
  classifier.collect("classifier", true, out);
  return out;
}

std::vector<nn::ParamRef> GoalEstimator::regressor_params() {
  std::vector<nn::ParamRef> out;
  reg_hidden.collect("reg_hidden", true, out);
  reg_out.collect("reg_out", true, out);
  return out;
}

std::vector<nn::ParamRef> GoalEstimator::params() {
  std::vector<nn::ParamRef> out = classifier_params();
  for (auto& p : regressor_params()) out.push_back(p);
  return out;
}

GoalDescriptor propagate_goal(const GoalDescriptor& prev, const Pose& from, const Pose& to) {
  Cell f = heading_vec(from.heading);
  Cell l = heading_vec(turn_left(from.heading));
  double wx = from.x + prev.location.x() * f.x + prev.location.y() * l.x;
  double wy = from.y + prev.location.x() * f.y + prev.location.y() * l.y;

  Cell nf = heading_vec(to.heading);
  Cell nl = heading_vec(turn_left(to.heading));
  double rx = wx - to.x;
  double ry = wy - to.y;
  GoalDescriptor out;
  out.location = {rx * nf.x + ry * nf.y, rx * nl.x + ry * nl.y};
  out.category_probs = prev.category_probs;
  return out;
}

GoalDescriptor fuse_goal(const GoalDescriptor& prev, const GoalDescriptor& estimate,
                         const Pose& from, const Pose& to, bool audible, double lambda) {
  GoalDescriptor propagated = propagate_goal(prev, from, to);
  double lam = audible ? lambda : 0.0;
  GoalDescriptor out;
  out.location = lam * estimate.location + (1.0 - lam) * propagated.location;
  out.category_probs = lam * estimate.category_probs + (1.0 - lam) * propagated.category_probs;
  double sum = out.category_probs.sum();
  if (sum > 0.0) {
    out.category_probs /= sum;
  } else {
    out.category_probs.setConstant(1.0 / out.category_probs.size());
  }
  return out;
}

std::vector<AudioSample> make_audio_corpus(const std::vector<Scene>& scenes,
                                           const SplitConfig& split, const AudioParams& params,
                                           int count, Rng& rng) {
  if (scenes.empty() || count <= 0) throw training_error("audio corpus needs scenes and count > 0");
  std::vector<AudioSample> data;
  data.reserve(static_cast<size_t>(count));
  std::uniform_int_distribution<size_t> spick(0, scenes.size() - 1);
  std::uniform_int_distribution<size_t> cpick(0, split.train_categories.size() - 1);
  std::uniform_int_distribution<int> hpick(0, 3);
  while (static_cast<int>(data.size()) < count) {
    const Scene& scene = scenes[spick(rng)];
    int category = split.train_categories[cpick(rng)];
    const SemanticObject* src = nullptr;
    for (const auto& o : scene.objects) {
      if (o.category == category && o.is_sound_source) {
        src = &o;
        break;
      }
    }
    if (src == nullptr) continue;
    std::uniform_int_distribution<int> xpick(0, scene.width - 1);
    std::uniform_int_distribution<int> ypick(0, scene.height - 1);
    int x = xpick(rng), y = ypick(rng);
    if (!scene.navigable(x, y)) continue;
    Pose pose{x, y, static_cast<Heading>(hpick(rng))};
    AudioSample sample;
    sample.audio = render_audio(scene, pose, {{src, 1.0}}, split.signatures, params, rng);
    sample.location = to_agent_frame(pose, src->cell);
    sample.category = category;
    data.push_back(std::move(sample));
  }
  return data;
}

GoalTrainStats train_goal_classifier(GoalEstimator& est, const std::vector<AudioSample>& data,
                                     int epochs, double lr, double val_fraction, Rng& rng) {
  if (data.empty()) throw training_error("classifier dataset is empty");
  std::vector<size_t> idx(data.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::shuffle(idx.begin(), idx.end(), rng);
  size_t val_count = static_cast<size_t>(val_fraction * static_cast<double>(data.size()));
  size_t train_count = data.size() - val_count;
  if (train_count == 0) throw training_error("classifier train split is empty");

  auto params = est.classifier_params();
  nn::Adam adam;
  adam.lr = lr;
  adam.init(params);

  GoalTrainStats stats;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    nn::zero_grads(params);
    double loss = 0.0;
    for (size_t i = 0; i < train_count; ++i) {
      const AudioSample& s = data[idx[i]];
      Vec probs = nn::softmax(est.classifier.forward(s.audio.signature));
      loss += nn::cross_entropy(probs, s.category);
      Vec dlogits = nn::cross_entropy_grad(probs, s.category) / static_cast<double>(train_count);
      est.classifier.backward(s.audio.signature, dlogits);
    }
    adam.step(params);
    stats.epoch_loss.push_back(loss / static_cast<double>(train_count));
  }

  if (val_count > 0) {
    int correct = 0;
    for (size_t i = train_count; i < data.size(); ++i) {
      const AudioSample& s = data[idx[i]];
      Vec probs = nn::softmax(est.classifier.forward(s.audio.signature));
      if (nn::argmax(probs) == s.category) ++correct;
    }
    stats.val_accuracy = static_cast<double>(correct) / static_cast<double>(val_count);
  }
  return stats;
}

double train_goal_regressor(GoalEstimator& est, const std::vector<AudioSample>& batch, int steps,
                            double lr, nn::Adam& adam) {
  if (batch.empty()) throw training_error("regressor batch is empty");
  auto params = est.regressor_params();
  adam.lr = lr;
  double loss = 0.0;
  for (int s = 0; s < steps; ++s) {
    nn::zero_grads(params);
    loss = 0.0;
    for (const AudioSample& sample : batch) {
      Vec x = est.regressor_input(sample.audio);
      Vec pre = est.reg_hidden.forward(x);
      Vec h = pre.array().tanh();
      Vec loc = est.reg_out.forward(h);
      Eigen::Vector2d err(loc[0] - sample.location.x(), loc[1] - sample.location.y());
      loss += err.squaredNorm();
      Vec dloc = (2.0 / static_cast<double>(batch.size())) * Vec(err);
      Vec dh = est.reg_out.backward(h, dloc);
      Vec dpre = dh.array() * (1.0 - h.array().square());
      est.reg_hidden.backward(x, dpre);
    }
    adam.step(params);
  }
  return loss / static_cast<double>(batch.size());
}

GoalTrainStats train_goal_estimator(GoalEstimator& est, const std::vector<AudioSample>& data,
                                    int epochs, double lr_classifier, double lr_regressor,
                                    Rng& rng) {
  GoalTrainStats stats = train_goal_classifier(est, data, epochs, lr_classifier, 0.1, rng);
  nn::Adam adam;
  adam.init(est.regressor_params());
  train_goal_regressor(est, data, epochs, lr_regressor, adam);
  return stats;
}

}  // namespace avnav
