#include "avnav/percept.hpp"

#include "doctest.h"
#include "fd_check.hpp"

using namespace avnav;
using nn::Vec;

namespace {

struct PerceptFixture {
  Scene scene;
  SplitConfig split;
  ObsLayout layout;
  AudioParams audio;
  EpisodeSpec spec;

  PerceptFixture() {
    SceneParams params;
    params.width = 14;
    params.height = 14;
    params.target_rooms = 2;
    params.min_room_extent = 4;
    params.categories = 6;
    scene = generate_scene(3, params);
    split = make_split(6, 2, 8, 5);
    layout.visual.window = 3;
    layout.visual.room_channels = 4;
    layout.visual.categories = 6;
    layout.d_a = 8;
    spec.scene_seed = scene.seed;
    spec.goal_object_id = 0;
    spec.sound_duration = 10;
    for (int y = 0; y < scene.height && spec.start.x == 0; ++y) {
      for (int x = 0; x < scene.width; ++x) {
        if (scene.navigable(x, y) && scene.object_at(x, y) == nullptr) {
          spec.start = {x, y, Heading::East};
          break;
        }
      }
    }
  }

  ObservationContext ctx() { return {&scene, &spec, &split, audio, layout, nullptr}; }
};

}  // namespace

TEST_CASE("encode_observation blocks and determinism") {
  PerceptFixture fix;
  auto ctx = fix.ctx();
  Rng rng_a(7), rng_b(7);
  ObservationEmbedding a = encode_observation(ctx, fix.spec.start, fix.spec.start, 0, -1, rng_a);
  ObservationEmbedding b = encode_observation(ctx, fix.spec.start, fix.spec.start, 0, -1, rng_b);
  CHECK((a.flat - b.flat).norm() == 0.0);  // identical world state, identical embedding
  CHECK(a.flat.size() == fix.layout.total_dim());

  // t = 0 carries no previous action.
  CHECK(a.flat.segment(fix.layout.action_offset(), 4).norm() == 0.0);
  // pose delta starts at the origin with zero turn.
  CHECK(a.flat[fix.layout.pose_offset()] == 0.0);
  CHECK(a.flat[fix.layout.pose_offset() + 3] == doctest::Approx(1.0));

  Rng rng_c(9);
  ObservationEmbedding with_action =
      encode_observation(ctx, fix.spec.start, fix.spec.start, 1, 2, rng_c);
  CHECK(with_action.flat[fix.layout.action_offset() + 2] == 1.0);

  // Silence past the sound window zeroes the audio block.
  Rng rng_d(11);
  ObservationEmbedding silent =
      encode_observation(ctx, fix.spec.start, fix.spec.start, 50, 1, rng_d);
  CHECK(!silent.audio.audible);
  CHECK(silent.flat.segment(fix.layout.audio_offset(), fix.layout.audio_dim()).norm() == 0.0);
}

TEST_CASE("memory evicts oldest first") {
  Memory memory(5);
  for (int i = 0; i < 8; ++i) {
    Vec v(1);
    v[0] = static_cast<double>(i);
    memory.push(v);
  }
  CHECK(memory.size() == 5);
  CHECK(memory[0][0] == 3.0);  // first three evicted
  CHECK(memory[4][0] == 7.0);
  memory.clear();
  CHECK(memory.size() == 0);
}

TEST_CASE("uniform classifier yields uniform category probabilities") {
  Rng rng(13);
  GoalEstimatorConfig cfg;
  cfg.d_a = 8;
  cfg.categories = 6;
  GoalEstimator est(cfg, rng);
  est.classifier.w.setZero();
  est.classifier.b.setZero();
  AudioSignal audio;
  audio.signature = Vec::Ones(8);
  audio.audible = true;
  GoalDescriptor g = est.estimate(audio);
  for (Eigen::Index i = 0; i < g.category_probs.size(); ++i) {
    CHECK(g.category_probs[i] == doctest::Approx(1.0 / 6.0));
  }
}

TEST_CASE("fuse_goal propagation and blending") {
  GoalDescriptor prev;
  prev.location = {2.0, 0.0};
  prev.category_probs = Vec::Constant(4, 0.25);

  // Pure turn in place: the frame rotation example.
  Pose from{5, 5, Heading::North};
  Pose to{5, 5, Heading::West};
  GoalDescriptor rotated = propagate_goal(prev, from, to);
  CHECK(rotated.location.x() == doctest::Approx(0.0));
  CHECK(rotated.location.y() == doctest::Approx(-2.0));

  // Inaudible: exactly the propagated estimate.
  GoalDescriptor estimate;
  estimate.location = {9.0, 9.0};
  estimate.category_probs = Vec::Zero(4);
  estimate.category_probs[1] = 1.0;
  GoalDescriptor fused = fuse_goal(prev, estimate, from, to, false);
  CHECK((fused.location - rotated.location).norm() == doctest::Approx(0.0));
  CHECK((fused.category_probs - prev.category_probs).norm() == doctest::Approx(0.0));

  // Identity pose change with equal descriptors is a fixed point.
  GoalDescriptor same = fuse_goal(prev, prev, from, from, true);
  CHECK((same.location - prev.location).norm() == doctest::Approx(0.0));
  CHECK((same.category_probs - prev.category_probs).norm() == doctest::Approx(0.0));

  // Audible blend keeps the simplex.
  GoalDescriptor blend = fuse_goal(prev, estimate, from, to, true);
  CHECK(blend.category_probs.sum() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(blend.category_probs.minCoeff() >= 0.0);
  CHECK(blend.location.x() == doctest::Approx(0.5 * 9.0 + 0.5 * 0.0));

  // Propagation is an isometry on the location.
  Pose moved{6, 5, Heading::East};
  GoalDescriptor iso = propagate_goal(prev, from, from);
  CHECK(iso.location.norm() == doctest::Approx(prev.location.norm()));
  GoalDescriptor turned = propagate_goal(prev, from, to);
  CHECK(turned.location.norm() == doctest::Approx(prev.location.norm()));
  (void)moved;
}

TEST_CASE("classifier training reaches high held-out accuracy") {
  PerceptFixture fix;
  Rng rng(17);
  std::vector<Scene> scenes{fix.scene};
  auto corpus = make_audio_corpus(scenes, fix.split, fix.audio, 3000, rng);

  GoalEstimatorConfig cfg;
  cfg.d_a = 8;
  cfg.categories = 6;
  GoalEstimator est(cfg, rng);
  GoalTrainStats stats = train_goal_classifier(est, corpus, 60, 1e-2, 0.1, rng);
  CHECK(stats.val_accuracy >= 0.9);

  // Loss decreases monotonically over the first 10 epochs.
  for (int e = 1; e < 10; ++e) {
    CHECK(stats.epoch_loss[static_cast<size_t>(e)] <
          stats.epoch_loss[static_cast<size_t>(e - 1)]);
  }
}

TEST_CASE("single-class dataset drives that class probability toward one") {
  PerceptFixture fix;
  Rng rng(19);
  std::vector<Scene> scenes{fix.scene};
  auto corpus = make_audio_corpus(scenes, fix.split, fix.audio, 400, rng);
  int keep = fix.split.train_categories[0];
  std::vector<AudioSample> single;
  for (const auto& s : corpus) {
    if (s.category == keep) single.push_back(s);
  }
  REQUIRE(single.size() > 20);

  GoalEstimatorConfig cfg;
  cfg.d_a = 8;
  cfg.categories = 6;
  GoalEstimator est(cfg, rng);
  train_goal_classifier(est, single, 600, 3e-2, 0.0, rng);
  double min_prob = 1.0;
  for (const auto& s : single) {
    min_prob = std::min(min_prob, est.estimate(s.audio).category_probs[keep]);
  }
  CHECK(min_prob > 0.9);
}

TEST_CASE("regressor fits a realizable target to near zero error") {
  Rng rng(23);
  GoalEstimatorConfig teacher_cfg;
  teacher_cfg.d_a = 8;
  teacher_cfg.categories = 6;
  teacher_cfg.regressor_hidden = 6;
  GoalEstimatorConfig student_cfg = teacher_cfg;
  student_cfg.regressor_hidden = 12;  // strictly contains the teacher class
  GoalEstimator teacher(teacher_cfg, rng);
  GoalEstimator student(student_cfg, rng);

  // Targets generated by the teacher's own regressor: realizable by class.
  std::vector<AudioSample> data;
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int i = 0; i < 24; ++i) {
    AudioSample s;
    s.audio.left = std::abs(gauss(rng));
    s.audio.right = std::abs(gauss(rng));
    s.audio.signature = Vec::Zero(8);
    for (int k = 0; k < 8; ++k) s.audio.signature[k] = gauss(rng);
    s.audio.audible = true;
    GoalDescriptor g = teacher.estimate(s.audio);
    s.location = g.location;
    data.push_back(std::move(s));
  }
  nn::Adam adam;
  adam.init(student.regressor_params());
  double loss = 1.0;
  for (int round = 0; round < 200 && loss > 1e-6; ++round) {
    loss = train_goal_regressor(student, data, 50, 5e-3, adam);
  }
  CHECK(loss <= 1e-4);
}

TEST_CASE("goal estimator gradients match finite differences") {
  Rng rng(29);
  Rng coord_rng(30);
  GoalEstimatorConfig cfg;
  cfg.d_a = 6;
  cfg.categories = 4;
  cfg.regressor_hidden = 5;

  double worst = 0.0;
  for (int draw = 0; draw < 10; ++draw) {
    GoalEstimator est(cfg, rng);
    std::vector<AudioSample> batch;
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int i = 0; i < 4; ++i) {
      AudioSample s;
      s.audio.left = std::abs(gauss(rng));
      s.audio.right = std::abs(gauss(rng));
      s.audio.signature = Vec::Zero(6);
      for (int k = 0; k < 6; ++k) s.audio.signature[k] = gauss(rng);
      s.location = {gauss(rng), gauss(rng)};
      s.category = i % 4;
      batch.push_back(std::move(s));
    }

    // Classifier cross entropy.
    auto cls_refs = est.classifier_params();
    auto cls_loss = [&]() {
      double loss = 0.0;
      for (const auto& s : batch) {
        Vec probs = nn::softmax(est.classifier.forward(s.audio.signature));
        loss += nn::cross_entropy(probs, s.category) / static_cast<double>(batch.size());
      }
      return loss;
    };
    auto cls_grad = [&]() {
      nn::zero_grads(cls_refs);
      double loss = 0.0;
      for (const auto& s : batch) {
        Vec probs = nn::softmax(est.classifier.forward(s.audio.signature));
        loss += nn::cross_entropy(probs, s.category) / static_cast<double>(batch.size());
        Vec dlogits = nn::cross_entropy_grad(probs, s.category) / static_cast<double>(batch.size());
        est.classifier.backward(s.audio.signature, dlogits);
      }
      return loss;
    };
    worst = std::max(worst, fd_max_rel_error(cls_refs, cls_grad, cls_loss, coord_rng, 5));

    // Regressor squared error.
    auto reg_refs = est.regressor_params();
    auto reg_loss = [&]() {
      double loss = 0.0;
      for (const auto& s : batch) {
        GoalDescriptor g = est.estimate(s.audio);
        loss += (g.location - s.location).squaredNorm() / static_cast<double>(batch.size());
      }
      return loss;
    };
    auto reg_grad = [&]() {
      nn::zero_grads(reg_refs);
      double loss = 0.0;
      for (const auto& s : batch) {
        Vec x = est.regressor_input(s.audio);
        Vec pre = est.reg_hidden.forward(x);
        Vec h = pre.array().tanh();
        Vec loc = est.reg_out.forward(h);
        Eigen::Vector2d err(loc[0] - s.location.x(), loc[1] - s.location.y());
        loss += err.squaredNorm() / static_cast<double>(batch.size());
        Vec dloc = (2.0 / static_cast<double>(batch.size())) * Vec(err);
        Vec dh = est.reg_out.backward(h, dloc);
        Vec dpre = dh.array() * (1.0 - h.array().square());
        est.reg_hidden.backward(x, dpre);
      }
      return loss;
    };
    worst = std::max(worst, fd_max_rel_error(reg_refs, reg_grad, reg_loss, coord_rng, 5));
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("train_goal_estimator rejects an empty dataset") {
  Rng rng(31);
  GoalEstimatorConfig cfg;
  GoalEstimator est(cfg, rng);
  CHECK_THROWS_AS(train_goal_estimator(est, {}, 5, 1e-3, 1e-3, rng), Error);
}
