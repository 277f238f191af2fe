#include "avnav/language.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <omp.h>

#include "json.hpp"

namespace avnav {

using nlohmann::json;
using nn::Mat;
using nn::Vec;

Eigen::VectorXd goal_input(const GoalDescriptor& g,
                           const std::optional<Eigen::VectorXd>& target_onehot, int categories) {
  Vec out = Vec::Zero(goal_input_dim(categories));
  out[0] = 0.1 * g.location.x();
  out[1] = 0.1 * g.location.y();
  out.segment(2, categories) = g.category_probs;
  if (target_onehot.has_value()) out.tail(categories) = *target_onehot;
  return out;
}

int goal_input_dim(int categories) { return 2 + 2 * categories; }

LangPolicyNet::LangPolicyNet(const LangConfig& config, Rng& rng)
    : cfg(config),
      embed(Mat::Zero(config.d_tok, config.vocab_size)),
      gembed(Mat::Zero(config.d_tok, config.vocab_size)),
      proj_vis(config.d_obs, config.layout.visual_dim(), rng),
      proj_aud(config.d_obs, config.layout.audio_dim(), rng),
      proj_act(config.d_obs, config.layout.action_dim(), rng),
      proj_pose(config.d_obs, config.layout.pose_dim(), rng),
      proj_goal(config.d_obs, goal_input_dim(config.categories), rng),
      obs_query(Vec::Zero(config.d_obs)),
      gobs_query(Vec::Zero(config.d_obs)),
      obs_attn(config.d_obs, config.d_obs, rng),
      fuse(config.d_b, config.d_obs + config.d_tok, rng),
      bel_wq(Mat::Zero(config.d_b, config.d_b)),
      gbel_wq(Mat::Zero(config.d_b, config.d_b)),
      bel_attn(config.d_b, config.d_b, rng),
      bel_out(config.d_b, 2 * config.d_b, rng),
      actor(kNumActions, config.d_b, rng),
      critic(1, config.d_b, rng) {
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (Eigen::Index i = 0; i < embed.rows(); ++i) {
    for (Eigen::Index j = 0; j < embed.cols(); ++j) embed(i, j) = u(rng);
  }
  for (Eigen::Index i = 0; i < obs_query.size(); ++i) obs_query[i] = u(rng);
  double s = nn::uniform_init_scale(cfg.d_b, cfg.d_b);
  std::uniform_real_distribution<double> uq(-s, s);
  for (Eigen::Index i = 0; i < bel_wq.rows(); ++i) {
    for (Eigen::Index j = 0; j < bel_wq.cols(); ++j) bel_wq(i, j) = uq(rng);
  }
}

std::vector<nn::ParamRef> LangPolicyNet::params() {
  std::vector<nn::ParamRef> out;
  out.push_back({"embed", embed.data(), gembed.data(), embed.size(), embed.rows(), embed.cols(), true});
  proj_vis.collect("proj_vis", true, out);
  proj_aud.collect("proj_aud", true, out);
  proj_act.collect("proj_act", true, out);
  proj_pose.collect("proj_pose", true, out);
  proj_goal.collect("proj_goal", true, out);
  out.push_back({"obs_query", obs_query.data(), gobs_query.data(), obs_query.size(),
                 obs_query.size(), 1, true});
  obs_attn.collect("obs_attn", true, out);
  fuse.collect("fuse", true, out);
  out.push_back({"bel_wq", bel_wq.data(), gbel_wq.data(), bel_wq.size(), bel_wq.rows(),
                 bel_wq.cols(), true});
  bel_attn.collect("bel_attn", true, out);
  bel_out.collect("bel_out", true, out);
  actor.collect("actor", true, out);
  critic.collect("critic", true, out);
  return out;
}

void LangPolicyNet::zero_grad() { nn::zero_grads(params()); }

Eigen::VectorXd embed_instruction(const LangPolicyNet& net, const Instruction& instr) {
  if (instr.empty()) throw input_error("embed_instruction: empty instruction");
  Vec out = Vec::Zero(net.cfg.d_tok);
  int n = 0;
  for (size_t i = 0; i < instr.tokens.size(); ++i) {
    int tok = instr.tokens[i];
    if (tok == Vocabulary::kPad) continue;
    out += net.embed.col(tok) * (1.0 + net.cfg.pos_scale * static_cast<double>(i));
    ++n;
  }
  if (n == 0) throw input_error("embed_instruction: only padding tokens");
  return out / static_cast<double>(n);
}

void embed_instruction_backward(LangPolicyNet& net, const Instruction& instr, const Vec& dinstr) {
  int n = 0;
  for (int tok : instr.tokens) {
    if (tok != Vocabulary::kPad) ++n;
  }
  if (n == 0) return;
  for (size_t i = 0; i < instr.tokens.size(); ++i) {
    int tok = instr.tokens[i];
    if (tok == Vocabulary::kPad) continue;
    net.gembed.col(tok) +=
        dinstr * ((1.0 + net.cfg.pos_scale * static_cast<double>(i)) / static_cast<double>(n));
  }
}

void lang_step(const LangPolicyNet& net, const Eigen::VectorXd& e_obs, const Eigen::VectorXd& goal_in,
               const Eigen::VectorXd& instr_vec, const std::vector<Vec>& history,
               LangStepTrace& trace) {
  const ObsLayout& layout = net.cfg.layout;
  trace.parts[0] = e_obs.head(layout.visual_dim());
  trace.parts[1] = e_obs.segment(layout.audio_offset(), layout.audio_dim());
  trace.parts[2] = e_obs.segment(layout.action_offset(), layout.action_dim());
  trace.parts[3] = e_obs.segment(layout.pose_offset(), layout.pose_dim());
  trace.parts[4] = goal_in;

  trace.tokens.resize(net.cfg.d_obs, 5);
  trace.tokens.col(0) = net.proj_vis.forward(trace.parts[0]).array().tanh();
  trace.tokens.col(1) = net.proj_aud.forward(trace.parts[1]).array().tanh();
  trace.tokens.col(2) = net.proj_act.forward(trace.parts[2]).array().tanh();
  trace.tokens.col(3) = net.proj_pose.forward(trace.parts[3]).array().tanh();
  trace.tokens.col(4) = net.proj_goal.forward(trace.parts[4]).array().tanh();

  trace.obs_state = net.obs_attn.forward(net.obs_query, trace.tokens, trace.tr_obs);

  trace.fuse_in.resize(net.cfg.d_obs + net.cfg.d_tok);
  trace.fuse_in << trace.obs_state, instr_vec;
  trace.fused = net.fuse.forward(trace.fuse_in).array().tanh();

  trace.bel_items.resize(net.cfg.d_b, 1 + static_cast<Eigen::Index>(history.size()));
  trace.bel_items.col(0) = trace.fused;
  for (size_t i = 0; i < history.size(); ++i) {
    trace.bel_items.col(1 + static_cast<Eigen::Index>(i)) = history[i];
  }
  Vec q = net.bel_wq * trace.fused;
  trace.att = net.bel_attn.forward(q, trace.bel_items, trace.tr_bel);

  trace.bel_cat.resize(2 * net.cfg.d_b);
  trace.bel_cat << trace.fused, trace.att;
  trace.belief = net.bel_out.forward(trace.bel_cat).array().tanh();

  trace.probs = nn::softmax(net.actor.forward(trace.belief));
  trace.value = net.critic.forward(trace.belief)[0];
}

void lang_step_backward(LangPolicyNet& net, const LangStepTrace& trace, const Vec& dlogits,
                        const Vec& dbelief_extra, std::vector<Vec>& dhistory, Vec& dinstr) {
  Vec db = net.actor.backward(trace.belief, dlogits);
  if (dbelief_extra.size() > 0) db += dbelief_extra;
  Vec dcat_pre = db.array() * (1.0 - trace.belief.array().square());
  Vec dcat = net.bel_out.backward(trace.bel_cat, dcat_pre);

  Vec dfused = dcat.head(net.cfg.d_b);
  Vec datt = dcat.tail(net.cfg.d_b);

  Mat ditems = Mat::Zero(trace.bel_items.rows(), trace.bel_items.cols());
  Vec dq = net.bel_attn.backward(trace.bel_items, trace.tr_bel, datt, ditems);
  net.gbel_wq.noalias() += dq * trace.fused.transpose();
  dfused += net.bel_wq.transpose() * dq;
  dfused += ditems.col(0);
  dhistory.assign(static_cast<size_t>(trace.bel_items.cols() - 1), Vec());
  for (Eigen::Index i = 1; i < trace.bel_items.cols(); ++i) {
    dhistory[static_cast<size_t>(i - 1)] = ditems.col(i);
  }

  Vec dfz = dfused.array() * (1.0 - trace.fused.array().square());
  Vec dfuse_in = net.fuse.backward(trace.fuse_in, dfz);
  Vec dobs_state = dfuse_in.head(net.cfg.d_obs);
  dinstr += dfuse_in.tail(net.cfg.d_tok);

  Mat dtok = Mat::Zero(trace.tokens.rows(), trace.tokens.cols());
  Vec dq_obs = net.obs_attn.backward(trace.tokens, trace.tr_obs, dobs_state, dtok);
  net.gobs_query += dq_obs;

  nn::Linear* projs[5] = {&net.proj_vis, &net.proj_aud, &net.proj_act, &net.proj_pose,
                          &net.proj_goal};
  for (int j = 0; j < 5; ++j) {
    Vec dpre = dtok.col(j).array() * (1.0 - trace.tokens.col(j).array().square());
    projs[j]->backward(trace.parts[j], dpre);
  }
}

UnrollResult lang_unroll(LangPolicyNet& net, const LangExample& example,
                         const GoalEstimator* estimator, const AudioParams& audio, bool backprop,
                         double loss_scale, bool mask_instruction) {
  const int nu = net.cfg.nu;
  UnrollResult result;

  ObservationContext ctx;
  ctx.scene = example.scene;
  ctx.spec = &example.spec;
  ctx.split = example.split;
  ctx.audio = audio;
  ctx.layout = net.cfg.layout;
  DistanceFieldCache cache(*example.scene);
  ctx.cache = &cache;

  Rng rng(mix_seed(example.noise_seed, 0x1a2b));
  Vec instr_vec = mask_instruction ? Vec::Zero(net.cfg.d_tok)
                                   : embed_instruction(net, example.instruction);

  std::vector<LangStepTrace> traces(static_cast<size_t>(nu));
  std::vector<int> teacher_actions;
  std::vector<std::vector<Vec>> histories(static_cast<size_t>(nu));
  std::vector<Vec> history;

  Pose pose = example.start;
  Pose prev_pose = pose;
  GoalDescriptor g = example.g0;
  int prev_action = example.prev_action;

  for (int tau = 0; tau < nu; ++tau) {
    int t = example.t0 + tau;
    ObservationEmbedding obs = encode_observation(ctx, pose, example.episode_start, t, prev_action, rng);
    if (tau > 0) {
      GoalDescriptor estimate =
          estimator != nullptr ? estimator->estimate(obs.audio) : uniform_goal(net.cfg.categories);
      bool audible = obs.audio.audible && estimator != nullptr;
      g = fuse_goal(g, estimate, prev_pose, pose, audible);
    }
    Vec goal_in = goal_input(g, example.spec.target_onehot, net.cfg.categories);

    int teacher;
    if (pose.cell() == example.goal) {
      teacher = static_cast<int>(Action::Stop);
    } else {
      teacher = static_cast<int>(shortest_action_path(*example.scene, pose, example.goal)[0]);
    }
    teacher_actions.push_back(teacher);

    histories[static_cast<size_t>(tau)] = history;
    lang_step(net, obs.flat, goal_in, instr_vec, history, traces[static_cast<size_t>(tau)]);

    const LangStepTrace& tr = traces[static_cast<size_t>(tau)];
    result.loss += nn::cross_entropy(tr.probs, teacher);
    result.greedy.push_back(nn::argmax(tr.probs));
    result.teacher.push_back(teacher);

    history.push_back(tr.belief);
    while (static_cast<int>(history.size()) > net.cfg.history) history.erase(history.begin());

    prev_pose = pose;
    pose = step(*example.scene, pose, static_cast<Action>(teacher));
    prev_action = teacher;
  }
  result.loss /= nu;
  result.match_prefix = 0;
  for (int i = 0; i < nu; ++i) {
    if (result.greedy[static_cast<size_t>(i)] != result.teacher[static_cast<size_t>(i)]) break;
    ++result.match_prefix;
  }

  if (backprop) {
    std::vector<Vec> dbelief(static_cast<size_t>(nu));
    Vec dinstr = Vec::Zero(net.cfg.d_tok);
    for (int tau = nu - 1; tau >= 0; --tau) {
      const LangStepTrace& tr = traces[static_cast<size_t>(tau)];
      Vec dlogits = nn::cross_entropy_grad(tr.probs, result.teacher[static_cast<size_t>(tau)]) * loss_scale;
      std::vector<Vec> dhistory;
      lang_step_backward(net, tr, dlogits, dbelief[static_cast<size_t>(tau)], dhistory, dinstr);
      int hist_len = static_cast<int>(histories[static_cast<size_t>(tau)].size());
      for (int i = 0; i < hist_len; ++i) {
        // History item i of step tau is the belief produced at this step:
        int producer = tau - hist_len + i;
        Vec& slot = dbelief[static_cast<size_t>(producer)];
        if (slot.size() == 0) slot = dhistory[static_cast<size_t>(i)];
        else slot += dhistory[static_cast<size_t>(i)];
      }
    }
    if (!mask_instruction) embed_instruction_backward(net, example.instruction, dinstr);
  }
  return result;
}

double imitation_batch_grad(LangPolicyNet& net, const std::vector<LangExample>& batch,
                            const GoalEstimator* estimator, const AudioParams& audio,
                            bool parallel, int chunks) {
  if (batch.empty()) throw training_error("imitation batch is empty");
  const double scale = 1.0 / static_cast<double>(batch.size() * net.cfg.nu);
  net.zero_grad();

  if (!parallel || chunks <= 1 || static_cast<int>(batch.size()) <= 1) {
    double loss = 0.0;
    for (const LangExample& ex : batch) {
      loss += lang_unroll(net, ex, estimator, audio, true, scale).loss;
    }
    return loss / static_cast<double>(batch.size());
  }

  int n_chunks = std::min<int>(chunks, static_cast<int>(batch.size()));
  std::vector<std::vector<Vec>> chunk_grads(static_cast<size_t>(n_chunks));
  std::vector<double> chunk_loss(static_cast<size_t>(n_chunks), 0.0);
  size_t per = (batch.size() + static_cast<size_t>(n_chunks) - 1) / static_cast<size_t>(n_chunks);

#pragma omp parallel for schedule(static)
  for (int c = 0; c < n_chunks; ++c) {
    LangPolicyNet local = net;  // private gradient buffers
    local.zero_grad();
    size_t begin = static_cast<size_t>(c) * per;
    size_t end = std::min(batch.size(), begin + per);
    for (size_t i = begin; i < end; ++i) {
      chunk_loss[static_cast<size_t>(c)] +=
          lang_unroll(local, batch[i], estimator, audio, true, scale).loss;
    }
    auto refs = local.params();
    for (const auto& p : refs) {
      chunk_grads[static_cast<size_t>(c)].emplace_back(Eigen::Map<const Vec>(p.grad, p.size));
    }
  }

  // Fixed chunk order keeps the reduction independent of the thread count.
  auto refs = net.params();
  for (int c = 0; c < n_chunks; ++c) {
    for (size_t p = 0; p < refs.size(); ++p) {
      Eigen::Map<Vec>(refs[p].grad, refs[p].size) += chunk_grads[static_cast<size_t>(c)][p];
    }
  }
  double loss = 0.0;
  for (double l : chunk_loss) loss += l;
  return loss / static_cast<double>(batch.size());
}

double imitation_update(LangPolicyNet& net, const std::vector<LangExample>& batch,
                        const GoalEstimator* estimator, const AudioParams& audio, nn::Adam& adam,
                        bool parallel) {
  double loss = imitation_batch_grad(net, batch, estimator, audio, parallel);
  auto refs = net.params();
  if (!nn::grads_finite(refs)) throw training_error("imitation gradients are not finite");
  adam.step(refs);
  return loss;
}

std::vector<LangExample> make_lang_corpus(const std::vector<Scene>& scenes,
                                          const SplitConfig& split, const SpeakerConfig& speaker,
                                          const Vocabulary& vocab, int count, int segment_n,
                                          Rng& rng) {
  if (count < 1) throw training_error("corpus count must be >= 1");
  if (scenes.empty()) throw training_error("corpus needs at least one scene");
  std::vector<LangExample> corpus;
  corpus.reserve(static_cast<size_t>(count));
  std::uniform_int_distribution<size_t> spick(0, scenes.size() - 1);
  std::uniform_int_distribution<int> hpick(0, 3);
  while (static_cast<int>(corpus.size()) < count) {
    const Scene& scene = scenes[spick(rng)];
    std::uniform_int_distribution<int> xpick(0, scene.width - 1);
    std::uniform_int_distribution<int> ypick(0, scene.height - 1);
    Cell start{xpick(rng), ypick(rng)};
    Cell goal{xpick(rng), ypick(rng)};
    if (!scene.navigable(start) || !scene.navigable(goal) || start == goal) continue;
    Pose pose{start.x, start.y, static_cast<Heading>(hpick(rng))};
    Segment segment = extract_segment(scene, pose, goal, segment_n);
    if (segment.empty()) continue;
    SpeakerConfig cfg = speaker;
    cfg.rng_seed = rng();

    LangExample ex;
    ex.scene = &scene;
    ex.split = &split;
    ex.spec.scene_seed = scene.seed;
    ex.spec.start = pose;
    ex.spec.goal_object_id = -1;
    ex.spec.sound_duration = 0;  // offline pairs are silent
    ex.start = pose;
    ex.episode_start = pose;
    ex.t0 = 0;
    ex.prev_action = -1;
    ex.goal = goal;
    ex.g0 = uniform_goal(static_cast<int>(split.signatures.rows()));
    ex.instruction = speak(segment, scene, cfg, vocab);
    ex.oracle_actions = segment.actions();
    ex.noise_seed = rng();
    corpus.push_back(std::move(ex));
  }
  return corpus;
}

void save_lang_corpus_jsonl(const std::string& path, const std::vector<LangExample>& corpus) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot open for writing: " + path);
  for (const LangExample& ex : corpus) {
    json j;
    j["instruction"] = ex.instruction.tokens;
    json actions = json::array();
    for (Action a : ex.oracle_actions) actions.push_back(to_string(a));
    j["actions"] = actions;
    j["scene_seed"] = ex.spec.scene_seed;
    j["start"] = {{"x", ex.start.x}, {"y", ex.start.y}, {"heading", to_string(ex.start.heading)}};
    j["goal"] = {{"x", ex.goal.x}, {"y", ex.goal.y}};
    j["noise_seed"] = ex.noise_seed;
    out << j.dump() << "\n";
  }
}

std::vector<LangExample> load_lang_corpus_jsonl(const std::string& path,
                                                const std::vector<Scene>& scenes,
                                                const SplitConfig& split) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open: " + path);
  std::vector<LangExample> corpus;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw parse_error("corpus line is malformed");
    LangExample ex;
    std::uint64_t seed = j.at("scene_seed").get<std::uint64_t>();
    for (const Scene& s : scenes) {
      if (s.seed == seed) ex.scene = &s;
    }
    if (ex.scene == nullptr) throw input_error("corpus references unknown scene seed");
    ex.split = &split;
    ex.instruction.tokens = j.at("instruction").get<std::vector<int>>();
    for (const auto& name : j.at("actions")) {
      ex.oracle_actions.push_back(action_from_string(name.get<std::string>()));
    }
    ex.start.x = j.at("start").at("x").get<int>();
    ex.start.y = j.at("start").at("y").get<int>();
    std::string h = j.at("start").at("heading").get<std::string>();
    for (int k = 0; k < 4; ++k) {
      if (h == to_string(static_cast<Heading>(k))) ex.start.heading = static_cast<Heading>(k);
    }
    ex.goal = {j.at("goal").at("x").get<int>(), j.at("goal").at("y").get<int>()};
    ex.noise_seed = j.value("noise_seed", 0ULL);
    ex.spec.scene_seed = seed;
    ex.spec.start = ex.start;
    ex.spec.goal_object_id = -1;
    ex.spec.sound_duration = 0;
    ex.episode_start = ex.start;
    ex.t0 = 0;
    ex.prev_action = -1;
    ex.g0 = uniform_goal(static_cast<int>(split.signatures.rows()));
    corpus.push_back(std::move(ex));
  }
  return corpus;
}

PretrainStats pretrain_offline(LangPolicyNet& net, const std::vector<LangExample>& corpus,
                               const GoalEstimator* estimator, const AudioParams& audio,
                               const PretrainOptions& opts) {
  if (corpus.empty()) throw training_error("pretraining corpus is empty");
  std::vector<size_t> idx(corpus.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(mix_seed(0xbead5, corpus.size()));
  std::shuffle(idx.begin(), idx.end(), rng);

  size_t val_count = std::max<size_t>(1, static_cast<size_t>(opts.val_fraction * static_cast<double>(corpus.size())));
  if (val_count >= corpus.size()) throw training_error("corpus too small for a validation split");
  size_t train_count = corpus.size() - val_count;

  std::vector<LangExample> val;
  for (size_t i = train_count; i < corpus.size(); ++i) val.push_back(corpus[idx[i]]);

  nn::Adam adam;
  adam.lr = opts.lr;
  adam.init(net.params());

  PretrainStats stats;
  double best = -1.0;
  int since_best = 0;
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    std::shuffle(idx.begin(), idx.begin() + static_cast<long>(train_count), rng);
    double loss_sum = 0.0;
    int batches = 0;
    for (size_t begin = 0; begin < train_count; begin += static_cast<size_t>(opts.batch_size)) {
      size_t end = std::min(train_count, begin + static_cast<size_t>(opts.batch_size));
      std::vector<LangExample> batch;
      for (size_t i = begin; i < end; ++i) batch.push_back(corpus[idx[i]]);
      loss_sum += imitation_update(net, batch, estimator, audio, adam, opts.parallel);
      ++batches;
    }
    stats.epoch_loss.push_back(loss_sum / std::max(1, batches));
    stats.epochs_run = epoch + 1;

    double acc = vln_step_n(net, val, estimator, audio, 1);
    stats.val_step1 = acc;
    if (acc > best + 1e-4) {
      best = acc;
      since_best = 0;
    } else if (++since_best >= opts.patience) {
      break;
    }
  }
  return stats;
}

double online_finetune(LangPolicyNet& net, const std::vector<LangExample>& pairs,
                       const GoalEstimator* estimator, const AudioParams& audio, nn::Adam& adam,
                       int batch_size, bool parallel) {
  if (pairs.empty()) return 0.0;  // no queries occurred
  double loss = 0.0;
  int batches = 0;
  for (size_t begin = 0; begin < pairs.size(); begin += static_cast<size_t>(batch_size)) {
    size_t end = std::min(pairs.size(), begin + static_cast<size_t>(batch_size));
    std::vector<LangExample> batch(pairs.begin() + static_cast<long>(begin),
                                   pairs.begin() + static_cast<long>(end));
    loss += imitation_update(net, batch, estimator, audio, adam, parallel);
    ++batches;
  }
  return loss / std::max(1, batches);
}

double vln_step_n(LangPolicyNet& net, const std::vector<LangExample>& pairs,
                  const GoalEstimator* estimator, const AudioParams& audio, int n,
                  bool mask_instruction) {
  if (pairs.empty()) throw input_error("vln_step_n: no pairs");
  if (n < 1 || n > net.cfg.nu) throw input_error("vln_step_n: n out of range");
  int hits = 0;
  for (const LangExample& ex : pairs) {
    UnrollResult r = lang_unroll(net, ex, estimator, audio, false, 0.0, mask_instruction);
    if (r.match_prefix >= n) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(pairs.size());
}

}  // namespace avnav
