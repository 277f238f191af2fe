#include "avnav/nn.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace avnav::nn {

using nlohmann::json;

double uniform_init_scale(Eigen::Index fan_in, Eigen::Index fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

static Mat uniform_mat(Eigen::Index rows, Eigen::Index cols, double scale, Rng& rng) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = u(rng);
  }
  return m;
}

Linear::Linear(Eigen::Index out, Eigen::Index in, Rng& rng)
    : w(uniform_mat(out, in, uniform_init_scale(in, out), rng)),
      b(Vec::Zero(out)),
      gw(Mat::Zero(out, in)),
      gb(Vec::Zero(out)) {}

Vec Linear::backward(const Vec& x, const Vec& dy) {
  gw.noalias() += dy * x.transpose();
  gb += dy;
  return w.transpose() * dy;
}

void Linear::zero_grad() {
  gw.setZero();
  gb.setZero();
}

void Linear::collect(const std::string& prefix, bool trainable, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".w", w.data(), gw.data(), w.size(), w.rows(), w.cols(), trainable});
  out.push_back({prefix + ".b", b.data(), gb.data(), b.size(), b.size(), 1, trainable});
}

AttentionPool::AttentionPool(Eigen::Index d, Eigen::Index dx, Rng& rng)
    : wk(uniform_mat(d, dx, uniform_init_scale(dx, d), rng)),
      wv(uniform_mat(d, dx, uniform_init_scale(dx, d), rng)),
      gwk(Mat::Zero(d, dx)),
      gwv(Mat::Zero(d, dx)) {}

Vec AttentionPool::forward(const Vec& q, Eigen::Ref<const Mat> items, AttnTrace& trace) const {
  trace.k.noalias() = wk * items;
  trace.v.noalias() = wv * items;
  trace.q = q;
  double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(wk.rows()));
  Vec scores = (trace.k.transpose() * q) * inv_sqrt_d;
  trace.a = softmax(scores);
  return trace.v * trace.a;
}

Vec AttentionPool::backward(Eigen::Ref<const Mat> items, const AttnTrace& trace, const Vec& dout,
                            Eigen::Ref<Mat> ditems) {
  double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(wk.rows()));
  // out = V a
  Mat dv = dout * trace.a.transpose();       // d x m
  Vec da = trace.v.transpose() * dout;       // m
  Vec ds = softmax_backward(trace.a, da) * inv_sqrt_d;
  Vec dq = trace.k * ds;
  Mat dk = trace.q * ds.transpose();         // d x m
  gwk.noalias() += dk * items.transpose();
  gwv.noalias() += dv * items.transpose();
  ditems.noalias() += wk.transpose() * dk + wv.transpose() * dv;
  return dq;
}

void AttentionPool::zero_grad() {
  gwk.setZero();
  gwv.setZero();
}

void AttentionPool::collect(const std::string& prefix, bool trainable, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".wk", wk.data(), gwk.data(), wk.size(), wk.rows(), wk.cols(), trainable});
  out.push_back({prefix + ".wv", wv.data(), gwv.data(), wv.size(), wv.rows(), wv.cols(), trainable});
}

Vec softmax(const Vec& logits) {
  Vec shifted = logits.array() - logits.maxCoeff();
  Vec e = shifted.array().exp();
  return e / e.sum();
}

Vec softmax_backward(const Vec& p, const Vec& dp) {
  double dot = p.dot(dp);
  return p.array() * (dp.array() - dot);
}

double cross_entropy(const Vec& probs, int target) {
  return -std::log(std::max(probs[target], 1e-12));
}

Vec cross_entropy_grad(const Vec& probs, int target) {
  Vec g = probs;
  g[target] -= 1.0;
  return g;
}

int argmax(const Vec& v) {
  Eigen::Index idx = 0;
  v.maxCoeff(&idx);
  return static_cast<int>(idx);
}

int sample_categorical(const Vec& probs, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double r = u(rng);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (r < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size() - 1);
}

void Adam::init(const std::vector<ParamRef>& params) {
  t = 0;
  m.clear();
  v.clear();
  for (const auto& p : params) {
    m.push_back(Vec::Zero(p.size));
    v.push_back(Vec::Zero(p.size));
  }
}

void Adam::step(const std::vector<ParamRef>& params, double lr_override) {
  if (m.size() != params.size()) init(params);
  ++t;
  double rate = lr_override > 0.0 ? lr_override : lr;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (size_t i = 0; i < params.size(); ++i) {
    const ParamRef& p = params[i];
    if (!p.trainable) continue;
    Eigen::Map<Vec> value(p.value, p.size);
    Eigen::Map<const Vec> grad(p.grad, p.size);
    m[i] = beta1 * m[i] + (1.0 - beta1) * grad;
    v[i] = beta2 * v[i].array().matrix() + (1.0 - beta2) * grad.array().square().matrix();
    Vec mhat = m[i] / bc1;
    Vec vhat = v[i] / bc2;
    value.array() -= rate * mhat.array() / (vhat.array().sqrt() + eps);
  }
}

void zero_grads(const std::vector<ParamRef>& params) {
  for (const auto& p : params) Eigen::Map<Vec>(p.grad, p.size).setZero();
}

double grad_norm(const std::vector<ParamRef>& params) {
  double sq = 0.0;
  for (const auto& p : params) sq += Eigen::Map<const Vec>(p.grad, p.size).squaredNorm();
  return std::sqrt(sq);
}

void clip_grad_norm(const std::vector<ParamRef>& params, double max_norm) {
  double norm = grad_norm(params);
  if (norm <= max_norm || norm == 0.0) return;
  double scale = max_norm / norm;
  for (const auto& p : params) Eigen::Map<Vec>(p.grad, p.size) *= scale;
}

bool grads_finite(const std::vector<ParamRef>& params) {
  for (const auto& p : params) {
    if (!Eigen::Map<const Vec>(p.grad, p.size).allFinite()) return false;
  }
  return true;
}

std::string params_to_json(const std::string& kind, const std::vector<ParamRef>& params) {
  json arrays = json::object();
  for (const auto& p : params) {
    std::vector<double> data(p.value, p.value + p.size);
    arrays[p.name] = {{"rows", p.rows}, {"cols", p.cols}, {"data", data}};
  }
  json j = {{"schema", 1}, {"kind", kind}, {"arrays", arrays}};
  return j.dump();
}

void params_from_json(const std::string& text, const std::string& kind,
                      const std::vector<ParamRef>& params) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw parse_error("checkpoint JSON is malformed");
  if (j.value("schema", 0) != 1) throw parse_error("unsupported checkpoint schema");
  if (j.value("kind", std::string()) != kind) {
    throw parse_error("checkpoint kind mismatch: expected " + kind);
  }
  const json& arrays = j.at("arrays");
  for (const auto& p : params) {
    if (!arrays.contains(p.name)) throw parse_error("checkpoint missing array " + p.name);
    const json& a = arrays[p.name];
    auto data = a.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != p.size) {
      throw parse_error("checkpoint shape mismatch for " + p.name);
    }
    std::copy(data.begin(), data.end(), p.value);
  }
}

void save_checkpoint(const std::string& path, const std::string& kind,
                     const std::vector<ParamRef>& params) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot open for writing: " + path);
  out << params_to_json(kind, params);
}

void load_checkpoint(const std::string& path, const std::string& kind,
                     const std::vector<ParamRef>& params) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open checkpoint: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  params_from_json(ss.str(), kind, params);
}

}  // namespace avnav::nn
