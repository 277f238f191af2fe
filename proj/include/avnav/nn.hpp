#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "avnav/common.hpp"

namespace avnav::nn {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Flattened view of one parameter block; nets rebuild these on demand,
// the underlying storage must stay put between calls.
struct ParamRef {
  std::string name;
  double* value = nullptr;
  double* grad = nullptr;
  Eigen::Index size = 0;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  bool trainable = true;
};

struct Linear {
  Mat w;
  Vec b;
  Mat gw;
  Vec gb;

  Linear() = default;
  Linear(Eigen::Index out, Eigen::Index in, Rng& rng);

  Eigen::Index in_dim() const { return w.cols(); }
  Eigen::Index out_dim() const { return w.rows(); }

  Vec forward(const Vec& x) const { return w * x + b; }
  // Accumulates gw/gb; returns dL/dx.
  Vec backward(const Vec& x, const Vec& dy);
  void zero_grad();
  void collect(const std::string& prefix, bool trainable, std::vector<ParamRef>& out);
};

// Single-head scaled-dot-product attention pooling. The query is produced by
// the caller (a learned vector or a projection of the goal descriptor).
struct AttnTrace {
  Mat k;  // d x m
  Mat v;  // d x m
  Vec a;  // softmax weights, m
  Vec q;
};

struct AttentionPool {
  Mat wk, wv;
  Mat gwk, gwv;

  AttentionPool() = default;
  AttentionPool(Eigen::Index d, Eigen::Index dx, Rng& rng);

  Vec forward(const Vec& q, Eigen::Ref<const Mat> items, AttnTrace& trace) const;
  // Accumulates gwk/gwv and ditems (same block passed to forward); returns dq.
  Vec backward(Eigen::Ref<const Mat> items, const AttnTrace& trace, const Vec& dout,
               Eigen::Ref<Mat> ditems);
  void zero_grad();
  void collect(const std::string& prefix, bool trainable, std::vector<ParamRef>& out);
};

Vec softmax(const Vec& logits);
// d(logits) given softmax output p and upstream dp.
Vec softmax_backward(const Vec& p, const Vec& dp);
// Cross entropy -log p[target] and its gradient w.r.t. logits (p - onehot).
double cross_entropy(const Vec& probs, int target);
Vec cross_entropy_grad(const Vec& probs, int target);

int argmax(const Vec& v);
// Inverse-CDF draw; deterministic given the rng stream.
int sample_categorical(const Vec& probs, Rng& rng);

double uniform_init_scale(Eigen::Index fan_in, Eigen::Index fan_out);

struct Adam {
  double lr = 2.5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long t = 0;
  std::vector<Vec> m;
  std::vector<Vec> v;

  void init(const std::vector<ParamRef>& params);
  // Skips non-trainable blocks entirely (no moment update either).
  void step(const std::vector<ParamRef>& params, double lr_override = -1.0);
};

void zero_grads(const std::vector<ParamRef>& params);
double grad_norm(const std::vector<ParamRef>& params);
void clip_grad_norm(const std::vector<ParamRef>& params, double max_norm);
bool grads_finite(const std::vector<ParamRef>& params);

// Checkpoints: JSON {"schema":1, "kind":..., "arrays":{name:{rows,cols,data}}}.
std::string params_to_json(const std::string& kind, const std::vector<ParamRef>& params);
void params_from_json(const std::string& text, const std::string& kind,
                      const std::vector<ParamRef>& params);
void save_checkpoint(const std::string& path, const std::string& kind,
                     const std::vector<ParamRef>& params);
void load_checkpoint(const std::string& path, const std::string& kind,
                     const std::vector<ParamRef>& params);

}  // namespace avnav::nn
