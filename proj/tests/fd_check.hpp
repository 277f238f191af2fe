#pragma once

#include <cmath>
#include <functional>

#include "avnav/nn.hpp"

// Central finite-difference check against analytic gradients.
// loss_grad() must zero grads, run forward+backward and return the loss;
// loss_only() must return the loss without touching gradients.
inline double fd_max_rel_error(const std::vector<avnav::nn::ParamRef>& refs,
                               const std::function<double()>& loss_grad,
                               const std::function<double()>& loss_only, avnav::Rng& rng,
                               int coords_per_block = 6, double h = 1e-4) {
  loss_grad();
  std::vector<Eigen::VectorXd> analytic;
  for (const auto& p : refs) {
    analytic.emplace_back(Eigen::Map<const Eigen::VectorXd>(p.grad, p.size));
  }
  double worst = 0.0;
  for (size_t b = 0; b < refs.size(); ++b) {
    const auto& p = refs[b];
    std::uniform_int_distribution<Eigen::Index> pick(0, p.size - 1);
    for (int s = 0; s < coords_per_block; ++s) {
      Eigen::Index i = pick(rng);
      double saved = p.value[i];
      p.value[i] = saved + h;
      double up = loss_only();
      p.value[i] = saved - h;
      double down = loss_only();
      p.value[i] = saved;
      double numeric = (up - down) / (2.0 * h);
      double a = analytic[b][i];
      // Coordinates below the central-difference noise floor carry no signal.
      if (std::abs(a) < 1e-7 && std::abs(numeric) < 1e-7) continue;
      double rel = std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), 1e-8);
      worst = std::max(worst, rel);
    }
  }
  return worst;
}
