#include <cmath>

#include "mmtraj/errors.hpp"
#include "mmtraj/trainer.hpp"

namespace mmtraj {

double Adam::step(ModelParams& params, const std::vector<std::vector<double>>& grads) {
  double sq = 0.0;
  for (const auto& g : grads) {
    for (double v : g) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  const double clip = (config_.grad_clip > 0.0 && norm > config_.grad_clip) ? config_.grad_clip / norm : 1.0;

  if (m_.empty()) {
    for (const auto& g : grads) {
      m_.emplace_back(g.size(), 0.0);
      v_.emplace_back(g.size(), 0.0);
    }
  }
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  std::size_t idx = 0;
  params.visit([&](const std::string& name, Tensor& p) {
    if (idx >= grads.size() || grads[idx].size() != p.numel()) {
      throw DimensionError("optimizer gradient layout does not match parameter " + name);
    }
    auto w = p.mutable_data();
    const auto& g = grads[idx];
    auto& m = m_[idx];
    auto& v = v_[idx];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i] * clip;
      m[i] = b1 * m[i] + (1.0 - b1) * gi;
      v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
      w[i] -= config_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.adam_eps);
    }
    ++idx;
  });
  return norm;
}

}  // namespace mmtraj
