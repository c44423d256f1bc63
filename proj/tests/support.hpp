#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "mmtraj/config.hpp"
#include "mmtraj/data.hpp"
#include "mmtraj/tensor.hpp"

namespace testing {

using mmtraj::Shape;
using mmtraj::Tensor;

inline Tensor random_tensor(std::mt19937_64& rng, Shape shape, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Tensor t(std::move(shape));
  for (double& v : t.mutable_data()) v = dist(rng);
  return t;
}

inline Tensor leaf(Tensor t) {
  t.set_requires_grad(true);
  return t;
}

using ScalarFn = std::function<Tensor(const std::vector<Tensor>&)>;

/// Analytic gradient of f at `inputs` (leaves requiring grad) via the tape.
inline std::vector<std::vector<double>> analytic_grads(const ScalarFn& f, std::vector<Tensor>& inputs) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    mmtraj::Tape tape;
    Tensor loss = f(inputs);
    tape.backward(loss);
  }
  std::vector<std::vector<double>> out;
  for (auto& t : inputs) {
    if (t.has_grad()) {
      out.emplace_back(t.grad().begin(), t.grad().end());
    } else {
      out.emplace_back(t.numel(), 0.0);
    }
  }
  return out;
}

/// Central differences with step h; evaluated without a tape.
inline std::vector<double> numeric_grad(const ScalarFn& f, std::vector<Tensor>& inputs, std::size_t which,
                                        double h = 1e-5) {
  std::vector<double> g(inputs[which].numel());
  auto d = inputs[which].mutable_data();
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double x0 = d[i];
    d[i] = x0 + h;
    const double fp = f(inputs).item();
    d[i] = x0 - h;
    const double fm = f(inputs).item();
    d[i] = x0;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// ||a - c|| / (||c|| + 1e-8) over one tensor's entries.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& c) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - c[i]) * (a[i] - c[i]);
    den += c[i] * c[i];
  }
  return std::sqrt(num) / (std::sqrt(den) + 1e-8);
}

/// Largest per-input relative error between tape and finite-difference gradients.
inline double grad_check(const ScalarFn& f, std::vector<Tensor> inputs, double h = 1e-5) {
  const auto analytic = analytic_grads(f, inputs);
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    worst = std::max(worst, relative_error(analytic[k], numeric_grad(f, inputs, k, h)));
  }
  return worst;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return a.shape() == b.shape() ? m : INFINITY;
}

/// Small model used by property tests: 5 Hz, 2 s history, 2 s future.
inline mmtraj::ModelConfig tiny_config(std::size_t k = 3, bool spatial = true) {
  mmtraj::ModelConfig c;
  c.K = k;
  c.H = 2;
  c.d_head = 4;
  c.enc_layers = c.traj_dec_layers = c.prob_dec_layers = 1;
  c.mlp_hidden = 12;
  c.t_hist = 10;
  c.t_pred = 10;
  c.spatial_enabled = spatial;
  c.seed = 11;
  return c;
}

inline mmtraj::data::SynthOptions tiny_synth(double partial = 0.0) {
  mmtraj::data::SynthOptions o;
  o.hist_s = 2.0;
  o.pred_s = 2.0;
  o.change_start_min_s = 1.0;
  o.change_start_max_s = 2.5;
  o.change_duration_s = 1.5;
  o.partial_presence = partial;
  return o;
}

inline mmtraj::data::Scene tiny_scene(std::uint64_t seed, std::size_t n, double partial = 0.0) {
  return mmtraj::data::synth_highway(seed, n, 3, {0.4, 0.2, 0.2, 0.2}, tiny_synth(partial));
}

}  // namespace testing
