#include "mmtraj/loss.hpp"

#include <cmath>
#include <numbers>

#include "mmtraj/errors.hpp"
#include "mmtraj/ops.hpp"

namespace mmtraj {

namespace {

std::vector<std::size_t> included(const Winners& winner) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < winner.size(); ++i) {
    if (winner[i]) rows.push_back(i);
  }
  return rows;
}

Tensor select_rows(const Tensor& x, const std::vector<std::size_t>& rows) {
  if (rows.size() == x.dim(0)) return x;
  std::vector<Tensor> parts;
  parts.reserve(rows.size());
  for (std::size_t r : rows) parts.push_back(ops::slice(x, 0, r, 1));
  return ops::concat(parts, 0);
}

Mask select_mask_rows(const Mask& m, const std::vector<std::size_t>& rows) {
  const std::size_t width = m.shape[1];
  Mask out(Shape{rows.size(), width}, false);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t t = 0; t < width; ++t) out.set(i, t, m.at(rows[i], t));
  }
  return out;
}

// Winner trajectories [V, T, 2] gathered from [V, K, T, 2].
Tensor winner_mode(const Tensor& modes, const std::vector<std::size_t>& winners) {
  const std::size_t v = modes.dim(0), t = modes.dim(2);
  const Tensor moved = ops::permute(modes, {0, 2, 3, 1});  // [V, T, 2, K]
  std::vector<std::size_t> index;
  index.reserve(v * t * 2);
  for (std::size_t i = 0; i < v; ++i) index.insert(index.end(), t * 2, winners[i]);
  return ops::reshape(ops::take_last(moved, index), Shape{v, t, 2});
}

std::vector<std::size_t> winners_of(const Winners& winner, const std::vector<std::size_t>& rows) {
  std::vector<std::size_t> w;
  for (std::size_t r : rows) w.push_back(*winner[r]);
  return w;
}

}  // namespace

WtaResult wta_loss(const ModePrediction& pred, const Tensor& gt, const Mask& future_mask) {
  const Tensor& traj = pred.trajectories;
  if (traj.rank() != 4 || gt.shape() != Shape{traj.dim(0), traj.dim(2), 2} ||
      future_mask.shape != Shape{traj.dim(0), traj.dim(2)}) {
    throw DimensionError("wta loss: trajectories " + shape_str(traj.shape()) + ", ground truth " +
                         shape_str(gt.shape()) + ", mask " + shape_str(future_mask.shape));
  }
  const std::size_t n = traj.dim(0), k = traj.dim(1), tp = traj.dim(2);
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < n; ++i) {
    if (!pred.active.empty() && !pred.active[i]) continue;
    bool any = false;
    for (std::size_t t = 0; t < tp && !any; ++t) any = future_mask.at(i, t);
    if (any) rows.push_back(i);
  }
  if (rows.empty()) throw DegenerateInputError("wta loss: no vehicle has a valid future frame");
  const std::size_t v = rows.size();

  const Tensor modes = select_rows(traj, rows);
  const Tensor target = ops::expand(ops::reshape(select_rows(gt, rows), Shape{v, 1, tp, 2}), Shape{v, k, tp, 2});
  const Tensor sq = ops::sum(ops::square(ops::sub(modes, target)), 3);  // [V, K, T]
  const Mask fm = select_mask_rows(future_mask, rows);
  Mask keep(Shape{v, k, tp}, false);
  for (std::size_t i = 0; i < v; ++i) {
    for (std::size_t m = 0; m < k; ++m) {
      for (std::size_t t = 0; t < tp; ++t) keep.data[(i * k + m) * tp + t] = fm.data[i * tp + t];
    }
  }
  WtaResult out;
  out.mode_errors = ops::mean(sq, 2, &keep);
  out.winner.assign(n, std::nullopt);
  const auto e = out.mode_errors.data();
  std::vector<std::size_t> best(v, 0);
  for (std::size_t i = 0; i < v; ++i) {
    for (std::size_t m = 1; m < k; ++m) {
      if (e[i * k + m] < e[i * k + best[i]]) best[i] = m;
    }
    out.winner[rows[i]] = best[i];
  }
  out.loss = ops::mean_all(ops::take_last(out.mode_errors, best));
  return out;
}

Tensor prob_loss(const Tensor& probabilities, const Winners& winner) {
  if (probabilities.rank() != 2 || probabilities.dim(0) != winner.size()) {
    throw DimensionError("prob loss: probabilities " + shape_str(probabilities.shape()) + " for " +
                         std::to_string(winner.size()) + " vehicles");
  }
  const auto rows = included(winner);
  if (rows.empty()) throw DegenerateInputError("prob loss: no vehicle included");
  const Tensor p = select_rows(probabilities, rows);
  return ops::neg(ops::mean_all(ops::take_last(ops::log(p), winners_of(winner, rows))));
}

Tensor gaussian_nll(const ModePrediction& pred, const Tensor& gt, const Winners& winner, const Mask& future_mask) {
  if (!pred.sigma) throw UsageError("gaussian nll requires the gaussian head");
  const auto rows = included(winner);
  if (rows.empty()) throw DegenerateInputError("gaussian nll: no vehicle included");
  const auto w = winners_of(winner, rows);
  const Tensor mu = winner_mode(select_rows(pred.trajectories, rows), w);
  const Tensor sigma = ops::clamp_min(winner_mode(select_rows(*pred.sigma, rows), w), kSigmaFloor);
  const Tensor z = ops::mul(ops::sub(mu, select_rows(gt, rows)), ops::exp(ops::neg(ops::log(sigma))));
  // per axis: log sigma + log(2 pi)/2 + z^2/2
  const Tensor per_axis = ops::add(ops::add_scalar(ops::log(sigma), 0.5 * std::log(2.0 * std::numbers::pi)),
                                   ops::scale(ops::square(z), 0.5));
  const Tensor per_point = ops::sum(per_axis, 2);  // [V, T]
  const Mask fm = select_mask_rows(future_mask, rows);
  return ops::mean_all(ops::masked_select(per_point, fm));
}

LossBreakdown compute_loss(const ModePrediction& pred, const data::Scene& scene, const ModelConfig& config) {
  const Tensor gt = scene.future_positions();
  const Mask fm = scene.future_mask();
  WtaResult w = wta_loss(pred, gt, fm);
  LossBreakdown out;
  out.wta = w.loss;
  out.winner_index = w.winner;
  out.prob = prob_loss(pred.probabilities, w.winner);
  out.total = ops::add(out.wta, ops::scale(out.prob, config.alpha));
  if (pred.sigma) {
    out.gauss = gaussian_nll(pred, gt, w.winner, fm);
    if (config.beta != 0.0) out.total = ops::add(out.total, ops::scale(*out.gauss, config.beta));
  }
  return out;
}

}  // namespace mmtraj
