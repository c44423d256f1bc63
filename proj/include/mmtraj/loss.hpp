#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "mmtraj/config.hpp"
#include "mmtraj/data.hpp"
#include "mmtraj/model.hpp"
#include "mmtraj/tensor.hpp"

namespace mmtraj {

/// Per-vehicle WTA winner; nullopt for vehicles left out of the loss
/// (no valid future frame, or no observed history).
using Winners = std::vector<std::optional<std::size_t>>;

struct WtaResult {
  Tensor loss;
  Winners winner;
  Tensor mode_errors;  // [V, K] masked mean squared displacement of the included vehicles
};

/// Mean over vehicles of min_k (masked mean squared displacement of mode k).
/// `gt` is [N, T_pred, 2], `future_mask` [N, T_pred].
WtaResult wta_loss(const ModePrediction& pred, const Tensor& gt, const Mask& future_mask);

/// Mean over included vehicles of -log P[i, winner(i)].
Tensor prob_loss(const Tensor& probabilities, const Winners& winner);

/// Axis-independent Gaussian NLL of the winning mode, summed over the two
/// axes and averaged over valid frames; sigma is floored at `kSigmaFloor`.
Tensor gaussian_nll(const ModePrediction& pred, const Tensor& gt, const Winners& winner, const Mask& future_mask);

inline constexpr double kSigmaFloor = 1e-3;

struct LossBreakdown {
  Tensor total;
  Tensor wta;
  Tensor prob;
  std::optional<Tensor> gauss;
  Winners winner_index;
};

/// total = wta + alpha*prob + beta*gauss on a scene already in the model frame.
LossBreakdown compute_loss(const ModePrediction& pred, const data::Scene& scene, const ModelConfig& config);

}  // namespace mmtraj
