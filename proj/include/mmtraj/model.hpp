#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "mmtraj/config.hpp"
#include "mmtraj/data.hpp"
#include "mmtraj/layers.hpp"
#include "mmtraj/params.hpp"
#include "mmtraj/tensor.hpp"

namespace mmtraj {

/// K trajectory hypotheses per vehicle with their likelihoods.
struct ModePrediction {
  Tensor trajectories;  // [N, K, T_pred, 2], scene frame
  Tensor probabilities; // [N, K]
  std::optional<Tensor> sigma;  // [N, K, T_pred, 2]
  /// false for vehicles with no observed history; their rows are placeholders
  /// (zero trajectories, uniform probabilities).
  std::vector<bool> active;
};

struct BestMode {
  Tensor trajectories;  // [N, T_pred, 2]
  std::vector<std::size_t> index;
};

/// Scaled state differences s_i - s_j at the last common history frame (or
/// their mean over common frames); zero where a pair shares no frame.
struct PairwiseDeltas {
  Tensor delta;  // [N, N, F]
  Mask valid;    // [N, N]
};

PairwiseDeltas pairwise_deltas(const data::Scene& scene, const ModelConfig& config);

struct RelativeBias {
  Tensor bias;       // [H, N, N]
  Mask valid_pairs;  // [N, N]; false where a pair shares no history frame (bias 0)
};

/// Sinusoidal table [T, d]: even columns sin(t / 10000^(2i/d)), odd columns cos.
Tensor positional_encoding(std::size_t t_total, std::size_t d_model);

/// Scene history [N, T_hist, F] after channel selection and scaling; masked frames are 0.
Tensor scaled_history(const data::Scene& scene, const ModelConfig& config);

/// MLP(history) + PE, plus the learned intention vector of `intent` when given.
Tensor embed_inputs(const data::Scene& scene, const ModelParams& params, const ModelConfig& config,
                    std::optional<std::size_t> intent = std::nullopt);

/// Self-attention along each row's own time axis; `time_mask` [B, T] marks valid frames.
Tensor temporal_attention_block(const Tensor& x, const Mask& time_mask, const AttentionLayerParams& layer,
                                const ModelConfig& config);

RelativeBias relative_bias(const data::Scene& scene, const ModelParams& params, const ModelConfig& config);

/// Attention across vehicles at each frame of `x` [N, T, d] with logits
/// QK^T/sqrt(d_head) + bias. Absent vehicles are neither keys nor updated.
Tensor spatial_attention_block(const Tensor& x, const Mask& presence, const Tensor& bias,
                               const AttentionLayerParams& layer, const ModelConfig& config,
                               BlockCapture* capture = nullptr);

/// Shared temporal encoder over the history: [N, T_hist, d].
Tensor encode(const data::Scene& scene, const ModelParams& params, const ModelConfig& config);

struct TrajectoryDecoderOutput {
  Tensor offsets;       // [N, K, T_pred, 2] per-mode residual blocks
  Tensor trajectories;  // [N, K, T_pred, 2]
  std::optional<Tensor> sigma;
};

/// Mode k = sum of offset blocks 0..k, integrated over time from the last
/// observed position (displacement mode) or added to it (absolute mode).
Tensor trajectories_from_offsets(const Tensor& offsets, const Tensor& last_positions, const ModelConfig& config);

TrajectoryDecoderOutput trajectory_decoder(const Tensor& encoded, const data::Scene& scene, const ModelParams& params,
                                           const ModelConfig& config);

struct ProbabilityDecoderOutput {
  Tensor logits;         // [N, K]
  Tensor probabilities;  // [N, K]
};

ProbabilityDecoderOutput probability_decoder(const Tensor& encoded, const data::Scene& scene, const Tensor* bias,
                                             const ModelParams& params, const ModelConfig& config,
                                             AttentionTrace* trace = nullptr);

ModePrediction forward(const data::Scene& scene, const ModelParams& params, const ModelConfig& config,
                       AttentionTrace* trace = nullptr);

/// Highest-probability mode per vehicle; ties go to the lowest index.
BestMode select_best(const ModePrediction& prediction);

}  // namespace mmtraj
