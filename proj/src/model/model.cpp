#include "mmtraj/model.hpp"

#include <cmath>

#include "mmtraj/errors.hpp"
#include "mmtraj/ops.hpp"

namespace mmtraj {

namespace {

Mask broadcast_keys(const Mask& time_mask) {
  const std::size_t b = time_mask.shape[0], t = time_mask.shape[1];
  Mask m(Shape{b, t, t}, false);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t q = 0; q < t; ++q) {
      for (std::size_t k = 0; k < t; ++k) m.data[(i * t + q) * t + k] = time_mask.data[i * t + k];
    }
  }
  return m;
}

Mask expand_last(const Mask& m, std::size_t width) {
  Shape s = m.shape;
  s.push_back(width);
  Mask out(s, false);
  for (std::size_t i = 0; i < m.numel(); ++i) {
    for (std::size_t j = 0; j < width; ++j) out.data[i * width + j] = m.data[i];
  }
  return out;
}

Mask transpose_mask(const Mask& m) {
  const std::size_t r = m.shape[0], c = m.shape[1];
  Mask out(Shape{c, r}, false);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out.data[j * r + i] = m.data[i * c + j];
  }
  return out;
}

void require_frames(const Mask& time_mask, const char* where) {
  const std::size_t b = time_mask.shape[0], t = time_mask.shape[1];
  for (std::size_t i = 0; i < b; ++i) {
    bool any = false;
    for (std::size_t j = 0; j < t && !any; ++j) any = time_mask.data[i * t + j] != 0;
    if (!any) {
      throw DegenerateInputError(std::string(where) + ": row " + std::to_string(i) + " has no valid frame");
    }
  }
}

data::Scene select_vehicles(const data::Scene& scene, const std::vector<std::size_t>& keep) {
  data::Scene out = scene;
  const std::size_t row = scene.t_total() * data::kFeatureDim;
  out.features = Tensor(Shape{keep.size(), scene.t_total(), data::kFeatureDim});
  out.mask = Mask(Shape{keep.size(), scene.t_total()}, false);
  out.ids.clear();
  auto d = out.features.mutable_data();
  const auto src = scene.features.data();
  for (std::size_t i = 0; i < keep.size(); ++i) {
    std::copy_n(src.begin() + static_cast<long>(keep[i] * row), row, d.begin() + static_cast<long>(i * row));
    for (std::size_t t = 0; t < scene.t_total(); ++t) out.mask.set(i, t, scene.present(keep[i], t));
    out.ids.push_back(scene.ids[keep[i]]);
  }
  return out;
}

// Rebuilds an N-row tensor from the active rows of `part`, filling inactive rows with `fill`.
Tensor scatter_rows(const Tensor& part, const std::vector<bool>& active, double fill) {
  Shape row_shape = part.shape();
  row_shape[0] = 1;
  std::vector<Tensor> rows;
  std::size_t next = 0;
  for (bool a : active) {
    if (a) {
      rows.push_back(ops::slice(part, 0, next++, 1));
    } else {
      rows.push_back(Tensor(row_shape, fill));
    }
  }
  return ops::concat(rows, 0);
}

void check_scene(const data::Scene& scene, const ModelConfig& config) {
  if (scene.t_hist != config.t_hist || scene.t_pred != config.t_pred) {
    throw DimensionError("scene horizons " + std::to_string(scene.t_hist) + "/" + std::to_string(scene.t_pred) +
                         " do not match model " + std::to_string(config.t_hist) + "/" +
                         std::to_string(config.t_pred));
  }
}

}  // namespace

Tensor positional_encoding(std::size_t t_total, std::size_t d_model) {
  if (d_model % 2 != 0) throw ConfigError("positional encoding needs an even d_model, got " + std::to_string(d_model));
  Tensor pe(Shape{t_total, d_model});
  auto d = pe.mutable_data();
  for (std::size_t t = 0; t < t_total; ++t) {
    for (std::size_t i = 0; i < d_model / 2; ++i) {
      const double angle =
          static_cast<double>(t) / std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d_model));
      d[t * d_model + 2 * i] = std::sin(angle);
      d[t * d_model + 2 * i + 1] = std::cos(angle);
    }
  }
  return pe;
}

Tensor scaled_history(const data::Scene& scene, const ModelConfig& config) {
  const auto channels = config.input_channels();
  const auto scales = config.channel_scales();
  const std::size_t n = scene.num_vehicles(), th = scene.t_hist, f = channels.size();
  Tensor out(Shape{n, th, f});
  auto d = out.mutable_data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < th; ++t) {
      if (!scene.present(i, t)) continue;
      for (std::size_t c = 0; c < f; ++c) d[(i * th + t) * f + c] = scene.feature(i, t, channels[c]) / scales[c];
    }
  }
  return out;
}

Tensor embed_inputs(const data::Scene& scene, const ModelParams& params, const ModelConfig& config,
                    std::optional<std::size_t> intent) {
  check_scene(scene, config);
  if (intent && *intent >= config.K) {
    throw UsageError("intent index " + std::to_string(*intent) + " >= K=" + std::to_string(config.K));
  }
  const std::size_t d = config.d_model();
  const Tensor pe = ops::slice(positional_encoding(scene.t_total(), d), 0, 0, scene.t_hist);
  Tensor x = ops::add(mlp(scaled_history(scene, config), params.input_mlp), pe);
  if (intent) x = ops::add(x, ops::reshape(ops::slice(params.intent, 0, *intent, 1), Shape{d}));
  return x;
}

Tensor temporal_attention_block(const Tensor& x, const Mask& time_mask, const AttentionLayerParams& layer,
                                const ModelConfig& config) {
  if (x.rank() != 3 || time_mask.shape != Shape{x.dim(0), x.dim(1)}) {
    throw DimensionError("temporal block: input " + shape_str(x.shape()) + " with mask " +
                         shape_str(time_mask.shape));
  }
  require_frames(time_mask, "temporal attention");
  return attention_block(x, broadcast_keys(time_mask), layer, config.H, config.layer_norm_eps);
}

PairwiseDeltas pairwise_deltas(const data::Scene& scene, const ModelConfig& config) {
  const auto channels = config.input_channels();
  const auto scales = config.channel_scales();
  const std::size_t n = scene.num_vehicles(), f = channels.size(), th = scene.t_hist;
  PairwiseDeltas out{Tensor(Shape{n, n, f}), Mask(Shape{n, n}, false)};
  auto dd = out.delta.mutable_data();
  std::vector<double> acc(f);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      std::size_t used = 0;
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t t = th; t-- > 0;) {
        if (!scene.present(i, t) || !scene.present(j, t)) continue;
        for (std::size_t c = 0; c < f; ++c) {
          acc[c] += scene.feature(i, t, channels[c]) / scales[c] - scene.feature(j, t, channels[c]) / scales[c];
        }
        ++used;
        if (config.bias_frame == BiasFrame::kLastCommon) break;
      }
      if (used == 0) continue;
      out.valid.set(i, j, true);
      for (std::size_t c = 0; c < f; ++c) dd[(i * n + j) * f + c] = acc[c] / static_cast<double>(used);
    }
  }
  return out;
}

RelativeBias relative_bias(const data::Scene& scene, const ModelParams& params, const ModelConfig& config) {
  if (params.bias_mlp.l1.w.rank() != 2) throw UsageError("relative bias requires spatial attention parameters");
  const std::size_t n = scene.num_vehicles();
  const PairwiseDeltas pd = pairwise_deltas(scene, config);
  const Mask& valid = pd.valid;
  const Tensor& delta = pd.delta;
  const Tensor per_pair = mlp(delta, params.bias_mlp);  // [N, N, H]
  Tensor bias = ops::permute(per_pair, {2, 0, 1});
  Mask keep(Shape{config.H, n, n}, false);
  for (std::size_t h = 0; h < config.H; ++h) {
    std::copy(valid.data.begin(), valid.data.end(), keep.data.begin() + static_cast<long>(h * n * n));
  }
  return {ops::where(keep, bias, 0.0), valid};
}

Tensor spatial_attention_block(const Tensor& x, const Mask& presence, const Tensor& bias,
                               const AttentionLayerParams& layer, const ModelConfig& config, BlockCapture* capture) {
  if (x.rank() != 3 || presence.shape != Shape{x.dim(0), x.dim(1)}) {
    throw DimensionError("spatial block: input " + shape_str(x.shape()) + " with mask " + shape_str(presence.shape));
  }
  const Tensor by_time = ops::permute(x, {1, 0, 2});  // [T, N, d]
  const Mask present_tn = transpose_mask(presence);   // [T, N]
  const Tensor out =
      attention_block(by_time, broadcast_keys(present_tn), layer, config.H, config.layer_norm_eps, &bias,
                      &present_tn, capture);
  return ops::permute(out, {1, 0, 2});
}

Tensor encode(const data::Scene& scene, const ModelParams& params, const ModelConfig& config) {
  const Mask hist = scene.history_mask();
  Tensor x = embed_inputs(scene, params, config);
  for (const auto& layer : params.encoder) x = temporal_attention_block(x, hist, layer, config);
  return layer_norm(x, params.encoder_norm, config.layer_norm_eps);
}

Tensor trajectories_from_offsets(const Tensor& offsets, const Tensor& last_positions, const ModelConfig& config) {
  if (offsets.rank() != 4 || offsets.shape().back() != 2 || last_positions.shape() != Shape{offsets.dim(0), 2}) {
    throw DimensionError("offsets " + shape_str(offsets.shape()) + " with last positions " +
                         shape_str(last_positions.shape()));
  }
  Tensor modes = ops::cumsum(offsets, 1);
  if (config.time_integration == TimeIntegration::kDisplacement) modes = ops::cumsum(modes, 2);
  const Tensor origin =
      ops::expand(ops::reshape(last_positions, Shape{offsets.dim(0), 1, 1, 2}), offsets.shape());
  return ops::add(modes, origin);
}

TrajectoryDecoderOutput trajectory_decoder(const Tensor& encoded, const data::Scene& scene, const ModelParams& params,
                                           const ModelConfig& config) {
  const std::size_t n = scene.num_vehicles(), k = config.K, th = scene.t_hist, tp = scene.t_pred;
  const std::size_t t = th + tp, d = config.d_model();

  const Tensor memory = ops::expand(ops::reshape(encoded, Shape{n, 1, th, d}), Shape{n, k, th, d});
  const Tensor pe_future = ops::slice(positional_encoding(t, d), 0, th, tp);
  const Tensor queries = ops::expand(ops::reshape(ops::add(params.future_queries, pe_future), Shape{1, 1, tp, d}),
                                     Shape{n, k, tp, d});
  Tensor seq = ops::concat({memory, queries}, 2);
  seq = ops::add(seq, ops::expand(ops::reshape(params.intent, Shape{k, 1, d}), Shape{k, t, d}));
  seq = ops::reshape(seq, Shape{n * k, t, d});

  Mask time_mask(Shape{n * k, t}, true);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t m = 0; m < k; ++m) {
      for (std::size_t f = 0; f < th; ++f) time_mask.set(i * k + m, f, scene.present(i, f));
    }
  }
  for (const auto& layer : params.traj_decoder) seq = temporal_attention_block(seq, time_mask, layer, config);
  seq = layer_norm(seq, params.traj_norm, config.layer_norm_eps);
  const Tensor future = ops::slice(seq, 1, th, tp);

  TrajectoryDecoderOutput out;
  out.offsets = ops::reshape(ops::scale(mlp(future, params.traj_head), config.position_scale), Shape{n, k, tp, 2});
  out.trajectories = trajectories_from_offsets(out.offsets, scene.last_observed_positions(), config);
  if (config.gaussian_head) {
    out.sigma = ops::reshape(ops::softplus(mlp(future, params.sigma_head)), Shape{n, k, tp, 2});
  }
  return out;
}

ProbabilityDecoderOutput probability_decoder(const Tensor& encoded, const data::Scene& scene, const Tensor* bias,
                                             const ModelParams& params, const ModelConfig& config,
                                             AttentionTrace* trace) {
  const Mask hist = scene.history_mask();
  require_frames(hist, "probability decoder");
  if (config.spatial_enabled && (!bias || params.prob_spatial.size() != params.prob_temporal.size())) {
    throw UsageError("spatial attention enabled but bias or spatial parameters are missing");
  }
  Tensor x = encoded;
  for (std::size_t l = 0; l < params.prob_temporal.size(); ++l) {
    x = temporal_attention_block(x, hist, params.prob_temporal[l], config);
    if (config.spatial_enabled) {
      BlockCapture* capture = nullptr;
      if (trace) {
        trace->push_back(BlockCapture{l, {}});
        capture = &trace->back();
      }
      x = spatial_attention_block(x, hist, *bias, params.prob_spatial[l], config, capture);
    }
  }
  x = layer_norm(x, params.prob_norm, config.layer_norm_eps);
  const Mask pool = expand_last(hist, config.d_model());
  const Tensor pooled = ops::mean(x, 1, &pool);
  ProbabilityDecoderOutput out;
  out.logits = mlp(pooled, params.prob_head);
  out.probabilities = ops::softmax(out.logits, 1);
  return out;
}

ModePrediction forward(const data::Scene& scene, const ModelParams& params, const ModelConfig& config,
                       AttentionTrace* trace) {
  check_scene(scene, config);
  const std::size_t n = scene.num_vehicles();
  std::vector<bool> active(n, false);
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < n; ++i) {
    if (scene.last_history_frame(i)) {
      active[i] = true;
      keep.push_back(i);
    }
  }
  if (keep.empty()) throw DegenerateInputError("forward: no vehicle has an observed history frame");
  const bool all_active = keep.size() == n;
  const data::Scene sub = all_active ? scene : select_vehicles(scene, keep);

  const Tensor encoded = encode(sub, params, config);
  TrajectoryDecoderOutput traj = trajectory_decoder(encoded, sub, params, config);
  std::optional<RelativeBias> bias;
  if (config.spatial_enabled) bias = relative_bias(sub, params, config);
  ProbabilityDecoderOutput prob =
      probability_decoder(encoded, sub, bias ? &bias->bias : nullptr, params, config, trace);

  ModePrediction out;
  out.active = active;
  if (all_active) {
    out.trajectories = traj.trajectories;
    out.probabilities = prob.probabilities;
    out.sigma = traj.sigma;
    return out;
  }
  out.trajectories = scatter_rows(traj.trajectories, active, 0.0);
  out.probabilities = scatter_rows(prob.probabilities, active, 1.0 / static_cast<double>(config.K));
  if (traj.sigma) out.sigma = scatter_rows(*traj.sigma, active, 1.0);
  return out;
}

BestMode select_best(const ModePrediction& prediction) {
  const std::size_t n = prediction.probabilities.dim(0), k = prediction.probabilities.dim(1);
  const std::size_t tp = prediction.trajectories.dim(2);
  const auto p = prediction.probabilities.data();
  const auto traj = prediction.trajectories.data();
  BestMode best;
  best.trajectories = Tensor(Shape{n, tp, 2});
  auto out = best.trajectories.mutable_data();
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t w = 0;
    for (std::size_t m = 1; m < k; ++m) {
      if (p[i * k + m] > p[i * k + w]) w = m;
    }
    best.index.push_back(w);
    std::copy_n(traj.begin() + static_cast<long>(((i * k) + w) * tp * 2), tp * 2,
                out.begin() + static_cast<long>(i * tp * 2));
  }
  return best;
}

}  // namespace mmtraj
