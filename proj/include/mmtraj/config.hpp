#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace mmtraj {

enum class TimeIntegration { kDisplacement, kAbsolute };
enum class BiasFrame { kLastCommon, kMeanCommon };

struct ModelConfig {
  std::size_t K = 8;         // modes
  std::size_t H = 4;         // attention heads
  std::size_t d_head = 16;   // per-head width
  std::size_t enc_layers = 2;
  std::size_t traj_dec_layers = 2;
  std::size_t prob_dec_layers = 2;
  std::size_t mlp_hidden = 128;
  std::size_t t_hist = 50;
  std::size_t t_pred = 50;
  bool use_theta = true;
  bool use_yaw = true;
  double alpha = 1.0;
  double beta = 0.0;
  bool gaussian_head = false;
  bool spatial_enabled = true;
  TimeIntegration time_integration = TimeIntegration::kDisplacement;
  BiasFrame bias_frame = BiasFrame::kLastCommon;
  // Fixed input/output scales (model units per meter, per m/s).
  double position_scale = 10.0;
  double velocity_scale = 10.0;
  double layer_norm_eps = 1e-5;
  std::uint64_t seed = 0;

  std::size_t d_model() const { return H * d_head; }
  /// Scene feature channels fed to the network, in order.
  std::vector<std::size_t> input_channels() const;
  std::size_t feature_dim() const { return input_channels().size(); }
  /// Divisor applied to each input channel.
  std::vector<double> channel_scales() const;

  void validate() const;
};

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_scenes = 8;
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 1.0;  // global L2 norm; <= 0 disables
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // epochs; 0 = final checkpoint only
  std::size_t threads = 0;           // 0 = hardware concurrency
  std::vector<double> eval_horizons_s = {1, 2, 3, 4, 5};

  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Stable hex fingerprint of a JSON document (FNV-1a over its canonical dump).
std::string fingerprint(const nlohmann::json& j);

}  // namespace mmtraj
