#include "mmtraj/config.hpp"

#include "mmtraj/data.hpp"
#include "mmtraj/errors.hpp"
#include "mmtraj/hash.hpp"

namespace mmtraj {

std::vector<std::size_t> ModelConfig::input_channels() const {
  std::vector<std::size_t> ch = {data::kX, data::kY, data::kVx, data::kVy, data::kAx, data::kAy};
  if (use_theta) ch.push_back(data::kTheta);
  if (use_yaw) ch.push_back(data::kYaw);
  return ch;
}

std::vector<double> ModelConfig::channel_scales() const {
  std::vector<double> out;
  for (std::size_t c : input_channels()) {
    switch (c) {
      case data::kX:
      case data::kY:
        out.push_back(position_scale);
        break;
      case data::kVx:
      case data::kVy:
        out.push_back(velocity_scale);
        break;
      default:
        out.push_back(1.0);
    }
  }
  return out;
}

void ModelConfig::validate() const {
  if (K < 1) throw ConfigError("K must be >= 1");
  if (H < 1 || d_head < 1) throw ConfigError("H and d_head must be >= 1");
  if (d_model() % 2 != 0) throw ConfigError("d_model = H*d_head must be even, got " + std::to_string(d_model()));
  if (enc_layers < 1 || traj_dec_layers < 1 || prob_dec_layers < 1) throw ConfigError("layer counts must be >= 1");
  if (mlp_hidden < 1) throw ConfigError("mlp_hidden must be >= 1");
  if (t_hist < 1 || t_pred < 1) throw ConfigError("t_hist and t_pred must be >= 1");
  if (!(position_scale > 0.0) || !(velocity_scale > 0.0)) throw ConfigError("scales must be positive");
  if (!(layer_norm_eps > 0.0)) throw ConfigError("layer_norm_eps must be positive");
  if (alpha < 0.0 || beta < 0.0) throw ConfigError("alpha and beta must be non-negative");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_scenes < 1) throw ConfigError("batch_scenes must be >= 1");
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("moment decays must be in [0,1)");
}

namespace {

template <typename T>
void get(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"K", c.K},
                     {"H", c.H},
                     {"d_head", c.d_head},
                     {"enc_layers", c.enc_layers},
                     {"traj_dec_layers", c.traj_dec_layers},
                     {"prob_dec_layers", c.prob_dec_layers},
                     {"mlp_hidden", c.mlp_hidden},
                     {"t_hist", c.t_hist},
                     {"t_pred", c.t_pred},
                     {"use_theta", c.use_theta},
                     {"use_yaw", c.use_yaw},
                     {"alpha", c.alpha},
                     {"beta", c.beta},
                     {"gaussian_head", c.gaussian_head},
                     {"spatial_enabled", c.spatial_enabled},
                     {"time_integration",
                      c.time_integration == TimeIntegration::kDisplacement ? "displacement" : "absolute"},
                     {"bias_frame", c.bias_frame == BiasFrame::kLastCommon ? "last_common" : "mean_common"},
                     {"position_scale", c.position_scale},
                     {"velocity_scale", c.velocity_scale},
                     {"layer_norm_eps", c.layer_norm_eps},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  get(j, "K", c.K);
  get(j, "H", c.H);
  get(j, "d_head", c.d_head);
  get(j, "enc_layers", c.enc_layers);
  get(j, "traj_dec_layers", c.traj_dec_layers);
  get(j, "prob_dec_layers", c.prob_dec_layers);
  get(j, "mlp_hidden", c.mlp_hidden);
  get(j, "t_hist", c.t_hist);
  get(j, "t_pred", c.t_pred);
  get(j, "use_theta", c.use_theta);
  get(j, "use_yaw", c.use_yaw);
  get(j, "alpha", c.alpha);
  get(j, "beta", c.beta);
  get(j, "gaussian_head", c.gaussian_head);
  get(j, "spatial_enabled", c.spatial_enabled);
  if (j.contains("time_integration")) {
    const auto s = j.at("time_integration").get<std::string>();
    if (s == "displacement") {
      c.time_integration = TimeIntegration::kDisplacement;
    } else if (s == "absolute") {
      c.time_integration = TimeIntegration::kAbsolute;
    } else {
      throw ConfigError("time_integration must be 'displacement' or 'absolute', got '" + s + "'");
    }
  }
  if (j.contains("bias_frame")) {
    const auto s = j.at("bias_frame").get<std::string>();
    if (s == "last_common") {
      c.bias_frame = BiasFrame::kLastCommon;
    } else if (s == "mean_common") {
      c.bias_frame = BiasFrame::kMeanCommon;
    } else {
      throw ConfigError("bias_frame must be 'last_common' or 'mean_common', got '" + s + "'");
    }
  }
  get(j, "position_scale", c.position_scale);
  get(j, "velocity_scale", c.velocity_scale);
  get(j, "layer_norm_eps", c.layer_norm_eps);
  get(j, "seed", c.seed);
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"epochs", c.epochs},
                     {"batch_scenes", c.batch_scenes},
                     {"learning_rate", c.learning_rate},
                     {"beta1", c.beta1},
                     {"beta2", c.beta2},
                     {"adam_eps", c.adam_eps},
                     {"grad_clip", c.grad_clip},
                     {"seed", c.seed},
                     {"checkpoint_every", c.checkpoint_every},
                     {"threads", c.threads},
                     {"eval_horizons_s", c.eval_horizons_s}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  get(j, "epochs", c.epochs);
  get(j, "batch_scenes", c.batch_scenes);
  get(j, "learning_rate", c.learning_rate);
  get(j, "beta1", c.beta1);
  get(j, "beta2", c.beta2);
  get(j, "adam_eps", c.adam_eps);
  get(j, "grad_clip", c.grad_clip);
  get(j, "seed", c.seed);
  get(j, "checkpoint_every", c.checkpoint_every);
  get(j, "threads", c.threads);
  get(j, "eval_horizons_s", c.eval_horizons_s);
}

std::string fingerprint(const nlohmann::json& j) { return hex64(fnv1a64(j.dump())); }

}  // namespace mmtraj
