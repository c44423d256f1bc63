#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "mmtraj/config.hpp"
#include "mmtraj/tensor.hpp"

namespace mmtraj {

struct Linear {
  Tensor w;  // [in, out]
  Tensor b;  // [out], or empty for no bias
};

/// Two affine maps with a GELU in between.
struct Mlp {
  Linear l1;
  Linear l2;
};

struct LayerNormParams {
  Tensor gain;
  Tensor bias;
};

/// One pre-LN attention block. Column block h of wq/wk/wv holds the
/// per-head projection for head h.
struct AttentionLayerParams {
  LayerNormParams ln_attn;
  Tensor wq;  // [d_model, H*d_head]
  Tensor wk;
  Tensor wv;
  Tensor wo;  // [H*d_head, d_model]
  LayerNormParams ln_ffn;
  Mlp ffn;    // d_model -> 4*d_model -> d_model
};

struct ModelParams {
  Mlp input_mlp;          // F -> hidden -> d_model
  Tensor intent;          // [K, d_model]
  Tensor future_queries;  // [T_pred, d_model]

  std::vector<AttentionLayerParams> encoder;
  LayerNormParams encoder_norm;

  std::vector<AttentionLayerParams> traj_decoder;
  LayerNormParams traj_norm;
  Mlp traj_head;   // d_model -> hidden -> 2
  Mlp sigma_head;  // present only with the gaussian head

  std::vector<AttentionLayerParams> prob_temporal;
  std::vector<AttentionLayerParams> prob_spatial;  // empty when spatial attention is disabled
  Mlp bias_mlp;                                    // F -> hidden -> H (spatial only), no output bias
  LayerNormParams prob_norm;
  Mlp prob_head;  // d_model -> hidden -> K

  static ModelParams init(const ModelConfig& config);

  /// Visits every learnable tensor in a fixed order with a stable dotted name.
  void visit(const std::function<void(const std::string&, Tensor&)>& fn);
  void for_each(const std::function<void(const std::string&, const Tensor&)>& fn) const;

  ModelParams clone() const;
  std::size_t count() const;
  void set_requires_grad(bool on);
  void zero_grad();
};

/// Number of scalars `ModelParams::init(config)` allocates.
std::size_t parameter_count(const ModelConfig& config);

}  // namespace mmtraj
