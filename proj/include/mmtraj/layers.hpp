#pragma once

#include <cstddef>
#include <vector>

#include "mmtraj/params.hpp"
#include "mmtraj/tensor.hpp"

namespace mmtraj {

Tensor linear(const Tensor& x, const Linear& p);
Tensor mlp(const Tensor& x, const Mlp& p);
Tensor layer_norm(const Tensor& x, const LayerNormParams& p, double eps);

/// Attention probabilities and value vectors of one head, captured for export.
struct HeadCapture {
  Tensor weights;  // [B, L, L]
  Tensor values;   // [B, L, d_head]
};

struct BlockCapture {
  std::size_t layer = 0;
  std::vector<HeadCapture> heads;
};

using AttentionTrace = std::vector<BlockCapture>;

/// Multi-head attention over axis 1 of `h` [B, L, d]. `score_mask` [B, L, L]
/// marks admissible (query, key) pairs; `bias`, when given, is [H, L, L] and
/// is added to the scaled logits of each head.
Tensor multi_head_attention(const Tensor& h, const Mask& score_mask, const AttentionLayerParams& p,
                            std::size_t heads, const Tensor* bias = nullptr, BlockCapture* capture = nullptr);

/// Pre-LN residual block: x += MHA(LN(x)); x += FFN(LN(x)). With
/// `query_keep` [B, L], both residual updates are zeroed on rows marked false.
Tensor attention_block(const Tensor& x, const Mask& score_mask, const AttentionLayerParams& p, std::size_t heads,
                       double eps, const Tensor* bias = nullptr, const Mask* query_keep = nullptr,
                       BlockCapture* capture = nullptr);

}  // namespace mmtraj
