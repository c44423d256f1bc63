#include "mmtraj/layers.hpp"

#include <cmath>

#include "mmtraj/errors.hpp"
#include "mmtraj/ops.hpp"

namespace mmtraj {

Tensor linear(const Tensor& x, const Linear& p) {
  const Tensor y = ops::matmul(x, p.w);
  return p.b.numel() == 0 ? y : ops::add(y, p.b);
}

Tensor mlp(const Tensor& x, const Mlp& p) { return linear(ops::gelu(linear(x, p.l1)), p.l2); }

Tensor layer_norm(const Tensor& x, const LayerNormParams& p, double eps) {
  return ops::layer_norm(x, p.gain, p.bias, eps);
}

Tensor multi_head_attention(const Tensor& h, const Mask& score_mask, const AttentionLayerParams& p,
                            std::size_t heads, const Tensor* bias, BlockCapture* capture) {
  if (h.rank() != 3) throw DimensionError("attention input must be [B, L, d], got " + shape_str(h.shape()));
  const std::size_t len = h.dim(1);
  const std::size_t width = p.wq.dim(1);
  if (width % heads != 0) throw DimensionError("projection width not divisible by head count");
  const std::size_t d_head = width / heads;
  if (score_mask.shape != Shape{h.dim(0), len, len}) {
    throw DimensionError("score mask " + shape_str(score_mask.shape) + " for attention input " +
                         shape_str(h.shape()));
  }
  if (bias && bias->shape() != Shape{heads, len, len}) {
    throw DimensionError("attention bias " + shape_str(bias->shape()) + " expected [" + std::to_string(heads) +
                         "," + std::to_string(len) + "," + std::to_string(len) + "]");
  }
  const Tensor q = ops::matmul(h, p.wq);
  const Tensor k = ops::matmul(h, p.wk);
  const Tensor v = ops::matmul(h, p.wv);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d_head));

  std::vector<Tensor> outs;
  outs.reserve(heads);
  for (std::size_t hd = 0; hd < heads; ++hd) {
    const Tensor qh = ops::slice(q, 2, hd * d_head, d_head);
    const Tensor kh = ops::slice(k, 2, hd * d_head, d_head);
    const Tensor vh = ops::slice(v, 2, hd * d_head, d_head);
    Tensor scores = ops::scale(ops::matmul(qh, ops::transpose(kh)), inv_sqrt);
    if (bias) scores = ops::add(scores, ops::reshape(ops::slice(*bias, 0, hd, 1), Shape{len, len}));
    const Tensor weights = ops::softmax(scores, 2, &score_mask);
    if (capture) capture->heads.push_back({weights, vh});
    outs.push_back(ops::matmul(weights, vh));
  }
  const Tensor merged = heads == 1 ? outs[0] : ops::concat(outs, 2);
  return ops::matmul(merged, p.wo);
}

namespace {

Mask expand_rows(const Mask& rows, std::size_t width) {
  Mask m(Shape{rows.shape[0], rows.shape[1], width}, false);
  for (std::size_t i = 0; i < rows.numel(); ++i) {
    if (!rows[i]) continue;
    for (std::size_t j = 0; j < width; ++j) m.data[i * width + j] = 1;
  }
  return m;
}

}  // namespace

Tensor attention_block(const Tensor& x, const Mask& score_mask, const AttentionLayerParams& p, std::size_t heads,
                       double eps, const Tensor* bias, const Mask* query_keep, BlockCapture* capture) {
  Mask keep;
  if (query_keep) {
    if (query_keep->shape != Shape{x.dim(0), x.dim(1)}) {
      throw DimensionError("query mask " + shape_str(query_keep->shape) + " for input " + shape_str(x.shape()));
    }
    keep = expand_rows(*query_keep, x.dim(2));
  }
  Tensor update = multi_head_attention(layer_norm(x, p.ln_attn, eps), score_mask, p, heads, bias, capture);
  if (query_keep) update = ops::where(keep, update, 0.0);
  const Tensor mid = ops::add(x, update);
  Tensor ffn = mlp(layer_norm(mid, p.ln_ffn, eps), p.ffn);
  if (query_keep) ffn = ops::where(keep, ffn, 0.0);
  return ops::add(mid, ffn);
}

}  // namespace mmtraj
