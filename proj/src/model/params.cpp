#include "mmtraj/params.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace mmtraj {

namespace {

class InitRng {
 public:
  explicit InitRng(std::uint64_t seed) : engine_(seed ^ 0x9e3779b97f4a7c15ULL) {}
  double uniform() { return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53; }
  double normal() {
    const double u1 = uniform(), u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 engine_;
};

Tensor xavier(InitRng& rng, std::size_t in, std::size_t out) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  Tensor t(Shape{in, out});
  for (double& v : t.mutable_data()) v = (2.0 * rng.uniform() - 1.0) * limit;
  return t;
}

Tensor gaussian(InitRng& rng, Shape shape, double stddev) {
  Tensor t(std::move(shape));
  for (double& v : t.mutable_data()) v = stddev * rng.normal();
  return t;
}

Linear linear(InitRng& rng, std::size_t in, std::size_t out) { return {xavier(rng, in, out), Tensor(Shape{out})}; }

Mlp mlp(InitRng& rng, std::size_t in, std::size_t hidden, std::size_t out) {
  Mlp m;
  m.l1 = linear(rng, in, hidden);
  m.l2 = linear(rng, hidden, out);
  return m;
}

LayerNormParams layer_norm(std::size_t d) { return {Tensor(Shape{d}, 1.0), Tensor(Shape{d})}; }

AttentionLayerParams attention_layer(InitRng& rng, const ModelConfig& c) {
  const std::size_t d = c.d_model();
  const std::size_t hd = c.H * c.d_head;
  AttentionLayerParams p;
  p.ln_attn = layer_norm(d);
  p.wq = xavier(rng, d, hd);
  p.wk = xavier(rng, d, hd);
  p.wv = xavier(rng, d, hd);
  p.wo = xavier(rng, hd, d);
  p.ln_ffn = layer_norm(d);
  p.ffn = mlp(rng, d, 4 * d, d);
  return p;
}

using Visitor = std::function<void(const std::string&, Tensor&)>;

void visit_linear(const std::string& name, Linear& l, const Visitor& fn) {
  fn(name + ".w", l.w);
  if (l.b.numel() > 0) fn(name + ".b", l.b);
}

void visit_mlp(const std::string& name, Mlp& m, const Visitor& fn) {
  visit_linear(name + ".l1", m.l1, fn);
  visit_linear(name + ".l2", m.l2, fn);
}

void visit_ln(const std::string& name, LayerNormParams& ln, const Visitor& fn) {
  fn(name + ".gain", ln.gain);
  fn(name + ".bias", ln.bias);
}

void visit_layer(const std::string& name, AttentionLayerParams& p, const Visitor& fn) {
  visit_ln(name + ".ln_attn", p.ln_attn, fn);
  fn(name + ".wq", p.wq);
  fn(name + ".wk", p.wk);
  fn(name + ".wv", p.wv);
  fn(name + ".wo", p.wo);
  visit_ln(name + ".ln_ffn", p.ln_ffn, fn);
  visit_mlp(name + ".ffn", p.ffn, fn);
}

void visit_stack(const std::string& name, std::vector<AttentionLayerParams>& layers, const Visitor& fn) {
  for (std::size_t i = 0; i < layers.size(); ++i) visit_layer(name + "." + std::to_string(i), layers[i], fn);
}

}  // namespace

ModelParams ModelParams::init(const ModelConfig& c) {
  c.validate();
  InitRng rng(c.seed);
  const std::size_t d = c.d_model();
  const std::size_t f = c.feature_dim();
  ModelParams p;
  p.input_mlp = mlp(rng, f, c.mlp_hidden, d);
  p.intent = gaussian(rng, Shape{c.K, d}, 0.02);
  p.future_queries = gaussian(rng, Shape{c.t_pred, d}, 0.02);
  for (std::size_t i = 0; i < c.enc_layers; ++i) p.encoder.push_back(attention_layer(rng, c));
  p.encoder_norm = layer_norm(d);
  for (std::size_t i = 0; i < c.traj_dec_layers; ++i) p.traj_decoder.push_back(attention_layer(rng, c));
  p.traj_norm = layer_norm(d);
  p.traj_head = mlp(rng, d, c.mlp_hidden, 2);
  if (c.gaussian_head) p.sigma_head = mlp(rng, d, c.mlp_hidden, 2);
  for (std::size_t i = 0; i < c.prob_dec_layers; ++i) {
    p.prob_temporal.push_back(attention_layer(rng, c));
    if (c.spatial_enabled) p.prob_spatial.push_back(attention_layer(rng, c));
  }
  if (c.spatial_enabled) {
    p.bias_mlp = mlp(rng, f, c.mlp_hidden, c.H);
    // A per-head constant on every pair logit cancels in the softmax.
    p.bias_mlp.l2.b = Tensor(Shape{0});
  }
  p.prob_norm = layer_norm(d);
  p.prob_head = mlp(rng, d, c.mlp_hidden, c.K);
  p.set_requires_grad(true);
  return p;
}

void ModelParams::visit(const Visitor& fn) {
  visit_mlp("input_mlp", input_mlp, fn);
  fn("intent", intent);
  fn("future_queries", future_queries);
  visit_stack("encoder", encoder, fn);
  visit_ln("encoder_norm", encoder_norm, fn);
  visit_stack("traj_decoder", traj_decoder, fn);
  visit_ln("traj_norm", traj_norm, fn);
  visit_mlp("traj_head", traj_head, fn);
  if (sigma_head.l1.w.rank() == 2) visit_mlp("sigma_head", sigma_head, fn);
  visit_stack("prob_temporal", prob_temporal, fn);
  visit_stack("prob_spatial", prob_spatial, fn);
  if (bias_mlp.l1.w.rank() == 2) visit_mlp("bias_mlp", bias_mlp, fn);
  visit_ln("prob_norm", prob_norm, fn);
  visit_mlp("prob_head", prob_head, fn);
}

void ModelParams::for_each(const std::function<void(const std::string&, const Tensor&)>& fn) const {
  const_cast<ModelParams*>(this)->visit([&](const std::string& name, Tensor& t) { fn(name, t); });
}

ModelParams ModelParams::clone() const {
  ModelParams copy = *this;
  copy.visit([](const std::string&, Tensor& t) { t = t.clone(); });
  return copy;
}

std::size_t ModelParams::count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Tensor& t) { n += t.numel(); });
  return n;
}

void ModelParams::set_requires_grad(bool on) {
  visit([on](const std::string&, Tensor& t) { t.set_requires_grad(on); });
}

void ModelParams::zero_grad() {
  visit([](const std::string&, Tensor& t) { t.zero_grad(); });
}

std::size_t parameter_count(const ModelConfig& c) {
  const std::size_t d = c.d_model();
  const std::size_t f = c.feature_dim();
  const std::size_t hd = c.H * c.d_head;
  const std::size_t h = c.mlp_hidden;
  auto mlp_n = [](std::size_t in, std::size_t hid, std::size_t out) { return in * hid + hid + hid * out + out; };
  const std::size_t layer = 2 * d + 3 * d * hd + hd * d + 2 * d + mlp_n(d, 4 * d, d);
  std::size_t n = mlp_n(f, h, d) + c.K * d + c.t_pred * d;
  n += c.enc_layers * layer + 2 * d;
  n += c.traj_dec_layers * layer + 2 * d + mlp_n(d, h, 2);
  if (c.gaussian_head) n += mlp_n(d, h, 2);
  n += c.prob_dec_layers * layer * (c.spatial_enabled ? 2 : 1);
  if (c.spatial_enabled) n += mlp_n(f, h, c.H) - c.H;
  n += 2 * d + mlp_n(d, h, c.K);
  return n;
}

}  // namespace mmtraj
