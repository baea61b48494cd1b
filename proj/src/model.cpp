#include "vora/model.hpp"

#include <cmath>

#include "vora/errors.hpp"
#include "vora/ops.hpp"

VORA_BEGIN_NAMESPACE

Tensor& BlockWeights::linear(LinearKind kind) {
  switch (kind) {
    case LinearKind::q: return wq;
    case LinearKind::k: return wk;
    case LinearKind::v: return wv;
    case LinearKind::o: return wo;
    case LinearKind::ffn_up: return w_up;
    case LinearKind::ffn_gate: return w_gate;
    case LinearKind::ffn_down: return w_down;
  }
  throw Error("unknown linear kind");
}

const Tensor& BlockWeights::linear(LinearKind kind) const {
  return const_cast<BlockWeights*>(this)->linear(kind);
}

LlmWeights LlmWeights::init(const ModelConfig& config, Rng& rng) {
  config.validate();
  const real std_in = 0.02f;
  // Residual-branch outputs are scaled down with depth (GPT-2 convention).
  const real std_out = 0.02f / std::sqrt(2.0f * static_cast<real>(config.n_llm));
  LlmWeights w;
  w.tok_embed = rng.normal_tensor({config.vocab, config.d_model}, std_in);
  for (std::size_t i = 0; i < config.n_llm; ++i) {
    BlockWeights b;
    b.attn_norm = Tensor::full({config.d_model}, 1.0f);
    for (LinearKind kind : kLinearKinds) {
      const auto [d_out, d_in] = linear_shape(config, kind);
      const bool residual_out = kind == LinearKind::o || kind == LinearKind::ffn_down;
      b.linear(kind) = rng.normal_tensor({d_out, d_in}, residual_out ? std_out : std_in);
    }
    b.ffn_norm = Tensor::full({config.d_model}, 1.0f);
    w.blocks.push_back(std::move(b));
  }
  w.final_norm = Tensor::full({config.d_model}, 1.0f);
  w.lm_head = rng.normal_tensor({config.vocab, config.d_model}, std_in);
  return w;
}

void LlmWeights::for_each(const std::function<void(const std::string&, Tensor&)>& fn) {
  fn("llm.tok_embed", tok_embed);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string p = "llm.blocks." + std::to_string(i) + ".";
    BlockWeights& b = blocks[i];
    fn(p + "attn_norm", b.attn_norm);
    fn(p + "ffn_norm", b.ffn_norm);
    for (LinearKind kind : kLinearKinds) fn(p + std::string(to_string(kind)), b.linear(kind));
  }
  fn("llm.final_norm", final_norm);
  fn("llm.lm_head", lm_head);
}

void LlmWeights::set_requires_grad(bool value) {
  for_each([value](const std::string&, Tensor& t) { t.set_requires_grad(value); });
}

namespace {

Tensor project(const Tensor& x, const BlockWeights& block, std::size_t block_index, LinearKind kind,
               const AdapterSet* adapters) {
  if (adapters) {
    auto it = adapters->find(LoraTarget{block_index, kind});
    if (it != adapters->end()) return lora_forward(x, block.linear(kind), it->second);
  }
  return linear(x, block.linear(kind));
}

Tensor self_attention(const ModelConfig& config, const BlockWeights& block, std::size_t index, const Tensor& x,
                      const Tensor& mask, const AdapterSet* adapters) {
  const std::size_t hd = config.head_dim();
  Tensor q = rope(project(x, block, index, LinearKind::q, adapters), config.n_heads, config.rope_base);
  Tensor k = rope(project(x, block, index, LinearKind::k, adapters), config.n_heads, config.rope_base);
  Tensor v = project(x, block, index, LinearKind::v, adapters);
  const real inv_sqrt = 1.0f / std::sqrt(static_cast<real>(hd));
  std::vector<Tensor> heads;
  heads.reserve(config.n_heads);
  for (std::size_t h = 0; h < config.n_heads; ++h) {
    Tensor qh = slice_cols(q, h * hd, hd);
    Tensor kh = slice_cols(k, h * hd, hd);
    Tensor vh = slice_cols(v, h * hd, hd);
    Tensor probs = softmax_rows(scale(linear(qh, kh), inv_sqrt), mask);
    heads.push_back(matmul(probs, vh));
  }
  Tensor merged = config.n_heads == 1 ? heads[0] : concat(heads, 1);
  return project(merged, block, index, LinearKind::o, adapters);
}

Tensor feed_forward(const BlockWeights& block, std::size_t index, const Tensor& x, const AdapterSet* adapters) {
  Tensor gate = silu(project(x, block, index, LinearKind::ffn_gate, adapters));
  Tensor up = project(x, block, index, LinearKind::ffn_up, adapters);
  return project(mul(gate, up), block, index, LinearKind::ffn_down, adapters);
}

}  // namespace

LlmOutput llm_forward(const ModelConfig& config, const LlmWeights& weights, const Tensor& embedded,
                      const Tensor& additive_mask, const AdapterSet* adapters) {
  if (embedded.rank() != 2 || embedded.dim(1) != config.d_model) {
    throw ShapeError("llm_forward: embedded input " + shape_str(embedded.shape()) + " is not [seq, " +
                     std::to_string(config.d_model) + "]");
  }
  const std::size_t seq = embedded.dim(0);
  if (seq > config.max_seq) {
    throw ShapeError("sequence of " + std::to_string(seq) + " tokens exceeds max_seq " +
                     std::to_string(config.max_seq));
  }
  if (additive_mask.shape() != Shape{seq, seq}) {
    throw ShapeError("mask " + shape_str(additive_mask.shape()) + " does not match sequence length " +
                     std::to_string(seq));
  }
  LlmOutput out;
  Tensor h = embedded;
  for (std::size_t i = 0; i < weights.blocks.size(); ++i) {
    const BlockWeights& block = weights.blocks[i];
    Tensor attn = self_attention(config, block, i, rms_norm(h, block.attn_norm, config.norm_eps), additive_mask,
                                 adapters);
    h = add(h, attn);
    h = add(h, feed_forward(block, i, rms_norm(h, block.ffn_norm, config.norm_eps), adapters));
    if (i < config.n_vit) out.taps.push_back({i, h});
  }
  out.logits = linear(rms_norm(h, weights.final_norm, config.norm_eps), weights.lm_head);
  return out;
}

VORA_END_NAMESPACE
