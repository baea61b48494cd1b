#pragma once

#include "vora/real.hpp"

#include <functional>
#include <string>
#include <vector>

#include "vora/config.hpp"
#include "vora/lora.hpp"
#include "vora/rng.hpp"
#include "vora/tensor.hpp"

VORA_BEGIN_NAMESPACE

struct BlockWeights {
  Tensor attn_norm;  // [d_model]
  Tensor wq, wk, wv, wo;  // [d_model, d_model]
  Tensor ffn_norm;  // [d_model]
  Tensor w_gate, w_up;  // [d_ff, d_model]
  Tensor w_down;  // [d_model, d_ff]

  Tensor& linear(LinearKind kind);
  const Tensor& linear(LinearKind kind) const;
};

/// The decoder-only student: token embedding, pre-norm blocks with
/// rotary multi-head attention and a SiLU-gated FFN, final norm, LM head.
struct LlmWeights {
  Tensor tok_embed;  // [vocab, d_model]
  std::vector<BlockWeights> blocks;
  Tensor final_norm;  // [d_model]
  Tensor lm_head;  // [vocab, d_model]

  static LlmWeights init(const ModelConfig& config, Rng& rng);

  /// Visits every tensor as ("llm.<path>", tensor) in a fixed order.
  void for_each(const std::function<void(const std::string&, Tensor&)>& fn);
  void set_requires_grad(bool value);
};

/// Output hidden states (post-residual) of one block.
struct BlockTap {
  std::size_t block_index = 0;
  Tensor hidden;  // [seq, d_model]
};

struct LlmOutput {
  Tensor logits;  // [seq, vocab]
  std::vector<BlockTap> taps;  // blocks [0, n_vit)
};

/// Runs the block stack over already-embedded inputs. Linear layers with an
/// entry in `adapters` apply base + LoRA delta.
LlmOutput llm_forward(const ModelConfig& config, const LlmWeights& weights, const Tensor& embedded,
                      const Tensor& additive_mask, const AdapterSet* adapters = nullptr);

VORA_END_NAMESPACE
