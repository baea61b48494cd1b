#pragma once

#include "vora/real.hpp"

#include <cstddef>

VORA_BEGIN_NAMESPACE

/// Architecture hyperparameters for the student LLM, its vision embedding,
/// the LoRA adapters and the toy ViT teacher.
struct ModelConfig {
  std::size_t n_llm = 6;    // student blocks
  std::size_t n_vit = 4;    // teacher blocks; LoRA and distillation cover student blocks [0, n_vit)
  std::size_t d_model = 64;
  std::size_t d_vit = 48;
  std::size_t n_heads = 4;
  std::size_t d_ff = 128;
  std::size_t vocab = 0;    // 0 until bound to a vocabulary
  std::size_t patch = 8;
  std::size_t rank = 8;
  float alpha = 8.0f;
  std::size_t max_seq = 128;

  std::size_t vit_heads = 4;
  std::size_t vit_ff = 96;
  std::size_t embed_hidden = 16;  // hidden width of the two-layer vision MLP
  float rope_base = 10000.0f;
  float norm_eps = 1e-6f;

  std::size_t head_dim() const { return d_model / n_heads; }
  std::size_t patch_dim() const { return patch * patch * 3; }

  /// Throws ConfigError naming the first violated constraint.
  void validate() const;

  /// The default desk-scale configuration (vocab bound to the built-in
  /// vocabulary).
  static ModelConfig micro();
  /// A configuration with every extent <= 8, used for finite-difference
  /// checks of the full objective.
  static ModelConfig nano();
};

VORA_END_NAMESPACE
