#pragma once

#include "vora/real.hpp"

#include <array>
#include <compare>
#include <cstddef>
#include <map>
#include <string>
#include <string_view>

#include "vora/config.hpp"
#include "vora/rng.hpp"
#include "vora/tensor.hpp"

VORA_BEGIN_NAMESPACE

/// The linear layers of one transformer block.
enum class LinearKind { q, k, v, o, ffn_up, ffn_gate, ffn_down };

inline constexpr std::array<LinearKind, 7> kLinearKinds = {
    LinearKind::q,      LinearKind::k,        LinearKind::v,       LinearKind::o,
    LinearKind::ffn_up, LinearKind::ffn_gate, LinearKind::ffn_down};

std::string_view to_string(LinearKind kind);
LinearKind parse_linear_kind(std::string_view text);

/// (d_out, d_in) of a block linear layer under the given config.
std::pair<std::size_t, std::size_t> linear_shape(const ModelConfig& config, LinearKind kind);

struct LoraTarget {
  std::size_t block = 0;
  LinearKind layer = LinearKind::q;
  auto operator<=>(const LoraTarget&) const = default;
};

/// Low-rank pair with delta = (alpha / rank) * b * a.
struct LoraAdapter {
  Tensor a;  // [rank, d_in]
  Tensor b;  // [d_out, rank]
  std::size_t rank = 0;
  float alpha = 0.0f;
  LoraTarget target;
  bool merged = false;

  float scaling() const { return alpha / static_cast<float>(rank); }
  /// "lora.{block}.{layer}" without the .a/.b suffix.
  std::string name() const;
};

using AdapterSet = std::map<LoraTarget, LoraAdapter>;

/// One trainable adapter per linear layer of blocks [0, n_vit): a ~ N(0, 0.02^2),
/// b = 0, so the initial delta is exactly zero. Throws ConfigError when the
/// rank is not below min(d_in, d_out).
AdapterSet attach(const ModelConfig& config, Rng& rng);

/// y = x * base_w^T + (alpha/rank) * (x * a^T) * b^T.
Tensor lora_forward(const Tensor& x, const Tensor& base_w, const LoraAdapter& adapter);

/// base_w + (alpha/rank) * b * a as a new tensor (requires_grad copied from
/// base_w). Marks the adapter merged; a second merge throws StateError.
Tensor merge(const Tensor& base_w, LoraAdapter& adapter);

/// rank * (d_in + d_out): trainable parameters of one adapter.
std::size_t adapter_param_count(std::size_t d_in, std::size_t d_out, std::size_t rank);

struct ParamCountOptions {
  bool include_vision_embed = false;
  bool include_aux_heads = false;
};

/// Sum over adapters of rank * (d_in + d_out), optionally plus the vision
/// embedding and AuxHead parameters.
std::size_t param_count(const ModelConfig& config, ParamCountOptions options = {});

VORA_END_NAMESPACE
