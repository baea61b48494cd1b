#include "vora/lora.hpp"

#include <algorithm>

#include "vora/errors.hpp"
#include "vora/ops.hpp"

VORA_BEGIN_NAMESPACE

std::string_view to_string(LinearKind kind) {
  switch (kind) {
    case LinearKind::q: return "q";
    case LinearKind::k: return "k";
    case LinearKind::v: return "v";
    case LinearKind::o: return "o";
    case LinearKind::ffn_up: return "ffn_up";
    case LinearKind::ffn_gate: return "ffn_gate";
    case LinearKind::ffn_down: return "ffn_down";
  }
  return "?";
}

LinearKind parse_linear_kind(std::string_view text) {
  for (LinearKind k : kLinearKinds) {
    if (to_string(k) == text) return k;
  }
  throw ConfigError("unknown linear layer '" + std::string(text) + "'");
}

std::pair<std::size_t, std::size_t> linear_shape(const ModelConfig& config, LinearKind kind) {
  switch (kind) {
    case LinearKind::ffn_up:
    case LinearKind::ffn_gate: return {config.d_ff, config.d_model};
    case LinearKind::ffn_down: return {config.d_model, config.d_ff};
    default: return {config.d_model, config.d_model};
  }
}

std::string LoraAdapter::name() const {
  return "lora." + std::to_string(target.block) + "." + std::string(to_string(target.layer));
}

AdapterSet attach(const ModelConfig& config, Rng& rng) {
  config.validate();
  AdapterSet set;
  for (std::size_t block = 0; block < config.n_vit; ++block) {
    for (LinearKind kind : kLinearKinds) {
      const auto [d_out, d_in] = linear_shape(config, kind);
      if (config.rank >= std::min(d_in, d_out)) {
        throw ConfigError("LoRA rank " + std::to_string(config.rank) + " is not below min(d_in, d_out) = " +
                          std::to_string(std::min(d_in, d_out)) + " for layer " + std::string(to_string(kind)));
      }
      LoraAdapter adapter;
      adapter.a = rng.normal_tensor({config.rank, d_in}, 0.02f);
      adapter.b = Tensor::zeros({d_out, config.rank});
      adapter.a.set_requires_grad(true);
      adapter.b.set_requires_grad(true);
      adapter.rank = config.rank;
      adapter.alpha = config.alpha;
      adapter.target = {block, kind};
      set.emplace(adapter.target, std::move(adapter));
    }
  }
  return set;
}

namespace {
void check_adapter_shapes(const Tensor& base_w, const LoraAdapter& adapter) {
  const std::size_t d_out = base_w.dim(0), d_in = base_w.dim(1);
  if (adapter.rank == 0 || adapter.a.shape() != Shape{adapter.rank, d_in} ||
      adapter.b.shape() != Shape{d_out, adapter.rank}) {
    throw ShapeError("adapter " + adapter.name() + " with a " + shape_str(adapter.a.shape()) + ", b " +
                     shape_str(adapter.b.shape()) + " does not fit base weight " + shape_str(base_w.shape()));
  }
}
}  // namespace

Tensor lora_forward(const Tensor& x, const Tensor& base_w, const LoraAdapter& adapter) {
  if (adapter.merged) throw StateError("adapter " + adapter.name() + " is already merged into its base weight");
  check_adapter_shapes(base_w, adapter);
  Tensor base = linear(x, base_w);
  Tensor delta = linear(linear(x, adapter.a), adapter.b);
  return add(base, scale(delta, adapter.scaling()));
}

Tensor merge(const Tensor& base_w, LoraAdapter& adapter) {
  if (adapter.merged) throw StateError("adapter " + adapter.name() + " was already merged");
  check_adapter_shapes(base_w, adapter);
  NoGradGuard no_grad;
  Tensor merged = add(base_w, scale(matmul(adapter.b, adapter.a), adapter.scaling()));
  merged.set_requires_grad(base_w.requires_grad());
  adapter.merged = true;
  return merged;
}

std::size_t adapter_param_count(std::size_t d_in, std::size_t d_out, std::size_t rank) {
  if (rank == 0) throw ConfigError("LoRA rank must be >= 1");
  return rank * (d_in + d_out);
}

std::size_t param_count(const ModelConfig& config, ParamCountOptions options) {
  std::size_t total = 0;
  for (std::size_t block = 0; block < config.n_vit; ++block) {
    for (LinearKind kind : kLinearKinds) {
      const auto [d_out, d_in] = linear_shape(config, kind);
      total += adapter_param_count(d_in, d_out, config.rank);
    }
  }
  if (options.include_vision_embed) {
    total += config.embed_hidden * config.patch_dim() + config.embed_hidden;
    total += config.d_model * config.embed_hidden + config.d_model;
  }
  if (options.include_aux_heads) total += config.n_vit * (config.d_model + config.d_vit * config.d_model);
  return total;
}

VORA_END_NAMESPACE
