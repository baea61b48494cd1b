#pragma once

#include "vora/real.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "vora/checkpoint.hpp"
#include "vora/data.hpp"
#include "vora/distill.hpp"
#include "vora/lora.hpp"
#include "vora/mask.hpp"
#include "vora/model.hpp"
#include "vora/vision.hpp"

VORA_BEGIN_NAMESPACE

/// Student LLM with its vision embedding, LoRA adapters on blocks
/// [0, n_vit) and one auxiliary head per distilled block.
struct VoraModel {
  ModelConfig config;
  LlmWeights llm;
  VisionEmbed vision;
  AdapterSet adapters;  // empty after merge_adapters()
  std::vector<AuxHead> aux_heads;  // empty after drop_aux_heads()
  bool merged = false;

  static VoraModel init(const ModelConfig& config, std::uint64_t seed);

  /// [length, d_model]: vision embeddings followed by token embeddings.
  /// `length` of 0 means sample.length(); larger values keep padding rows.
  Tensor embed(const PackedSample& sample, std::size_t length = 0) const;

  /// Throws StateError when any adapter is already merged.
  LlmOutput forward(const PackedSample& sample, MaskMode mode, std::size_t length = 0) const;

  /// Folds every adapter into its base weight. Throws StateError when the
  /// model is already merged.
  void merge_adapters();
  void drop_aux_heads();

  /// Visits llm.*, vision.*, lora.*.{a,b} and aux.* tensors.
  void for_each(const std::function<void(const std::string&, Tensor&)>& fn);

  Checkpoint to_checkpoint() const;
  /// Ignores teacher.* tensors. Adapters and aux heads are restored when
  /// present.
  static VoraModel from_checkpoint(const Checkpoint& ckpt);
};

void export_teacher(TeacherWeights& teacher, TensorMap& out);
/// Rebuilds teacher weights from teacher.* tensors; nullopt when absent.
std::optional<TeacherWeights> import_teacher(const ModelConfig& config, const TensorMap& tensors);

/// Packs [vision][BOS][prompt] with supervise_from at the end of the prompt.
PackedSample pack_prompt(const std::optional<Image>& image, std::span<const TokenId> prompt, std::size_t patch);

/// Greedy argmax continuation of the prompt. Stops after emitting EOS
/// (included in the result), after `max_new` tokens, or at max_seq.
std::vector<TokenId> decode_greedy(const VoraModel& model, const std::optional<Image>& image,
                                   std::span<const TokenId> prompt, std::size_t max_new, MaskMode mode);

VORA_END_NAMESPACE
