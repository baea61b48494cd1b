#pragma once

#include "vora/real.hpp"

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vora/config.hpp"
#include "vora/mask.hpp"
#include "vora/model.hpp"
#include "vora/ops.hpp"
#include "vora/rng.hpp"
#include "vora/vision.hpp"

VORA_BEGIN_NAMESPACE

/// RMSNorm + linear projection from student width to teacher width.
struct AuxHead {
  Tensor norm_gain;  // [d_model]
  Tensor proj;  // [d_vit, d_model]
  std::size_t block_index = 0;

  Tensor operator()(const Tensor& hidden, real eps) const;
};

/// One head per distilled block [0, n_vit).
std::vector<AuxHead> make_aux_heads(const ModelConfig& config, Rng& rng);
void for_each_aux(std::vector<AuxHead>& heads, const std::function<void(const std::string&, Tensor&)>& fn);

enum class DistillMode { none, last_block, block_wise };

std::string_view to_string(DistillMode mode);
DistillMode parse_distill_mode(std::string_view text);

/// mean_s (1 - cos(AuxHead(h_llm[s]), h_vit[s])) for h_llm already
/// restricted to the vision span. Result lies in [0, 2].
Tensor block_distill_loss(const Tensor& h_llm, const Tensor& h_vit, const AuxHead& head, real eps = 1e-6f);

struct DistillResult {
  Tensor loss;  // shape [1]
  std::vector<real> per_block;  // value of each computed block loss, in block order
};

/// block_wise: mean over blocks [0, n_vit); last_block: block n_vit-1 only;
/// none: a constant 0 with no graph. Taps are restricted to the vision span
/// of `layout` before projection.
DistillResult distill_loss(const std::vector<BlockTap>& taps, const TeacherStates& teacher,
                           const std::vector<AuxHead>& heads, DistillMode mode, const SequenceLayout& layout,
                           real eps = 1e-6f);

/// Next-token cross-entropy over target tokens at positions
/// [supervise_from, text_end): logits at p predict tokens[p + 1]. Vision,
/// prompt and padding positions contribute nothing.
Tensor lm_loss(const Tensor& logits, const SequenceLayout& layout, std::span<const TokenId> tokens);

/// distill + lm; `distill_weight` scales the distillation term when not 1.
Tensor total_loss(const Tensor& distill, const Tensor& lm, real distill_weight = 1.0f);

VORA_END_NAMESPACE
