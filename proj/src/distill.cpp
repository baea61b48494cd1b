#include "vora/distill.hpp"

#include <algorithm>
#include <cmath>

#include "vora/errors.hpp"

VORA_BEGIN_NAMESPACE

Tensor AuxHead::operator()(const Tensor& hidden, real eps) const {
  return linear(rms_norm(hidden, norm_gain, eps), proj);
}

std::vector<AuxHead> make_aux_heads(const ModelConfig& config, Rng& rng) {
  std::vector<AuxHead> heads;
  for (std::size_t i = 0; i < config.n_vit; ++i) {
    AuxHead h;
    h.norm_gain = Tensor::full({config.d_model}, 1.0f);
    h.proj = rng.normal_tensor({config.d_vit, config.d_model}, 1.0f / std::sqrt(static_cast<real>(config.d_model)));
    h.block_index = i;
    heads.push_back(std::move(h));
  }
  return heads;
}

void for_each_aux(std::vector<AuxHead>& heads, const std::function<void(const std::string&, Tensor&)>& fn) {
  for (AuxHead& h : heads) {
    const std::string p = "aux." + std::to_string(h.block_index) + ".";
    fn(p + "norm", h.norm_gain);
    fn(p + "proj", h.proj);
  }
}

std::string_view to_string(DistillMode mode) {
  switch (mode) {
    case DistillMode::none: return "none";
    case DistillMode::last_block: return "last_block";
    case DistillMode::block_wise: return "block_wise";
  }
  return "?";
}

DistillMode parse_distill_mode(std::string_view text) {
  if (text == "none") return DistillMode::none;
  if (text == "last_block") return DistillMode::last_block;
  if (text == "block_wise") return DistillMode::block_wise;
  throw ConfigError("unknown distill mode '" + std::string(text) + "' (expected none|last_block|block_wise)");
}

Tensor block_distill_loss(const Tensor& h_llm, const Tensor& h_vit, const AuxHead& head, real eps) {
  if (h_llm.rank() != 2 || h_vit.rank() != 2 || h_llm.dim(0) != h_vit.dim(0)) {
    throw ShapeError("block_distill_loss: student " + shape_str(h_llm.shape()) + " and teacher " +
                     shape_str(h_vit.shape()) + " disagree on the token count");
  }
  Tensor cos = cosine_rows(head(h_llm, eps), h_vit);
  return add_scalar(scale(mean(cos), -1.0f), 1.0f);
}

DistillResult distill_loss(const std::vector<BlockTap>& taps, const TeacherStates& teacher,
                           const std::vector<AuxHead>& heads, DistillMode mode, const SequenceLayout& layout,
                           real eps) {
  if (mode == DistillMode::none) return {Tensor::scalar(0.0f), {}};
  const std::size_t n_vit = teacher.size();
  if (n_vit == 0) throw ShapeError("distill_loss: teacher has no blocks");
  if (taps.size() < n_vit || heads.size() < n_vit) {
    throw ShapeError("distill_loss: " + std::to_string(taps.size()) + " taps / " + std::to_string(heads.size()) +
                     " heads for a " + std::to_string(n_vit) + "-block teacher");
  }
  if (!layout.has_vision()) throw ShapeError("distill_loss: sample has no vision tokens");

  const std::size_t first = mode == DistillMode::last_block ? n_vit - 1 : 0;
  DistillResult result;
  std::vector<Tensor> losses;
  for (std::size_t i = first; i < n_vit; ++i) {
    Tensor h = slice_rows(taps[i].hidden, layout.vision_begin, layout.vision_tokens());
    Tensor loss = block_distill_loss(h, teacher[i], heads[i], eps);
    result.per_block.push_back(loss.item());
    losses.push_back(std::move(loss));
  }
  result.loss = losses.size() == 1 ? losses[0] : mean(concat(losses, 0));
  return result;
}

Tensor lm_loss(const Tensor& logits, const SequenceLayout& layout, std::span<const TokenId> tokens) {
  const std::size_t rows = logits.dim(0);
  if (tokens.size() < rows || layout.text_end > rows) {
    throw ShapeError("lm_loss: " + std::to_string(tokens.size()) + " tokens for logits " +
                     shape_str(logits.shape()));
  }
  // Position 0 has no predecessor, so its token is never a target.
  const std::size_t first_target = std::max<std::size_t>(layout.supervise_from, 1);
  if (first_target >= layout.text_end) {
    throw Error("lm_loss: no supervised positions (supervise_from " + std::to_string(layout.supervise_from) +
                ", text end " + std::to_string(layout.text_end) + ")");
  }
  std::vector<TokenId> targets(rows, 0);
  std::vector<bool> ignore(rows, true);
  for (std::size_t p = first_target - 1; p + 1 < layout.text_end; ++p) {
    targets[p] = tokens[p + 1];
    ignore[p] = false;
  }
  return cross_entropy(logits, targets, ignore);
}

Tensor total_loss(const Tensor& distill, const Tensor& lm, real distill_weight) {
  if (distill_weight == 1.0f) return add(distill, lm);
  return add(scale(distill, distill_weight), lm);
}

VORA_END_NAMESPACE
