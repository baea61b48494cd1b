#include "vora/mask.hpp"

#include <string>

#include "vora/errors.hpp"
#include "vora/ops.hpp"

VORA_BEGIN_NAMESPACE

std::string_view to_string(MaskMode mode) { return mode == MaskMode::hybrid ? "hybrid" : "causal"; }

MaskMode parse_mask_mode(std::string_view text) {
  if (text == "hybrid") return MaskMode::hybrid;
  if (text == "causal") return MaskMode::causal;
  throw ConfigError("unknown mask mode '" + std::string(text) + "' (expected hybrid|causal)");
}

void SequenceLayout::validate(std::size_t total_len) const {
  auto span = [](std::size_t a, std::size_t b) {
    return "[" + std::to_string(a) + ", " + std::to_string(b) + ")";
  };
  if (vision_begin > vision_end || text_begin > text_end) {
    throw LayoutError("span bounds reversed: vision " + span(vision_begin, vision_end) + ", text " +
                      span(text_begin, text_end));
  }
  if (has_vision() && vision_end > text_begin && text_end > text_begin) {
    throw LayoutError("vision span " + span(vision_begin, vision_end) + " overlaps text span " +
                      span(text_begin, text_end));
  }
  if (has_vision() && vision_begin != 0) throw LayoutError("vision tokens must start the sequence");
  if (text_begin != vision_end) {
    throw LayoutError("text span must start right after the vision span (vision " + span(vision_begin, vision_end) +
                      ", text " + span(text_begin, text_end) + ")");
  }
  if (text_end > total_len) {
    throw LayoutError("text span " + span(text_begin, text_end) + " exceeds sequence length " +
                      std::to_string(total_len));
  }
  if (supervise_from < text_begin || supervise_from > text_end) {
    throw LayoutError("supervise_from " + std::to_string(supervise_from) + " outside text span " +
                      span(text_begin, text_end));
  }
}

bool mask_allows(const SequenceLayout& layout, MaskMode mode, std::size_t q, std::size_t k) {
  if (mode == MaskMode::hybrid && layout.in_vision(q)) return layout.in_vision(k);
  return k <= q;
}

Tensor build_mask(const SequenceLayout& layout, std::size_t total_len, MaskMode mode) {
  layout.validate(total_len);
  std::vector<real> m(total_len * total_len, kMasked);
  for (std::size_t q = 0; q < total_len; ++q) {
    for (std::size_t k = 0; k < total_len; ++k) {
      if (mask_allows(layout, mode, q, k)) m[q * total_len + k] = 0.0f;
    }
  }
  return Tensor::from({total_len, total_len}, std::move(m));
}

VORA_END_NAMESPACE
