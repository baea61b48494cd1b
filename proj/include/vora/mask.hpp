#pragma once

#include "vora/real.hpp"

#include <cstddef>
#include <string_view>

#include "vora/tensor.hpp"

VORA_BEGIN_NAMESPACE

enum class MaskMode { hybrid, causal };

std::string_view to_string(MaskMode mode);
MaskMode parse_mask_mode(std::string_view text);

/// Where vision and text tokens sit in one packed sequence. Vision tokens
/// occupy [vision_begin, vision_end) and come first; text occupies
/// [text_begin, text_end); anything after text_end is padding.
struct SequenceLayout {
  std::size_t vision_begin = 0;
  std::size_t vision_end = 0;
  std::size_t text_begin = 0;
  std::size_t text_end = 0;
  std::size_t supervise_from = 0;  // first caption/answer token

  std::size_t vision_tokens() const { return vision_end - vision_begin; }
  bool has_vision() const { return vision_end > vision_begin; }
  bool in_vision(std::size_t pos) const { return pos >= vision_begin && pos < vision_end; }

  /// Throws LayoutError unless the spans are ordered, disjoint, gap-free
  /// and inside total_len.
  void validate(std::size_t total_len) const;
};

/// True when query q may attend to key k.
bool mask_allows(const SequenceLayout& layout, MaskMode mode, std::size_t q, std::size_t k);

/// Additive [total_len, total_len] mask: 0 where attention is allowed,
/// kMasked elsewhere. Vision tokens see each other bi-directionally in
/// hybrid mode; everything else is causal.
Tensor build_mask(const SequenceLayout& layout, std::size_t total_len, MaskMode mode);

inline Tensor build_hybrid_mask(const SequenceLayout& layout, std::size_t total_len) {
  return build_mask(layout, total_len, MaskMode::hybrid);
}

VORA_END_NAMESPACE
