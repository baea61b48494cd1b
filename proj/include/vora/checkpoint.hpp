#pragma once

#include "vora/real.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "vora/config.hpp"
#include "vora/tensor.hpp"

VORA_BEGIN_NAMESPACE

using TensorMap = std::map<std::string, Tensor>;

/// Little-endian binary layout:
///   "VORA" | version u32 | flags u32 (bit 0: merged)
///   | config: n_llm n_vit d_model d_vit n_heads d_ff vocab patch rank (u32)
///             alpha (f32) max_seq vit_heads vit_ff embed_hidden (u32)
///             rope_base norm_eps (f32)
///   | tensor count u32
///   | per tensor, in name order: name length u32 | name bytes | ndim u32
///     | dims u32 x ndim | f32 payload
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  ModelConfig config;
  bool merged = false;
  TensorMap tensors;

  bool has_prefix(std::string_view prefix) const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

VORA_END_NAMESPACE
