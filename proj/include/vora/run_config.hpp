#pragma once

#include "vora/real.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "vora/config.hpp"
#include "vora/data.hpp"
#include "vora/trainer.hpp"
#include "vora/vision.hpp"

VORA_BEGIN_NAMESPACE

/// Flat `key = value` run configuration, one entry per line, `#` starts a
/// comment. Every key except `seed` has a default; unknown keys, repeated
/// keys and malformed values are ConfigErrors that name the line and key.
struct RunConfig {
  ModelConfig model = ModelConfig::micro();
  TrainConfig train;
  DataConfig data;
  WarmTeacherOptions teacher;
  std::vector<AblationCell> ablate_grid = {{MaskMode::hybrid, DistillMode::block_wise, 8}};
  std::size_t ablate_steps = 300;
  std::vector<float> ablate_thresholds = {3.0f};
  std::size_t ablate_window = 100;
  std::size_t eval_samples = 32;

  static RunConfig parse(std::string_view text);
  static RunConfig load(const std::filesystem::path& path);

  /// Every key in a fixed order with its current value.
  std::string normalized() const;
  /// Model, train and data invariants; throws ConfigError.
  void validate() const;

  AblationConfig ablation() const;

  static std::vector<std::string> keys();
};

VORA_END_NAMESPACE
