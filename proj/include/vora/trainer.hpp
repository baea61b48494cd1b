#pragma once

#include "vora/real.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vora/data.hpp"
#include "vora/distill.hpp"
#include "vora/mask.hpp"
#include "vora/optim.hpp"
#include "vora/vora_model.hpp"

VORA_BEGIN_NAMESPACE

enum class TrainMode { pretrain, finetune, full_llm_unstable };

std::string_view to_string(TrainMode mode);
TrainMode parse_train_mode(std::string_view text);

struct TrainConfig {
  float lr = 2e-4f;
  std::size_t warmup_steps = 100;
  std::size_t batch_size = 16;
  std::size_t total_steps = 0;
  TrainMode mode = TrainMode::pretrain;
  DistillMode distill_mode = DistillMode::block_wise;
  MaskMode mask_mode = MaskMode::hybrid;
  std::uint64_t seed = 0;
  float weight_decay = 0.01f;
  float distill_weight = 1.0f;
  std::size_t spike_window = 20;  // trailing steps for the full_llm_unstable spike median

  /// Throws ConfigError. total_steps may be anything >= 0, including runs
  /// that end inside the warmup.
  void validate() const;
};

/// lr * step / warmup_steps for step < warmup_steps, lr afterwards.
float lr_at(const TrainConfig& config, std::size_t step);

struct StepMetrics {
  std::size_t step = 0;  // 1-based
  float lr = 0.0f;
  float loss = 0.0f;
  float lm_loss = 0.0f;
  std::optional<float> distill_loss;  // absent in finetune
  std::vector<float> distill_per_block;  // batch mean per distilled block
  std::size_t images = 0;
};

/// One JSON object, no trailing newline.
std::string to_json_line(const StepMetrics& m);

struct SpikeReport {
  bool spiked = false;
  std::size_t first_step = 0;
  float loss = 0.0f;
  float trailing_median = 0.0f;
};

struct TrainResult {
  std::vector<StepMetrics> history;
  std::optional<SpikeReport> spike;  // full_llm_unstable only
};

using MetricsSink = std::function<void(const StepMetrics&)>;

struct Partition {
  std::vector<std::string> trainable;
  std::vector<std::string> frozen;
};

/// Which model tensors a stage updates. AuxHeads train only when a
/// distillation term is active.
Partition partition(VoraModel& model, TrainMode mode, DistillMode distill_mode);

/// Live training state over a model that outlives it.
struct TrainState {
  std::size_t step = 0;
  Partition partition;
  AdamW optimizer;
  Rng data_rng;
  std::vector<StepMetrics> history;
};

TrainState make_train_state(VoraModel& model, const TrainConfig& config);

/// Runs one optimizer step on `batch`. Throws NumericError on a non-finite
/// loss before any parameter is touched.
StepMetrics train_step(VoraModel& model, const TeacherWeights* teacher, const Batch& batch, TrainState& state,
                       const TrainConfig& config);

/// Stage one: frozen base, trainable LoRA, vision embedding and AuxHeads.
/// Also accepts mode full_llm_unstable, which drops the adapters and trains
/// the whole LLM.
TrainResult pretrain(VoraModel& model, const TeacherWeights& teacher, const DataConfig& data,
                     const TrainConfig& config, const MetricsSink& sink = {});

/// Stage two: merges the adapters, drops AuxHeads, trains the LLM and
/// vision embedding on the LM loss. Throws StateError on a merged model.
TrainResult finetune(VoraModel& model, const DataConfig& data, const TrainConfig& config,
                     const MetricsSink& sink = {});

/// First step (1-based) whose loss exceeds `factor` x the median of the
/// preceding `window` losses.
std::optional<SpikeReport> detect_spike(std::span<const float> losses, std::size_t window, float factor = 2.0f);

/// Trailing mean over up to `window` values ending at each index.
std::vector<float> smooth(std::span<const float> values, std::size_t window);

/// First 1-based step whose value is <= threshold.
std::optional<std::size_t> steps_to_threshold(std::span<const float> curve, float threshold);

struct AblationCell {
  MaskMode mask_mode = MaskMode::hybrid;
  DistillMode distill_mode = DistillMode::block_wise;
  std::size_t rank = 8;
};

struct AblationConfig {
  std::vector<AblationCell> grid;
  std::size_t budget_steps = 300;
  std::vector<float> thresholds = {3.0f};
  std::size_t smooth_window = 100;
  ModelConfig model;
  DataConfig data;
  TrainConfig train;  // mask/distill/rank overridden per cell
};

struct AblationRow {
  AblationCell cell;
  float threshold = 0.0f;
  std::optional<std::size_t> steps_to_threshold;
  float final_loss = 0.0f;  // smoothed LM loss after the last step
};

struct AblationReport {
  std::vector<AblationRow> rows;  // cell-major, thresholds in configured order
  std::vector<std::vector<float>> lm_curves;  // raw LM loss per cell
  std::string csv() const;
};

/// Every cell starts from the same seed and sees the same batches.
/// Thresholds apply to the smoothed LM loss.
AblationReport run_ablation(const AblationConfig& config, const TeacherWeights& teacher);

struct EvalMetrics {
  double caption_token_accuracy = 0.0;
  double text_perplexity = 0.0;
  std::optional<double> distill_alignment;  // needs AuxHeads and a teacher
  std::size_t image_samples = 0;
  std::size_t text_samples = 0;
};

/// `count` samples from the held-out seed range, alternating image and text.
std::vector<Sample> make_heldout(std::uint64_t root_seed, std::size_t count, const DataConfig& data,
                                 std::size_t patch);

/// Greedy-decoded caption token accuracy (answer plus EOS, position-wise),
/// text perplexity over answer tokens, and mean per-block cosine alignment.
EvalMetrics eval_metrics(const VoraModel& model, const TeacherWeights* teacher, std::span<const Sample> heldout,
                         MaskMode mask_mode = MaskMode::hybrid);

VORA_END_NAMESPACE
