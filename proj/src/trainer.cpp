#include "vora/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

#include "json.hpp"

#include "vora/errors.hpp"
#include "vora/vocab.hpp"

VORA_BEGIN_NAMESPACE

namespace {

constexpr std::uint64_t kDataStream = 0xDA7A;

bool is_vision_or_aux(const std::string& name) { return name.starts_with("vision.") || name.starts_with("aux."); }

bool trainable_in(const std::string& name, TrainMode mode, DistillMode distill_mode) {
  if (name.starts_with("aux.")) return mode != TrainMode::finetune && distill_mode != DistillMode::none;
  if (name.starts_with("vision.")) return true;
  if (name.starts_with("lora.")) return mode == TrainMode::pretrain;
  if (name.starts_with("llm.")) return mode != TrainMode::pretrain;
  return false;
}

std::string fmt_loss(float v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

float median(std::vector<float> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5f * (v[n / 2 - 1] + v[n / 2]);
}

TrainResult run_loop(VoraModel& model, const TeacherWeights* teacher, const DataConfig& data,
                     const TrainConfig& config, const MetricsSink& sink) {
  TrainState state = make_train_state(model, config);
  TrainResult result;
  for (std::size_t s = 0; s < config.total_steps; ++s) {
    const Batch batch = make_batch(state.data_rng, config.batch_size, data, model.config.patch);
    StepMetrics m = train_step(model, teacher, batch, state, config);
    if (sink) sink(m);
  }
  result.history = std::move(state.history);
  if (config.mode == TrainMode::full_llm_unstable) {
    std::vector<float> losses;
    for (const auto& m : result.history) losses.push_back(m.loss);
    result.spike = detect_spike(losses, config.spike_window).value_or(SpikeReport{});
  }
  return result;
}

}  // namespace

std::string_view to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::pretrain: return "pretrain";
    case TrainMode::finetune: return "finetune";
    case TrainMode::full_llm_unstable: return "full_llm_unstable";
  }
  return "?";
}

TrainMode parse_train_mode(std::string_view text) {
  if (text == "pretrain") return TrainMode::pretrain;
  if (text == "finetune") return TrainMode::finetune;
  if (text == "full_llm_unstable") return TrainMode::full_llm_unstable;
  throw ConfigError("unknown train mode '" + std::string(text) + "' (expected pretrain|finetune|full_llm_unstable)");
}

void TrainConfig::validate() const {
  if (!(lr > 0.0f) || !std::isfinite(lr)) throw ConfigError("lr must be a positive finite number");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(weight_decay >= 0.0f)) throw ConfigError("weight_decay must be >= 0");
  if (!(distill_weight >= 0.0f)) throw ConfigError("distill_weight must be >= 0");
  if (spike_window < 1) throw ConfigError("spike_window must be >= 1");
}

float lr_at(const TrainConfig& config, std::size_t step) {
  if (step < config.warmup_steps) {
    return config.lr * static_cast<float>(step) / static_cast<float>(config.warmup_steps);
  }
  return config.lr;
}

std::string to_json_line(const StepMetrics& m) {
  nlohmann::ordered_json j;
  j["step"] = m.step;
  j["lr"] = m.lr;
  j["loss"] = m.loss;
  j["lm_loss"] = m.lm_loss;
  if (m.distill_loss) {
    j["distill_loss"] = *m.distill_loss;
    j["distill_per_block"] = m.distill_per_block;
  }
  j["images"] = m.images;
  return j.dump();
}

Partition partition(VoraModel& model, TrainMode mode, DistillMode distill_mode) {
  Partition p;
  model.for_each([&](const std::string& name, Tensor&) {
    (trainable_in(name, mode, distill_mode) ? p.trainable : p.frozen).push_back(name);
  });
  return p;
}

TrainState make_train_state(VoraModel& model, const TrainConfig& config) {
  config.validate();
  Partition part = partition(model, config.mode, config.distill_mode);
  const std::set<std::string> trainable(part.trainable.begin(), part.trainable.end());
  std::vector<NamedParam> params;
  model.for_each([&](const std::string& name, Tensor& t) {
    t.clear_grad();
    const bool train = trainable.contains(name);
    t.set_requires_grad(train);
    if (train) params.push_back({name, t, default_weight_decay(name, t, config.weight_decay)});
  });
  return TrainState{0, std::move(part), AdamW(std::move(params), AdamWConfig{}),
                    Rng(derive_seed(config.seed, kDataStream)), {}};
}

StepMetrics train_step(VoraModel& model, const TeacherWeights* teacher, const Batch& batch, TrainState& state,
                       const TrainConfig& config) {
  const bool distill = config.mode != TrainMode::finetune && config.distill_mode != DistillMode::none;
  if (distill && teacher == nullptr) throw StateError("distillation requested without a teacher");
  const std::size_t n = batch.items.size();
  const std::size_t n_img = batch.image_count();

  StepMetrics m;
  m.step = state.step + 1;
  m.lr = lr_at(config, m.step);
  m.images = n_img;

  // Per-sample graphs keep peak memory at one sequence; gradients sum.
  double lm_sum = 0.0, distill_sum = 0.0;
  std::vector<double> block_sums;
  for (const PackedSample& item : batch.items) {
    const LlmOutput out = model.forward(item, config.mask_mode);
    Tensor lm = lm_loss(out.logits, item.layout, item.tokens);
    Tensor loss = scale(lm, 1.0f / static_cast<float>(n));
    lm_sum += lm.item();
    if (distill && item.layout.has_vision()) {
      const TeacherStates targets = teacher_forward(model.config, *teacher, *item.sample.image);
      DistillResult d = distill_loss(out.taps, targets, model.aux_heads, config.distill_mode, item.layout,
                                     model.config.norm_eps);
      distill_sum += d.loss.item();
      block_sums.resize(d.per_block.size(), 0.0);
      for (std::size_t b = 0; b < d.per_block.size(); ++b) block_sums[b] += d.per_block[b];
      loss = total_loss(scale(d.loss, 1.0f / static_cast<float>(n_img)), loss, config.distill_weight);
    }
    if (!std::isfinite(loss.item())) {
      throw NumericError("non-finite loss at step " + std::to_string(m.step) + ": lm_loss=" +
                         fmt_loss(lm.item()) + " distill_loss=" + fmt_loss(static_cast<float>(distill_sum)));
    }
    loss.backward();
  }

  m.lm_loss = static_cast<float>(lm_sum / static_cast<double>(n));
  m.loss = m.lm_loss;
  if (config.mode != TrainMode::finetune) {
    const float d = n_img > 0 ? static_cast<float>(distill_sum / static_cast<double>(n_img)) : 0.0f;
    m.distill_loss = distill ? d : 0.0f;
    m.loss = m.lm_loss + config.distill_weight * *m.distill_loss;
    for (double b : block_sums) m.distill_per_block.push_back(static_cast<float>(b / static_cast<double>(n_img)));
  }
  if (!std::isfinite(m.loss)) {
    throw NumericError("non-finite loss at step " + std::to_string(m.step) + ": lm_loss=" + fmt_loss(m.lm_loss) +
                       " distill_loss=" + fmt_loss(m.distill_loss.value_or(0.0f)));
  }

  // Text-only batches leave the vision path and heads without gradients.
  for (const NamedParam& p : state.optimizer.params()) {
    if (!p.tensor.has_grad() && is_vision_or_aux(p.name)) p.tensor.impl()->grad_buffer();
  }
  state.optimizer.step(m.lr);
  state.optimizer.zero_grad();
  ++state.step;
  state.history.push_back(m);
  return m;
}

TrainResult pretrain(VoraModel& model, const TeacherWeights& teacher, const DataConfig& data,
                     const TrainConfig& config, const MetricsSink& sink) {
  if (config.mode == TrainMode::finetune) throw ConfigError("pretrain called with mode finetune");
  if (model.merged) throw StateError("pretrain on a merged model");
  if (config.mode == TrainMode::pretrain && model.adapters.empty()) {
    throw StateError("pretrain needs attached LoRA adapters");
  }
  if (config.mode == TrainMode::full_llm_unstable) model.adapters.clear();
  return run_loop(model, &teacher, data, config, sink);
}

TrainResult finetune(VoraModel& model, const DataConfig& data, const TrainConfig& config, const MetricsSink& sink) {
  if (model.merged) throw StateError("finetune needs a checkpoint with unmerged adapters");
  TrainConfig cfg = config;
  cfg.mode = TrainMode::finetune;
  model.merge_adapters();
  model.drop_aux_heads();
  return run_loop(model, nullptr, data, cfg, sink);
}

std::optional<SpikeReport> detect_spike(std::span<const float> losses, std::size_t window, float factor) {
  for (std::size_t i = window; i < losses.size(); ++i) {
    const float med = median({losses.begin() + static_cast<std::ptrdiff_t>(i - window),
                              losses.begin() + static_cast<std::ptrdiff_t>(i)});
    if (losses[i] > factor * med) return SpikeReport{true, i + 1, losses[i], med};
  }
  return std::nullopt;
}

std::vector<float> smooth(std::span<const float> values, std::size_t window) {
  if (window < 1) throw ConfigError("smoothing window must be >= 1");
  std::vector<float> out(values.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    acc += values[i];
    if (i >= window) acc -= values[i - window];
    out[i] = static_cast<float>(acc / static_cast<double>(std::min(i + 1, window)));
  }
  return out;
}

std::optional<std::size_t> steps_to_threshold(std::span<const float> curve, float threshold) {
  for (std::size_t i = 0; i < curve.size(); ++i) {
    if (curve[i] <= threshold) return i + 1;
  }
  return std::nullopt;
}

std::string AblationReport::csv() const {
  std::ostringstream os;
  os << "mask_mode,distill_mode,rank,threshold,steps_to_threshold,final_loss\n";
  for (const AblationRow& r : rows) {
    os << to_string(r.cell.mask_mode) << ',' << to_string(r.cell.distill_mode) << ',' << r.cell.rank << ','
       << fmt_loss(r.threshold) << ',';
    if (r.steps_to_threshold) os << *r.steps_to_threshold;
    os << ',' << fmt_loss(r.final_loss) << '\n';
  }
  return os.str();
}

AblationReport run_ablation(const AblationConfig& config, const TeacherWeights& teacher) {
  if (config.grid.empty()) throw ConfigError("ablation grid is empty");
  AblationReport report;
  for (const AblationCell& cell : config.grid) {
    ModelConfig mc = config.model;
    mc.rank = cell.rank;
    TrainConfig tc = config.train;
    tc.mode = TrainMode::pretrain;
    tc.total_steps = config.budget_steps;
    tc.mask_mode = cell.mask_mode;
    tc.distill_mode = cell.distill_mode;
    VoraModel model = VoraModel::init(mc, tc.seed);
    const TrainResult run = pretrain(model, teacher, config.data, tc);
    std::vector<float> lm;
    for (const auto& m : run.history) lm.push_back(m.lm_loss);
    const std::vector<float> curve = smooth(lm, config.smooth_window);
    for (float threshold : config.thresholds) {
      AblationRow row{cell, threshold, steps_to_threshold(curve, threshold),
                      curve.empty() ? std::numeric_limits<float>::quiet_NaN() : curve.back()};
      report.rows.push_back(row);
    }
    report.lm_curves.push_back(std::move(lm));
  }
  return report;
}

std::vector<Sample> make_heldout(std::uint64_t root_seed, std::size_t count, const DataConfig& data,
                                 std::size_t patch) {
  std::vector<Sample> out;
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t seed = heldout_seed(root_seed, i);
    out.push_back(i % 2 == 0 ? gen_image_caption(seed, data.image_h, data.image_w, patch) : gen_text_sample(seed));
  }
  return out;
}

EvalMetrics eval_metrics(const VoraModel& model, const TeacherWeights* teacher, std::span<const Sample> heldout,
                         MaskMode mask_mode) {
  if (heldout.empty()) throw ConfigError("eval_metrics: held-out set is empty");
  NoGradGuard guard;
  EvalMetrics e;
  std::size_t caption_hits = 0, caption_total = 0;
  double nll_sum = 0.0;
  std::size_t nll_count = 0;
  double align_sum = 0.0;
  std::size_t align_count = 0;
  const bool can_align = teacher != nullptr && !model.aux_heads.empty();

  for (const Sample& s : heldout) {
    if (s.modality == Modality::image_caption) {
      ++e.image_samples;
      std::vector<TokenId> target = s.answer_tokens;
      target.push_back(Vocab::kEos);
      const std::vector<TokenId> got = decode_greedy(model, s.image, s.prompt_tokens, target.size(), mask_mode);
      for (std::size_t i = 0; i < target.size(); ++i) {
        if (i < got.size() && got[i] == target[i]) ++caption_hits;
      }
      caption_total += target.size();
      if (can_align) {
        const PackedSample p = pack_sample(s, model.config.patch);
        const LlmOutput out = model.forward(p, mask_mode);
        const TeacherStates states = teacher_forward(model.config, *teacher, *s.image);
        const DistillResult d = distill_loss(out.taps, states, model.aux_heads, DistillMode::block_wise, p.layout,
                                             model.config.norm_eps);
        for (float l : d.per_block) align_sum += 1.0 - l;
        align_count += d.per_block.size();
      }
    } else {
      ++e.text_samples;
      const PackedSample p = pack_sample(s, model.config.patch);
      const LlmOutput out = model.forward(p, mask_mode);
      const Tensor loss = lm_loss(out.logits, p.layout, p.tokens);
      const std::size_t targets = p.layout.text_end - std::max<std::size_t>(p.layout.supervise_from, 1);
      nll_sum += static_cast<double>(loss.item()) * static_cast<double>(targets);
      nll_count += targets;
    }
  }
  e.caption_token_accuracy = caption_total ? double(caption_hits) / double(caption_total) : 0.0;
  e.text_perplexity = nll_count ? std::exp(nll_sum / double(nll_count)) : std::numeric_limits<double>::quiet_NaN();
  if (can_align && align_count > 0) e.distill_alignment = align_sum / double(align_count);
  return e;
}

VORA_END_NAMESPACE
