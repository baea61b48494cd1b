// vora: pretrain, finetune, merge, eval, gradcheck and ablate from a flat
// key=value config. Exit codes: 0 ok, 1 other failure, 2 config, 3 numeric,
// 4 state misuse.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "vora/checkpoint.hpp"
#include "vora/errors.hpp"
#include "vora/gradcheck.hpp"
#include "vora/run_config.hpp"
#include "vora/trainer.hpp"
#include "vora/vora_model.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitState = 4;

constexpr const char* kCheckpointName = "checkpoint.vora";

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("vora");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* env = std::getenv("VORA_LOG");
  const std::string level = env ? env : "info";
  if (level == "info") {
    spdlog::set_level(spdlog::level::info);
  } else if (level == "debug") {
    spdlog::set_level(spdlog::level::debug);
  } else {
    throw vora::ConfigError("VORA_LOG must be info or debug, got '" + level + "'");
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw vora::Error("cannot write " + path.string());
  out << text;
}

fs::path prepare_out_dir(const std::string& dir) {
  fs::path out(dir);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw vora::ConfigError("cannot create output directory " + dir);
  return out;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

// Timestamps live only here so every other artifact is reproducible.
void write_run_meta(const fs::path& out, const std::string& command, json extra) {
  json meta;
  meta["command"] = command;
  meta["finished_at"] = utc_timestamp();
  for (auto& [k, v] : extra.items()) meta[k] = v;
  write_text(out / "run_meta.json", meta.dump(2) + "\n");
}

vora::MetricsSink jsonl_sink(std::ofstream& file) {
  return [&file](const vora::StepMetrics& m) {
    file << vora::to_json_line(m) << '\n';
    spdlog::debug("step {} loss {:.5f} lm {:.5f}", m.step, m.loss, m.lm_loss);
    if (m.step % 50 == 0) spdlog::info("step {} loss {:.4f}", m.step, m.loss);
  };
}

vora::TeacherWeights warmed_teacher(const vora::RunConfig& cfg) {
  vora::Rng rng(vora::derive_seed(cfg.train.seed, 5));
  vora::TeacherWeights teacher = vora::TeacherWeights::init(cfg.model, rng);
  vora::WarmTeacherOptions opts = cfg.teacher;
  opts.seed = cfg.train.seed;
  if (opts.steps > 0) {
    const auto acc = vora::warm_teacher(cfg.model, teacher, opts);
    spdlog::info("teacher warm-up: {} steps, last-batch accuracy {:.2f}", opts.steps, static_cast<double>(acc));
  }
  teacher.set_requires_grad(false);
  return teacher;
}

json summary(const vora::TrainResult& result) {
  json j;
  j["steps"] = result.history.size();
  if (!result.history.empty()) {
    j["final_loss"] = result.history.back().loss;
    j["final_lm_loss"] = result.history.back().lm_loss;
  }
  if (result.spike) {
    j["spike"] = {{"spiked", result.spike->spiked},
                  {"first_step", result.spike->first_step},
                  {"loss", result.spike->loss},
                  {"trailing_median", result.spike->trailing_median}};
  }
  return j;
}

int cmd_pretrain(const std::string& config_path, const std::string& out_dir) {
  const vora::RunConfig cfg = vora::RunConfig::load(config_path);
  if (cfg.train.mode == vora::TrainMode::finetune) {
    throw vora::ConfigError("mode = finetune belongs to the finetune command");
  }
  const fs::path out = prepare_out_dir(out_dir);
  write_text(out / "config.resolved", cfg.normalized());

  vora::VoraModel model = vora::VoraModel::init(cfg.model, cfg.train.seed);
  vora::TeacherWeights teacher = warmed_teacher(cfg);
  std::ofstream metrics(out / "metrics.jsonl", std::ios::trunc);
  const vora::TrainResult result = vora::pretrain(model, teacher, cfg.data, cfg.train, jsonl_sink(metrics));
  metrics.close();

  vora::Checkpoint ckpt = model.to_checkpoint();
  vora::export_teacher(teacher, ckpt.tensors);
  vora::save_checkpoint(ckpt, out / kCheckpointName);
  if (result.spike) {
    spdlog::info("loss spike (> 2x trailing median): {}", result.spike->spiked ? "yes" : "no");
  }
  write_run_meta(out, "pretrain", summary(result));
  spdlog::info("wrote {}", (out / kCheckpointName).string());
  return kExitOk;
}

int cmd_finetune(const std::string& ckpt_path, const std::string& config_path, const std::string& out_dir) {
  const vora::RunConfig cfg = vora::RunConfig::load(config_path);
  const vora::Checkpoint in = vora::load_checkpoint(ckpt_path);
  if (in.merged) throw vora::StateError("checkpoint " + ckpt_path + " is already merged");
  const fs::path out = prepare_out_dir(out_dir);
  write_text(out / "config.resolved", cfg.normalized());

  vora::VoraModel model = vora::VoraModel::from_checkpoint(in);
  vora::TrainConfig train = cfg.train;
  train.mode = vora::TrainMode::finetune;
  std::ofstream metrics(out / "metrics.jsonl", std::ios::trunc);
  const vora::TrainResult result = vora::finetune(model, cfg.data, train, jsonl_sink(metrics));
  metrics.close();

  vora::save_checkpoint(model.to_checkpoint(), out / kCheckpointName);
  write_run_meta(out, "finetune", summary(result));
  spdlog::info("wrote {}", (out / kCheckpointName).string());
  return kExitOk;
}

int cmd_merge(const std::string& in_path, const std::string& out_path) {
  const vora::Checkpoint in = vora::load_checkpoint(in_path);
  if (in.merged) throw vora::StateError("checkpoint " + in_path + " is already merged");
  vora::VoraModel model = vora::VoraModel::from_checkpoint(in);
  model.merge_adapters();
  model.drop_aux_heads();
  vora::save_checkpoint(model.to_checkpoint(), out_path);
  spdlog::info("wrote merged checkpoint {}", out_path);
  return kExitOk;
}

int cmd_eval(const std::string& ckpt_path, const std::string& config_path, const std::string& logits_path) {
  const vora::RunConfig cfg = vora::RunConfig::load(config_path);
  const vora::Checkpoint ckpt = vora::load_checkpoint(ckpt_path);
  const vora::VoraModel model = vora::VoraModel::from_checkpoint(ckpt);
  const std::optional<vora::TeacherWeights> teacher = vora::import_teacher(model.config, ckpt.tensors);
  const auto heldout = vora::make_heldout(cfg.train.seed, cfg.eval_samples, cfg.data, model.config.patch);
  const vora::EvalMetrics e =
      vora::eval_metrics(model, teacher ? &*teacher : nullptr, heldout, cfg.train.mask_mode);

  json j;
  j["caption_token_accuracy"] = e.caption_token_accuracy;
  j["text_perplexity"] = e.text_perplexity;
  j["distill_alignment"] = e.distill_alignment ? json(*e.distill_alignment) : json(nullptr);
  j["image_samples"] = e.image_samples;
  j["text_samples"] = e.text_samples;
  std::cout << j.dump() << std::endl;

  if (!logits_path.empty()) {
    vora::NoGradGuard guard;
    json dump = json::array();
    for (const vora::Sample& s : heldout) {
      const vora::PackedSample p = vora::pack_sample(s, model.config.patch);
      const vora::LlmOutput o = model.forward(p, cfg.train.mask_mode);
      dump.push_back(std::vector<float>(o.logits.data().begin(), o.logits.data().end()));
    }
    write_text(logits_path, dump.dump() + "\n");
  }
  return kExitOk;
}

int cmd_gradcheck(const std::string& config_path) {
  vora::GradcheckOptions opts;
  if (!config_path.empty()) opts.seed = vora::RunConfig::load(config_path).train.seed;
  bool ok = true;
  for (const vora::GradcheckResult& r : vora::f64::run_gradcheck(opts)) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << " trials=" << r.trials << " coords=" << r.coords
              << " max_err=" << r.max_error
              << '\n';
    ok = ok && r.passed;
  }
  std::cout << (ok ? "gradcheck passed" : "gradcheck FAILED") << " (tolerance " << opts.tolerance << ")" << std::endl;
  return ok ? kExitOk : kExitNumeric;
}

int cmd_ablate(const std::string& config_path, const std::string& out_dir) {
  const vora::RunConfig cfg = vora::RunConfig::load(config_path);
  const fs::path out = prepare_out_dir(out_dir);
  write_text(out / "config.resolved", cfg.normalized());
  const vora::TeacherWeights teacher = warmed_teacher(cfg);
  const vora::AblationReport report = vora::run_ablation(cfg.ablation(), teacher);
  write_text(out / "ablation.csv", report.csv());

  std::ofstream curves(out / "curves.jsonl", std::ios::trunc);
  for (std::size_t i = 0; i < report.lm_curves.size(); ++i) {
    const vora::AblationCell& c = cfg.ablate_grid[i];
    json j;
    j["mask_mode"] = vora::to_string(c.mask_mode);
    j["distill_mode"] = vora::to_string(c.distill_mode);
    j["rank"] = c.rank;
    j["lm_loss"] = report.lm_curves[i];
    curves << j.dump() << '\n';
  }
  write_run_meta(out, "ablate", json{{"cells", cfg.ablate_grid.size()}, {"rows", report.rows.size()}});
  std::cout << report.csv();
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vora: vision as LoRA training toolkit"};
  app.require_subcommand(1);

  std::string config, out, ckpt, in, logits;
  auto* pretrain = app.add_subcommand("pretrain", "stage one: LoRA + vision embedding + distillation");
  pretrain->add_option("-c,--config", config, "run config")->required();
  pretrain->add_option("-o,--out", out, "output directory")->required();

  auto* finetune = app.add_subcommand("finetune", "stage two: merge adapters, train the full LLM");
  finetune->add_option("--ckpt", ckpt, "pre-trained checkpoint")->required();
  finetune->add_option("-c,--config", config, "run config")->required();
  finetune->add_option("-o,--out", out, "output directory")->required();

  auto* merge = app.add_subcommand("merge", "fold LoRA adapters into the base weights");
  merge->add_option("--in", in, "input checkpoint")->required();
  merge->add_option("--out", out, "output checkpoint")->required();

  auto* eval = app.add_subcommand("eval", "held-out caption accuracy, perplexity and alignment");
  eval->add_option("--ckpt", ckpt, "checkpoint")->required();
  eval->add_option("-c,--config", config, "run config")->required();
  eval->add_option("--logits", logits, "also write held-out logits as JSON");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every gradient");
  gradcheck->add_option("-c,--config", config, "run config (for the seed)");

  auto* ablate = app.add_subcommand("ablate", "mask / distillation / rank sweep");
  ablate->add_option("-c,--config", config, "run config")->required();
  ablate->add_option("-o,--out", out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    setup_logging();
    if (*pretrain) return cmd_pretrain(config, out);
    if (*finetune) return cmd_finetune(ckpt, config, out);
    if (*merge) return cmd_merge(in, out);
    if (*eval) return cmd_eval(ckpt, config, logits);
    if (*gradcheck) return cmd_gradcheck(config);
    if (*ablate) return cmd_ablate(config, out);
  } catch (const vora::ConfigError& e) {
    std::cerr << "config error: " << e.what() << std::endl;
    return kExitConfig;
  } catch (const vora::NumericError& e) {
    std::cerr << "numeric abort: " << e.what() << std::endl;
    return kExitNumeric;
  } catch (const vora::StateError& e) {
    std::cerr << "state error: " << e.what() << std::endl;
    return kExitState;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitFailure;
  }
  return kExitFailure;
}
