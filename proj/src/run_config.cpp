#include "vora/run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "vora/errors.hpp"

VORA_BEGIN_NAMESPACE

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view v) {
  T out{};
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || ptr != end) throw ConfigError("expected a number, got '" + std::string(v) + "'");
  return out;
}

std::string format_float(float v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

bool parse_bool(std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("expected true or false, got '" + std::string(v) + "'");
}

struct Field {
  std::string key;
  std::function<void(std::string_view)> set;
  std::function<std::string()> get;
};

Field size_field(std::string key, std::size_t& ref) {
  return {std::move(key), [&ref](std::string_view v) { ref = parse_number<std::size_t>(v); },
          [&ref] { return std::to_string(ref); }};
}

Field float_field(std::string key, float& ref) {
  return {std::move(key), [&ref](std::string_view v) { ref = parse_number<float>(v); },
          [&ref] { return format_float(ref); }};
}

std::string grid_to_string(const std::vector<AblationCell>& grid) {
  std::string out;
  for (const AblationCell& c : grid) {
    if (!out.empty()) out += ',';
    out += std::string(to_string(c.mask_mode)) + ':' + std::string(to_string(c.distill_mode)) + ':' +
           std::to_string(c.rank);
  }
  return out;
}

std::vector<AblationCell> parse_grid(std::string_view v) {
  std::vector<AblationCell> grid;
  for (std::string_view cell : split(v, ',')) {
    const auto parts = split(cell, ':');
    if (parts.size() != 3) throw ConfigError("ablation cell '" + std::string(cell) + "' is not mask:distill:rank");
    grid.push_back({parse_mask_mode(parts[0]), parse_distill_mode(parts[1]), parse_number<std::size_t>(parts[2])});
  }
  return grid;
}

std::vector<Field> fields(RunConfig& c) {
  std::vector<Field> f;
  f.push_back({"seed", [&c](std::string_view v) { c.train.seed = parse_number<std::uint64_t>(v); },
               [&c] { return std::to_string(c.train.seed); }});
  // model
  f.push_back(size_field("n_llm", c.model.n_llm));
  f.push_back(size_field("n_vit", c.model.n_vit));
  f.push_back(size_field("d_model", c.model.d_model));
  f.push_back(size_field("d_vit", c.model.d_vit));
  f.push_back(size_field("n_heads", c.model.n_heads));
  f.push_back(size_field("d_ff", c.model.d_ff));
  f.push_back(size_field("patch", c.model.patch));
  f.push_back(size_field("rank", c.model.rank));
  f.push_back(float_field("alpha", c.model.alpha));
  f.push_back(size_field("max_seq", c.model.max_seq));
  f.push_back(size_field("vit_heads", c.model.vit_heads));
  f.push_back(size_field("vit_ff", c.model.vit_ff));
  f.push_back(size_field("embed_hidden", c.model.embed_hidden));
  f.push_back(float_field("rope_base", c.model.rope_base));
  f.push_back(float_field("norm_eps", c.model.norm_eps));
  // train
  f.push_back(float_field("lr", c.train.lr));
  f.push_back(size_field("warmup_steps", c.train.warmup_steps));
  f.push_back(size_field("batch_size", c.train.batch_size));
  f.push_back(size_field("total_steps", c.train.total_steps));
  f.push_back({"mode", [&c](std::string_view v) { c.train.mode = parse_train_mode(v); },
               [&c] { return std::string(to_string(c.train.mode)); }});
  f.push_back({"distill_mode", [&c](std::string_view v) { c.train.distill_mode = parse_distill_mode(v); },
               [&c] { return std::string(to_string(c.train.distill_mode)); }});
  f.push_back({"mask_mode", [&c](std::string_view v) { c.train.mask_mode = parse_mask_mode(v); },
               [&c] { return std::string(to_string(c.train.mask_mode)); }});
  f.push_back(float_field("weight_decay", c.train.weight_decay));
  f.push_back(float_field("distill_weight", c.train.distill_weight));
  f.push_back(size_field("spike_window", c.train.spike_window));
  // data
  f.push_back({"image_fraction", [&c](std::string_view v) { c.data.image_fraction = parse_number<double>(v); },
               [&c] { return format_double(c.data.image_fraction); }});
  f.push_back(size_field("image_h", c.data.image_h));
  f.push_back(size_field("image_w", c.data.image_w));
  f.push_back({"anyres", [&c](std::string_view v) { c.data.anyres = parse_bool(v); },
               [&c] { return std::string(c.data.anyres ? "true" : "false"); }});
  f.push_back(size_field("anyres_min", c.data.anyres_min));
  f.push_back(size_field("anyres_max", c.data.anyres_max));
  // teacher warm-up
  f.push_back(size_field("teacher_warm_steps", c.teacher.steps));
  f.push_back(size_field("teacher_warm_batch", c.teacher.batch_size));
  f.push_back(float_field("teacher_warm_lr", c.teacher.lr));
  // ablation and eval
  f.push_back({"ablate_grid", [&c](std::string_view v) { c.ablate_grid = parse_grid(v); },
               [&c] { return grid_to_string(c.ablate_grid); }});
  f.push_back(size_field("ablate_steps", c.ablate_steps));
  f.push_back({"ablate_thresholds",
               [&c](std::string_view v) {
                 c.ablate_thresholds.clear();
                 for (auto t : split(v, ',')) c.ablate_thresholds.push_back(parse_number<float>(t));
               },
               [&c] {
                 std::string out;
                 for (float t : c.ablate_thresholds) out += (out.empty() ? "" : ",") + format_float(t);
                 return out;
               }});
  f.push_back(size_field("ablate_window", c.ablate_window));
  f.push_back(size_field("eval_samples", c.eval_samples));
  return f;
}

}  // namespace

RunConfig RunConfig::parse(std::string_view text) {
  RunConfig cfg;
  auto table = fields(cfg);
  std::set<std::string> seen;
  std::size_t line_no = 0;
  for (std::string_view line : split(text, '\n')) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = trim(line.substr(0, hash));
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + ": expected key = value");
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return f.key == key; });
    if (it == table.end()) throw ConfigError(where + ": unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(where + ": key '" + key + "' given twice");
    if (value.empty()) throw ConfigError(where + ": key '" + key + "' has no value");
    try {
      it->set(value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": key '" + key + "': " + e.what());
    }
  }
  if (!seen.contains("seed")) throw ConfigError("missing required key 'seed'");
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string RunConfig::normalized() const {
  std::string out;
  for (const Field& f : fields(const_cast<RunConfig&>(*this))) out += f.key + " = " + f.get() + "\n";
  return out;
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  check_resolution(data.image_h, data.image_w, model.patch);
  if (!(data.image_fraction >= 0.0 && data.image_fraction <= 1.0)) {
    throw ConfigError("image_fraction must lie in [0, 1]");
  }
  if (data.anyres) {
    if (data.anyres_min > data.anyres_max) throw ConfigError("anyres_min exceeds anyres_max");
    check_resolution(data.anyres_min, data.anyres_min, 1);
    check_resolution(data.anyres_max, data.anyres_max, 1);
  }
  if (ablate_grid.empty()) throw ConfigError("ablate_grid is empty");
  if (ablate_thresholds.empty()) throw ConfigError("ablate_thresholds is empty");
  if (ablate_window < 1) throw ConfigError("ablate_window must be >= 1");
  if (eval_samples < 1) throw ConfigError("eval_samples must be >= 1");
}

AblationConfig RunConfig::ablation() const {
  AblationConfig a;
  a.grid = ablate_grid;
  a.budget_steps = ablate_steps;
  a.thresholds = ablate_thresholds;
  a.smooth_window = ablate_window;
  a.model = model;
  a.data = data;
  a.train = train;
  return a;
}

std::vector<std::string> RunConfig::keys() {
  RunConfig c;
  std::vector<std::string> out;
  for (const Field& f : fields(c)) out.push_back(f.key);
  return out;
}

VORA_END_NAMESPACE
