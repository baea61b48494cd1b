#include "vora/vora_model.hpp"

#include <algorithm>

#include "vora/errors.hpp"
#include "vora/vocab.hpp"

VORA_BEGIN_NAMESPACE

namespace {

enum Stream : std::uint64_t { kLlmStream = 1, kVisionStream = 2, kLoraStream = 3, kAuxStream = 4 };

void for_each_adapter(AdapterSet& adapters, const std::function<void(const std::string&, Tensor&)>& fn) {
  for (auto& [target, adapter] : adapters) {
    fn(adapter.name() + ".a", adapter.a);
    fn(adapter.name() + ".b", adapter.b);
  }
}

const Tensor& require(const TensorMap& tensors, const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw Error("checkpoint is missing tensor '" + name + "'");
  return it->second;
}

// Overwrites each visited tensor with the checkpoint copy of the same shape.
void load_into(const TensorMap& tensors, const std::string& name, Tensor& t) {
  const Tensor& src = require(tensors, name);
  if (src.shape() != t.shape()) {
    throw ShapeError("checkpoint tensor '" + name + "' has shape " + shape_str(src.shape()) + ", expected " +
                     shape_str(t.shape()));
  }
  t = src.clone();
}

}  // namespace

VoraModel VoraModel::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  VoraModel m;
  m.config = config;
  Rng llm_rng(derive_seed(seed, kLlmStream));
  Rng vision_rng(derive_seed(seed, kVisionStream));
  Rng lora_rng(derive_seed(seed, kLoraStream));
  Rng aux_rng(derive_seed(seed, kAuxStream));
  m.llm = LlmWeights::init(config, llm_rng);
  m.vision = VisionEmbed::init(config, vision_rng);
  m.adapters = attach(config, lora_rng);
  m.aux_heads = make_aux_heads(config, aux_rng);
  return m;
}

Tensor VoraModel::embed(const PackedSample& sample, std::size_t length) const {
  if (length == 0) length = sample.length();
  if (length < sample.length() || length > sample.tokens.size()) {
    throw ShapeError("embed: length " + std::to_string(length) + " outside [" + std::to_string(sample.length()) +
                     ", " + std::to_string(sample.tokens.size()) + "]");
  }
  const SequenceLayout& layout = sample.layout;
  std::vector<TokenId> text(sample.tokens.begin() + static_cast<std::ptrdiff_t>(layout.text_begin),
                            sample.tokens.begin() + static_cast<std::ptrdiff_t>(length));
  Tensor text_rows = embedding(llm.tok_embed, text);
  if (!layout.has_vision()) return text_rows;
  if (!sample.sample.image) throw LayoutError("embed: vision span without an image");
  Tensor patches = patchify(*sample.sample.image, config.patch);
  if (patches.dim(0) != layout.vision_tokens()) {
    throw LayoutError("embed: image yields " + std::to_string(patches.dim(0)) + " patches but the layout reserves " +
                      std::to_string(layout.vision_tokens()));
  }
  const Tensor parts[] = {embed_vision(vision, patches, sample.grid), text_rows};
  return concat(parts, 0);
}

LlmOutput VoraModel::forward(const PackedSample& sample, MaskMode mode, std::size_t length) const {
  if (length == 0) length = sample.length();
  for (const auto& [target, adapter] : adapters) {
    if (adapter.merged) throw StateError("forward through merged adapter " + adapter.name());
  }
  Tensor x = embed(sample, length);
  Tensor mask = build_mask(sample.layout, length, mode);
  return llm_forward(config, llm, x, mask, adapters.empty() ? nullptr : &adapters);
}

void VoraModel::merge_adapters() {
  if (merged) throw StateError("model adapters are already merged");
  NoGradGuard guard;
  for (auto& [target, adapter] : adapters) {
    Tensor& base = llm.blocks[target.block].linear(target.layer);
    base = merge(base, adapter);
  }
  adapters.clear();
  merged = true;
}

void VoraModel::drop_aux_heads() { aux_heads.clear(); }

void VoraModel::for_each(const std::function<void(const std::string&, Tensor&)>& fn) {
  llm.for_each(fn);
  vision.for_each(fn);
  for_each_adapter(adapters, fn);
  for_each_aux(aux_heads, fn);
}

Checkpoint VoraModel::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.config = config;
  ckpt.merged = merged;
  VoraModel& self = const_cast<VoraModel&>(*this);
  self.for_each([&](const std::string& name, Tensor& t) { ckpt.tensors.emplace(name, t.detach()); });
  return ckpt;
}

VoraModel VoraModel::from_checkpoint(const Checkpoint& ckpt) {
  ckpt.config.validate();
  VoraModel m;
  m.config = ckpt.config;
  m.merged = ckpt.merged;
  Rng scratch(0);
  m.llm = LlmWeights::init(m.config, scratch);
  m.vision = VisionEmbed::init(m.config, scratch);
  m.llm.for_each([&](const std::string& name, Tensor& t) { load_into(ckpt.tensors, name, t); });
  m.vision.for_each([&](const std::string& name, Tensor& t) { load_into(ckpt.tensors, name, t); });
  if (ckpt.has_prefix("lora.")) {
    if (ckpt.merged) throw StateError("checkpoint is marked merged but still carries LoRA tensors");
    m.adapters = attach(m.config, scratch);
    for_each_adapter(m.adapters, [&](const std::string& name, Tensor& t) { load_into(ckpt.tensors, name, t); });
  }
  if (ckpt.has_prefix("aux.")) {
    m.aux_heads = make_aux_heads(m.config, scratch);
    for_each_aux(m.aux_heads, [&](const std::string& name, Tensor& t) { load_into(ckpt.tensors, name, t); });
  }
  return m;
}

void export_teacher(TeacherWeights& teacher, TensorMap& out) {
  teacher.for_each([&](const std::string& name, Tensor& t) { out.insert_or_assign(name, t.detach()); });
}

std::optional<TeacherWeights> import_teacher(const ModelConfig& config, const TensorMap& tensors) {
  if (tensors.find("teacher.patch_w") == tensors.end()) return std::nullopt;
  Rng scratch(0);
  TeacherWeights teacher = TeacherWeights::init(config, scratch);
  teacher.for_each([&](const std::string& name, Tensor& t) { load_into(tensors, name, t); });
  teacher.set_requires_grad(false);
  return teacher;
}

PackedSample pack_prompt(const std::optional<Image>& image, std::span<const TokenId> prompt, std::size_t patch) {
  PackedSample p;
  std::size_t vision = 0;
  if (image) {
    p.grid = patch_grid(*image, patch);
    vision = p.grid.count();
    p.sample.modality = Modality::image_caption;
    p.sample.image = image;
  }
  p.sample.prompt_tokens.assign(prompt.begin(), prompt.end());
  p.tokens.assign(vision, Vocab::kImg);
  p.tokens.push_back(Vocab::kBos);
  p.tokens.insert(p.tokens.end(), prompt.begin(), prompt.end());
  p.layout = SequenceLayout{0, vision, vision, p.tokens.size(), p.tokens.size()};
  return p;
}

std::vector<TokenId> decode_greedy(const VoraModel& model, const std::optional<Image>& image,
                                   std::span<const TokenId> prompt, std::size_t max_new, MaskMode mode) {
  NoGradGuard guard;
  PackedSample seq = pack_prompt(image, prompt, model.config.patch);
  if (seq.tokens.size() > model.config.max_seq) {
    throw ShapeError("prompt of " + std::to_string(seq.tokens.size()) + " positions exceeds max_seq " +
                     std::to_string(model.config.max_seq));
  }
  std::vector<TokenId> out;
  while (out.size() < max_new && seq.tokens.size() < model.config.max_seq) {
    const LlmOutput o = model.forward(seq, mode);
    const std::size_t vocab = o.logits.dim(1);
    const auto last = o.logits.data().subspan((o.logits.dim(0) - 1) * vocab, vocab);
    const auto next = static_cast<TokenId>(std::max_element(last.begin(), last.end()) - last.begin());
    out.push_back(next);
    if (next == Vocab::kEos) break;
    seq.tokens.push_back(next);
    seq.layout.text_end = seq.layout.supervise_from = seq.tokens.size();
  }
  return out;
}

VORA_END_NAMESPACE
