#include "vora/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "vora/errors.hpp"

VORA_BEGIN_NAMESPACE

namespace {

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(std::string_view s) { out.insert(out.end(), s.begin(), s.end()); }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw Error("checkpoint truncated at byte " + std::to_string(pos_));
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t narrow(std::size_t v) {
  if (v > 0xFFFFFFFFu) throw Error("value too large for checkpoint field");
  return static_cast<std::uint32_t>(v);
}

}  // namespace

bool Checkpoint::has_prefix(std::string_view prefix) const {
  auto it = tensors.lower_bound(std::string(prefix));
  return it != tensors.end() && it->first.starts_with(prefix);
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  const ModelConfig& c = ckpt.config;
  w.bytes("VORA");
  w.u32(Checkpoint::kVersion);
  w.u32(ckpt.merged ? 1u : 0u);
  for (std::size_t v : {c.n_llm, c.n_vit, c.d_model, c.d_vit, c.n_heads, c.d_ff, c.vocab, c.patch, c.rank}) {
    w.u32(narrow(v));
  }
  w.f32(c.alpha);
  for (std::size_t v : {c.max_seq, c.vit_heads, c.vit_ff, c.embed_hidden}) w.u32(narrow(v));
  w.f32(c.rope_base);
  w.f32(c.norm_eps);
  w.u32(narrow(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    w.u32(narrow(name.size()));
    w.bytes(name);
    w.u32(narrow(t.rank()));
    for (std::size_t d : t.shape()) w.u32(narrow(d));
    for (real v : t.data()) w.f32(static_cast<float>(v));
  }
  return std::move(w.out);
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (r.str(4) != "VORA") throw Error("not a checkpoint: bad magic");
  const std::uint32_t version = r.u32();
  if (version != Checkpoint::kVersion) throw Error("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  ckpt.merged = (r.u32() & 1u) != 0;
  ModelConfig& c = ckpt.config;
  for (std::size_t* f : {&c.n_llm, &c.n_vit, &c.d_model, &c.d_vit, &c.n_heads, &c.d_ff, &c.vocab, &c.patch, &c.rank}) {
    *f = r.u32();
  }
  c.alpha = r.f32();
  for (std::size_t* f : {&c.max_seq, &c.vit_heads, &c.vit_ff, &c.embed_hidden}) *f = r.u32();
  c.rope_base = r.f32();
  c.norm_eps = r.f32();
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str(r.u32());
    Shape shape(r.u32());
    for (auto& d : shape) d = r.u32();
    std::vector<real> values(numel_of(shape));
    for (real& v : values) v = r.f32();
    ckpt.tensors.emplace(std::move(name), Tensor::from(shape, std::move(values)));
  }
  if (!r.done()) throw Error("checkpoint has trailing bytes");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

VORA_END_NAMESPACE
