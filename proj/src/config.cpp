#include "vora/config.hpp"

#include <string>

#include "vora/errors.hpp"
#include "vora/vocab.hpp"

VORA_BEGIN_NAMESPACE

namespace {
void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("invalid model config: " + what);
}
}  // namespace

void ModelConfig::validate() const {
  require(n_llm >= 1, "n_llm must be >= 1");
  require(n_vit <= n_llm, "n_vit must not exceed n_llm");
  require(d_model >= 1 && d_vit >= 1 && d_ff >= 1 && vit_ff >= 1 && embed_hidden >= 1, "widths must be >= 1");
  require(n_heads >= 1 && d_model % n_heads == 0, "n_heads must divide d_model");
  require(head_dim() % 2 == 0, "head size must be even for rotary positions");
  require(vit_heads >= 1 && d_vit % vit_heads == 0, "vit_heads must divide d_vit");
  require(d_model % 4 == 0 && d_vit % 4 == 0, "d_model and d_vit must be multiples of 4 for 2-D positional encoding");
  require(vocab >= 2, "vocab must be >= 2");
  require(patch >= 1, "patch must be >= 1");
  require(rank >= 1, "rank must be >= 1");
  require(alpha > 0.0f, "alpha must be > 0");
  require(max_seq >= 1, "max_seq must be >= 1");
  require(rope_base > 0.0f, "rope_base must be > 0");
  require(norm_eps > 0.0f, "norm_eps must be > 0");
}

ModelConfig ModelConfig::micro() {
  ModelConfig c;
  c.vocab = Vocab::builtin().size();
  return c;
}

ModelConfig ModelConfig::nano() {
  ModelConfig c;
  c.n_llm = 2;
  c.n_vit = 2;
  c.d_model = 8;
  c.d_vit = 8;
  c.n_heads = 2;
  c.d_ff = 8;
  c.vocab = 8;
  c.patch = 1;
  c.rank = 2;
  c.alpha = 2.0f;
  c.max_seq = 16;
  c.vit_heads = 2;
  c.vit_ff = 8;
  c.embed_hidden = 4;
  return c;
}

VORA_END_NAMESPACE
