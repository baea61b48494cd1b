#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "vora/errors.hpp"
#include "vora/mask.hpp"
#include "vora/model.hpp"
#include "vora/vocab.hpp"
#include "vora/vora_model.hpp"

using namespace vora;
using vora::test::bit_equal;
using vora::test::max_abs_diff;

namespace {

using Mat = std::vector<std::vector<double>>;

Mat to_mat(const Tensor& t) {
  Mat m(t.dim(0), std::vector<double>(t.dim(1)));
  for (std::size_t i = 0; i < t.dim(0); ++i) {
    for (std::size_t j = 0; j < t.dim(1); ++j) m[i][j] = t.at(i * t.dim(1) + j);
  }
  return m;
}

// x * w^T for w stored [out, in].
Mat lin(const Mat& x, const Tensor& w) {
  const Mat wm = to_mat(w);
  Mat y(x.size(), std::vector<double>(wm.size(), 0.0));
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t o = 0; o < wm.size(); ++o) {
      for (std::size_t k = 0; k < x[i].size(); ++k) y[i][o] += x[i][k] * wm[o][k];
    }
  }
  return y;
}

Mat lora_lin(const Mat& x, const Tensor& w, const LoraAdapter* ad) {
  Mat y = lin(x, w);
  if (!ad) return y;
  const Mat d = lin(lin(x, ad->a), ad->b);
  const double s = double(ad->alpha) / double(ad->rank);
  for (std::size_t i = 0; i < y.size(); ++i) {
    for (std::size_t j = 0; j < y[i].size(); ++j) y[i][j] += s * d[i][j];
  }
  return y;
}

Mat rmsnorm(const Mat& x, const Tensor& g, double eps) {
  Mat y = x;
  for (auto& r : y) {
    double ss = 0;
    for (double v : r) ss += v * v;
    const double inv = 1.0 / std::sqrt(ss / double(r.size()) + eps);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] *= inv * g.at(j);
  }
  return y;
}

void rotate(Mat& x, std::size_t heads, double base) {
  const std::size_t hd = x[0].size() / heads, half = hd / 2;
  for (std::size_t p = 0; p < x.size(); ++p) {
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < half; ++i) {
        const double ang = double(p) * std::pow(base, -2.0 * double(i) / double(hd));
        double& a = x[p][h * hd + i];
        double& b = x[p][h * hd + i + half];
        const double a0 = a, b0 = b;
        a = a0 * std::cos(ang) - b0 * std::sin(ang);
        b = a0 * std::sin(ang) + b0 * std::cos(ang);
      }
    }
  }
}

const LoraAdapter* find(const AdapterSet* set, std::size_t block, LinearKind kind) {
  if (!set) return nullptr;
  auto it = set->find({block, kind});
  return it == set->end() ? nullptr : &it->second;
}

struct OracleOut {
  std::vector<Mat> taps;
  Mat logits;
};

// Straight-line double-precision transformer forward.
OracleOut oracle_forward(const ModelConfig& c, const LlmWeights& w, const Tensor& embedded,
                         const SequenceLayout& layout, const AdapterSet* adapters) {
  Mat h = to_mat(embedded);
  const std::size_t seq = h.size(), hd = c.d_model / c.n_heads;
  auto allowed = [&](std::size_t q, std::size_t k) {
    const bool qv = q < layout.vision_end, kv = k < layout.vision_end;
    return (qv && kv) || k <= q;
  };
  OracleOut out;
  for (std::size_t b = 0; b < c.n_llm; ++b) {
    const BlockWeights& bw = w.blocks[b];
    const Mat xn = rmsnorm(h, bw.attn_norm, c.norm_eps);
    Mat q = lora_lin(xn, bw.wq, find(adapters, b, LinearKind::q));
    Mat k = lora_lin(xn, bw.wk, find(adapters, b, LinearKind::k));
    const Mat v = lora_lin(xn, bw.wv, find(adapters, b, LinearKind::v));
    rotate(q, c.n_heads, c.rope_base);
    rotate(k, c.n_heads, c.rope_base);
    Mat att(seq, std::vector<double>(c.d_model, 0.0));
    for (std::size_t head = 0; head < c.n_heads; ++head) {
      for (std::size_t i = 0; i < seq; ++i) {
        std::vector<double> s(seq, 0.0);
        double mx = -1e300;
        for (std::size_t j = 0; j < seq; ++j) {
          if (!allowed(i, j)) continue;
          for (std::size_t d = 0; d < hd; ++d) s[j] += q[i][head * hd + d] * k[j][head * hd + d];
          s[j] /= std::sqrt(double(hd));
          mx = std::max(mx, s[j]);
        }
        double z = 0;
        for (std::size_t j = 0; j < seq; ++j) {
          s[j] = allowed(i, j) ? std::exp(s[j] - mx) : 0.0;
          z += s[j];
        }
        for (std::size_t j = 0; j < seq; ++j) {
          for (std::size_t d = 0; d < hd; ++d) att[i][head * hd + d] += s[j] / z * v[j][head * hd + d];
        }
      }
    }
    const Mat o = lora_lin(att, bw.wo, find(adapters, b, LinearKind::o));
    for (std::size_t i = 0; i < seq; ++i) {
      for (std::size_t j = 0; j < c.d_model; ++j) h[i][j] += o[i][j];
    }
    const Mat fn = rmsnorm(h, bw.ffn_norm, c.norm_eps);
    Mat g = lora_lin(fn, bw.w_gate, find(adapters, b, LinearKind::ffn_gate));
    const Mat u = lora_lin(fn, bw.w_up, find(adapters, b, LinearKind::ffn_up));
    for (std::size_t i = 0; i < seq; ++i) {
      for (std::size_t j = 0; j < g[i].size(); ++j) g[i][j] = g[i][j] / (1.0 + std::exp(-g[i][j])) * u[i][j];
    }
    const Mat dn = lora_lin(g, bw.w_down, find(adapters, b, LinearKind::ffn_down));
    for (std::size_t i = 0; i < seq; ++i) {
      for (std::size_t j = 0; j < c.d_model; ++j) h[i][j] += dn[i][j];
    }
    if (b < c.n_vit) out.taps.push_back(h);
  }
  out.logits = lin(rmsnorm(h, w.final_norm, c.norm_eps), w.lm_head);
  return out;
}

ModelConfig small_config() {
  ModelConfig c = ModelConfig::nano();
  c.n_llm = 2;
  c.n_vit = 2;
  c.d_model = 8;
  c.n_heads = 2;
  c.d_ff = 12;
  c.vocab = 11;
  c.rank = 2;
  c.alpha = 3.0f;
  return c;
}

// Unit-scale weights so every sublayer contributes visibly.
void randomize(LlmWeights& w, Rng& rng) {
  w.for_each([&](const std::string&, Tensor& t) {
    for (real& v : t.mutable_data()) v = static_cast<real>(t.rank() == 1 ? 1.0 + 0.3 * rng.normal() : 0.4 * rng.normal());
  });
}

double max_diff(const Mat& a, const Tensor& t) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < a[i].size(); ++j) {
      const double r = a[i][j];
      m = std::max(m, std::abs(r - t.at(i * a[i].size() + j)) / std::max(1.0, std::abs(r)));
    }
  }
  return m;
}

}  // namespace

TEST(LlmForward, MatchesIndependentOracle) {
  const ModelConfig c = small_config();
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Rng rng(seed);
    LlmWeights w = LlmWeights::init(c, rng);
    randomize(w, rng);
    Tensor x = rng.normal_tensor({4, c.d_model}, 1.0f);
    const SequenceLayout layout{0, 2, 2, 4, 2};
    const LlmOutput out = llm_forward(c, w, x, build_hybrid_mask(layout, 4));
    const OracleOut ref = oracle_forward(c, w, x, layout, nullptr);
    ASSERT_EQ(out.taps.size(), ref.taps.size());
    for (std::size_t b = 0; b < ref.taps.size(); ++b) EXPECT_LT(max_diff(ref.taps[b], out.taps[b].hidden), 1e-5);
    EXPECT_LT(max_diff(ref.logits, out.logits), 1e-5);
  }
}

TEST(LlmForward, MatchesOracleWithAdapters) {
  const ModelConfig c = small_config();
  Rng rng(9);
  LlmWeights w = LlmWeights::init(c, rng);
  randomize(w, rng);
  AdapterSet adapters = attach(c, rng);
  for (auto& [t, ad] : adapters) ad.b = rng.normal_tensor(ad.b.shape(), 0.3f);
  Tensor x = rng.normal_tensor({4, c.d_model}, 1.0f);
  const SequenceLayout layout{0, 1, 1, 4, 1};
  const LlmOutput out = llm_forward(c, w, x, build_hybrid_mask(layout, 4), &adapters);
  const OracleOut ref = oracle_forward(c, w, x, layout, &adapters);
  for (std::size_t b = 0; b < ref.taps.size(); ++b) EXPECT_LT(max_diff(ref.taps[b], out.taps[b].hidden), 1e-5);
  EXPECT_LT(max_diff(ref.logits, out.logits), 1e-5);
}

TEST(LlmForward, ZeroBAdaptersLeaveLogitsBitIdentical) {
  const ModelConfig c = ModelConfig::micro();
  Rng rng(4);
  LlmWeights w = LlmWeights::init(c, rng);
  AdapterSet adapters = attach(c, rng);
  Tensor x = rng.normal_tensor({6, c.d_model}, 1.0f);
  Tensor mask = build_hybrid_mask(SequenceLayout{0, 2, 2, 6, 2}, 6);
  EXPECT_TRUE(bit_equal(llm_forward(c, w, x, mask).logits, llm_forward(c, w, x, mask, &adapters).logits));
}

TEST(LlmForward, SingleTokenShape) {
  const ModelConfig c = ModelConfig::micro();
  Rng rng(5);
  LlmWeights w = LlmWeights::init(c, rng);
  const std::vector<TokenId> ids = {Vocab::kBos};
  const LlmOutput out = llm_forward(c, w, embedding(w.tok_embed, ids), build_hybrid_mask({0, 0, 0, 1, 0}, 1));
  EXPECT_EQ(out.logits.shape(), (Shape{1, c.vocab}));
  for (real v : out.logits.data()) EXPECT_TRUE(std::isfinite(v));
}

TEST(LlmForward, TapsCoverFirstNvitBlocks) {
  ModelConfig c = ModelConfig::micro();
  Rng rng(6);
  LlmWeights w = LlmWeights::init(c, rng);
  Tensor x = rng.normal_tensor({5, c.d_model}, 1.0f);
  const LlmOutput out = llm_forward(c, w, x, build_hybrid_mask({0, 0, 0, 5, 0}, 5));
  ASSERT_EQ(out.taps.size(), c.n_vit);
  for (std::size_t i = 0; i < c.n_vit; ++i) {
    EXPECT_EQ(out.taps[i].block_index, i);
    EXPECT_EQ(out.taps[i].hidden.shape(), (Shape{5, c.d_model}));
  }
}

TEST(LlmForward, RejectsSequencesBeyondMaxSeq) {
  ModelConfig c = small_config();
  c.max_seq = 3;
  Rng rng(7);
  LlmWeights w = LlmWeights::init(c, rng);
  EXPECT_THROW(llm_forward(c, w, Tensor::zeros({4, c.d_model}), build_hybrid_mask({0, 0, 0, 4, 0}, 4)),
               ShapeError);
}

TEST(VoraModel, TextOnlyForwardIsPlainCausalLm) {
  const VoraModel m = [] {
    VoraModel v = VoraModel::init(ModelConfig::micro(), 3);
    v.adapters.clear();
    return v;
  }();
  const Sample s = gen_text_sample(12);
  const PackedSample p = pack_sample(s, m.config.patch);
  const LlmOutput a = m.forward(p, MaskMode::hybrid);
  const std::size_t n = p.length();
  Tensor mask = Tensor::zeros({n, n});
  for (std::size_t q = 0; q < n; ++q) {
    for (std::size_t k = q + 1; k < n; ++k) mask.mutable_data()[q * n + k] = kMasked;
  }
  const LlmOutput b = llm_forward(m.config, m.llm, embedding(m.llm.tok_embed, p.tokens), mask);
  EXPECT_TRUE(bit_equal(a.logits, b.logits));
}

TEST(VoraModel, MergeTwiceIsStateError) {
  VoraModel m = VoraModel::init(ModelConfig::micro(), 1);
  m.merge_adapters();
  EXPECT_TRUE(m.adapters.empty());
  EXPECT_THROW(m.merge_adapters(), StateError);
}

TEST(Decode, MaxNewOneAppendsOneToken) {
  const VoraModel m = VoraModel::init(ModelConfig::micro(), 2);
  const std::vector<TokenId> prompt = Vocab::builtin().encode("describe the image");
  const Sample s = gen_image_caption(5, 32, 32, m.config.patch);
  EXPECT_EQ(decode_greedy(m, s.image, prompt, 1, MaskMode::hybrid).size(), 1u);
}

TEST(Decode, DeterministicAndBounded) {
  const VoraModel m = VoraModel::init(ModelConfig::micro(), 2);
  const std::vector<TokenId> prompt = Vocab::builtin().encode("what is 2 plus 3");
  const auto a = decode_greedy(m, std::nullopt, prompt, 6, MaskMode::hybrid);
  const auto b = decode_greedy(m, std::nullopt, prompt, 6, MaskMode::hybrid);
  EXPECT_EQ(a, b);
  EXPECT_GE(a.size(), 1u);
  EXPECT_LE(a.size(), 6u);
  for (std::size_t i = 0; i + 1 < a.size(); ++i) EXPECT_NE(a[i], Vocab::kEos);
}

TEST(Decode, StopsAtMaxSeq) {
  ModelConfig c = ModelConfig::micro();
  c.max_seq = 8;
  const VoraModel m = VoraModel::init(c, 2);
  const std::vector<TokenId> prompt = Vocab::builtin().encode("repeat: red");
  const auto out = decode_greedy(m, std::nullopt, prompt, 50, MaskMode::hybrid);
  EXPECT_LE(prompt.size() + 1 + out.size(), c.max_seq);
}

TEST(ModelConfig, ValidationNamesTheConstraint) {
  ModelConfig c = ModelConfig::micro();
  c.n_vit = c.n_llm + 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig::micro();
  c.n_heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig::micro();
  c.rank = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_NO_THROW(ModelConfig::micro().validate());
  EXPECT_NO_THROW(ModelConfig::nano().validate());
}
