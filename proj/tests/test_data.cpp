#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "helpers.hpp"
#include "vora/data.hpp"
#include "vora/distill.hpp"
#include "vora/errors.hpp"
#include "vora/vocab.hpp"

using namespace vora;

namespace {

std::vector<std::string> words_of(const std::string& text) {
  std::istringstream is(text);
  std::vector<std::string> out;
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

// Relation from pixel centres: objects in the same vertical half share a row.
std::string caption_oracle(const SceneGraph& g) {
  std::vector<std::string> parts;
  for (std::size_t i = 0; i < g.objects.size(); ++i) {
    const SceneObject& o = g.objects[i];
    if (i > 0) {
      const SceneObject& p = g.objects[i - 1];
      const bool same_row = (p.cy < g.height / 2.0f) == (o.cy < g.height / 2.0f);
      const bool same_col = (p.cx < g.width / 2.0f) == (o.cx < g.width / 2.0f);
      parts.push_back(same_row ? "left of" : same_col ? "above" : "and");
    }
    const char* shapes[] = {"circle", "square", "triangle"};
    parts.push_back(std::string("a ") + (o.large ? "large" : "small") + " " + std::string(kColorNames[o.color]) +
                    " " + shapes[static_cast<int>(o.kind)]);
  }
  std::string out;
  for (const auto& s : parts) out += (out.empty() ? "" : " ") + s;
  return out;
}

std::string expected_answer(const std::vector<std::string>& p) {
  if (p[0] == "what") {
    const int a = std::stoi(p[2]), b = std::stoi(p[4]);
    if (p[3] == "plus") return std::to_string(a + b);
    if (p[3] == "minus") return std::to_string(a - b);
    if (p[3] == "times") return std::to_string(a * b);
  }
  std::vector<std::string> rest(p.begin() + 1, p.end());
  std::string out;
  if (p[0] == "repeat:") {
    for (const auto& w : rest) out += (out.empty() ? "" : " ") + w;
    return out;
  }
  if (p[0] == "reverse:") {
    for (auto it = rest.rbegin(); it != rest.rend(); ++it) out += (out.empty() ? "" : " ") + *it;
    return out;
  }
  if (p[0] == "count:") {
    const char* names[] = {"one", "two", "three", "four", "five", "six"};
    return names[rest.size() - 1];
  }
  return "<unknown template>";
}

}  // namespace

TEST(ImageCaption, DeterministicInSeed) {
  EXPECT_EQ(gen_image_caption(42, 32, 32, 8), gen_image_caption(42, 32, 32, 8));
  EXPECT_NE(gen_image_caption(42, 32, 32, 8).answer_tokens, gen_image_caption(43, 32, 32, 8).answer_tokens);
}

TEST(ImageCaption, SingleObjectHasOneColorAndOneShape) {
  Rng rng(1);
  SceneGraph g = random_scene(rng, 32, 32, 1, 1);
  ASSERT_EQ(g.objects.size(), 1u);
  const auto w = words_of(caption_for(g));
  std::size_t colors = 0, shapes = 0;
  for (const auto& x : w) {
    for (auto c : kColorNames) colors += x == c;
    shapes += x == "circle" || x == "square" || x == "triangle";
  }
  EXPECT_EQ(colors, 1u);
  EXPECT_EQ(shapes, 1u);
}

TEST(ImageCaption, MatchesIndependentCaptioner) {
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    const Sample s = gen_image_caption(seed, 32, 48, 8);
    ASSERT_TRUE(s.scene);
    EXPECT_EQ(Vocab::builtin().decode(s.answer_tokens), caption_oracle(*s.scene)) << seed;
  }
}

TEST(ImageCaption, SceneInvariants) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const Sample s = gen_image_caption(seed, 48, 32, 8);
    const SceneGraph& g = *s.scene;
    ASSERT_GE(g.objects.size(), 1u);
    ASSERT_LE(g.objects.size(), 4u);
    std::set<std::size_t> colors;
    for (std::size_t i = 0; i < g.objects.size(); ++i) {
      colors.insert(g.objects[i].color);
      if (i) {
        EXPECT_LT(g.objects[i - 1].quadrant, g.objects[i].quadrant);
      }
      const SceneObject& o = g.objects[i];
      EXPECT_GE(o.cx - o.radius, float(o.quadrant % 2) * 16.0f - 1e-4f);
      EXPECT_LE(o.cy + o.radius, float(o.quadrant / 2 + 1) * 24.0f + 1e-4f);
    }
    EXPECT_EQ(colors.size(), g.objects.size());
  }
}

TEST(ImageCaption, RenderedCentreHasObjectColour) {
  Rng rng(2);
  SceneGraph g = random_scene(rng, 32, 32, 1, 1);
  Image img = render_scene(g);
  const SceneObject& o = g.objects[0];
  const auto x = static_cast<std::size_t>(o.cx), y = static_cast<std::size_t>(o.cy);
  EXPECT_EQ(img.at(y, x, 0), kPalette[o.color].r);
  EXPECT_EQ(img.at(y, x, 1), kPalette[o.color].g);
  EXPECT_EQ(img.at(y, x, 2), kPalette[o.color].b);
}

TEST(TextSample, AnswersFollowTemplates) {
  const Vocab& v = Vocab::builtin();
  std::set<std::string> kinds;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const Sample s = gen_text_sample(seed);
    EXPECT_EQ(s.modality, Modality::text_only);
    EXPECT_FALSE(s.image);
    const auto prompt = words_of(v.decode(s.prompt_tokens));
    ASSERT_FALSE(prompt.empty());
    kinds.insert(prompt[0] == "what" ? prompt[3] : prompt[0]);
    EXPECT_EQ(v.decode(s.answer_tokens), expected_answer(prompt)) << v.decode(s.prompt_tokens);
  }
  EXPECT_EQ(kinds.size(), 6u);
}

TEST(TextSample, Deterministic) { EXPECT_EQ(gen_text_sample(9), gen_text_sample(9)); }

TEST(Pack, LayoutOfImageSample) {
  PackedSample p = pack_sample(gen_image_caption(3, 32, 32, 8), 8);
  const std::size_t prompt = p.sample.prompt_tokens.size(), answer = p.sample.answer_tokens.size();
  EXPECT_EQ(p.layout.vision_end, 16u);
  EXPECT_EQ(p.layout.text_begin, 16u);
  EXPECT_EQ(p.layout.supervise_from, 17 + prompt);
  EXPECT_EQ(p.length(), 16 + 1 + prompt + answer + 1);
  EXPECT_EQ(p.tokens[16], Vocab::kBos);
  EXPECT_EQ(p.tokens.back(), Vocab::kEos);
  for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(p.tokens[i], Vocab::kImg);
}

TEST(Pack, TextSampleHasNoVision) {
  PackedSample p = pack_sample(gen_text_sample(4), 8);
  EXPECT_FALSE(p.layout.has_vision());
  EXPECT_EQ(p.tokens[0], Vocab::kBos);
}

TEST(Batch, FractionExtremes) {
  Rng rng(5);
  DataConfig d;
  d.image_fraction = 0.0;
  EXPECT_EQ(make_batch(rng, 6, d, 8).image_count(), 0u);
  d.image_fraction = 1.0;
  EXPECT_EQ(make_batch(rng, 6, d, 8).image_count(), 6u);
  d.image_fraction = 1.5;
  EXPECT_THROW(make_batch(rng, 6, d, 8), ConfigError);
}

TEST(Batch, ModalityCountIsRoundedFraction) {
  Rng rng(6);
  DataConfig d;
  for (std::size_t b = 1; b <= 12; ++b) {
    for (double f : {0.1, 0.33, 0.5, 0.82, 0.9}) {
      d.image_fraction = f;
      EXPECT_EQ(make_batch(rng, b, d, 8).image_count(), static_cast<std::size_t>(std::llround(double(b) * f)));
    }
  }
}

TEST(Batch, PaddedToCommonLength) {
  Rng rng(7);
  Batch b = make_batch(rng, 8, DataConfig{}, 8);
  for (const auto& item : b.items) {
    EXPECT_EQ(item.tokens.size(), b.padded_len);
    for (std::size_t i = item.length(); i < b.padded_len; ++i) EXPECT_EQ(item.tokens[i], Vocab::kPad);
  }
}

TEST(Batch, PaddingDoesNotChangeLmLoss) {
  Rng rng(8);
  const PackedSample p = pack_sample(gen_image_caption(8, 32, 32, 8), 8);
  const std::size_t len = p.length(), vocab = Vocab::builtin().size();
  Tensor logits = rng.normal_tensor({len, vocab}, 1.0f);
  const real base = lm_loss(logits, p.layout, p.tokens).item();
  std::vector<TokenId> padded = p.tokens;
  padded.resize(len + 5, Vocab::kPad);
  const Tensor parts[] = {logits, rng.normal_tensor({5, vocab}, 3.0f)};
  Tensor extended = concat(parts, 0);
  EXPECT_NEAR(lm_loss(extended, p.layout, padded).item(), base, 1e-6);
}

TEST(Batch, VocabularyClosure) {
  Rng rng(9);
  DataConfig d;
  d.anyres = true;
  const auto v = static_cast<TokenId>(Vocab::builtin().size());
  std::size_t seen = 0;
  while (seen < 10000) {
    Batch b = make_batch(rng, 50, d, 8);
    for (const auto& item : b.items) {
      for (TokenId t : item.tokens) {
        ASSERT_GE(t, 0);
        ASSERT_LT(t, v);
      }
    }
    seen += b.items.size();
  }
}

TEST(Batch, AnyResVariesGrid) {
  Rng rng(10);
  DataConfig d;
  d.anyres = true;
  d.image_fraction = 1.0;
  std::set<std::pair<std::size_t, std::size_t>> grids;
  for (const auto& item : make_batch(rng, 100, d, 8).items) {
    grids.insert({item.grid.rows, item.grid.cols});
    EXPECT_EQ(item.layout.vision_tokens(), item.grid.rows * item.grid.cols);
  }
  EXPECT_GE(grids.size(), 3u);
}

TEST(Resolution, ErrorsNameDimension) {
  auto message = [](std::size_t h, std::size_t w) {
    try {
      check_resolution(h, w, 8);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(message(20, 32).find("height"), std::string::npos);
  EXPECT_NE(message(32, 20).find("width"), std::string::npos);
  EXPECT_NE(message(8, 32).find("height"), std::string::npos);
  EXPECT_NE(message(32, 72).find("width"), std::string::npos);
  EXPECT_EQ(message(16, 64), "");
}

TEST(Heldout, SeedsDisjointFromTraining) {
  for (std::size_t i = 0; i < 100; ++i) EXPECT_NE(heldout_seed(0, i) & kHeldoutBit, 0u);
  EXPECT_NE(heldout_seed(0, 0), heldout_seed(0, 1));
  EXPECT_NE(heldout_seed(0, 0), heldout_seed(1, 0));
}
