#include "vora/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vora/errors.hpp"
#include "vora/vocab.hpp"

VORA_BEGIN_NAMESPACE

std::string_view to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::circle: return "circle";
    case ShapeKind::square: return "square";
    case ShapeKind::triangle: return "triangle";
  }
  return "?";
}

SceneGraph random_scene(Rng& rng, std::size_t height, std::size_t width, std::size_t min_objects,
                        std::size_t max_objects) {
  if (min_objects < 1 || max_objects > 4 || min_objects > max_objects) {
    throw ConfigError("scene object count range must lie within [1, 4]");
  }
  SceneGraph scene{height, width, {}};
  const auto count = static_cast<std::size_t>(
      rng.uniform_int(static_cast<std::int64_t>(min_objects), static_cast<std::int64_t>(max_objects)));

  std::array<std::size_t, 4> quadrants = {0, 1, 2, 3};
  std::array<std::size_t, kNumColors> colors{};
  std::iota(colors.begin(), colors.end(), 0);
  // Partial Fisher-Yates draws without replacement.
  for (std::size_t i = 0; i < count; ++i) {
    std::swap(quadrants[i], quadrants[static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i), 3))]);
    std::swap(colors[i],
              colors[static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i), kNumColors - 1))]);
  }

  const float qw = static_cast<float>(width) / 2.0f;
  const float qh = static_cast<float>(height) / 2.0f;
  const float extent = std::min(qw, qh);
  for (std::size_t i = 0; i < count; ++i) {
    SceneObject obj;
    obj.kind = static_cast<ShapeKind>(rng.uniform_int(0, 2));
    obj.color = colors[i];
    obj.large = rng.uniform() < 0.5;
    obj.quadrant = quadrants[i];
    obj.radius = extent * (obj.large ? 0.42f : 0.26f);
    const float x0 = static_cast<float>(obj.quadrant % 2) * qw;
    const float y0 = static_cast<float>(obj.quadrant / 2) * qh;
    obj.cx = x0 + obj.radius + static_cast<float>(rng.uniform()) * (qw - 2.0f * obj.radius);
    obj.cy = y0 + obj.radius + static_cast<float>(rng.uniform()) * (qh - 2.0f * obj.radius);
    scene.objects.push_back(obj);
  }
  std::sort(scene.objects.begin(), scene.objects.end(),
            [](const SceneObject& a, const SceneObject& b) { return a.quadrant < b.quadrant; });
  return scene;
}

namespace {
bool covers(const SceneObject& obj, float px, float py) {
  const float dx = px - obj.cx, dy = py - obj.cy, r = obj.radius;
  switch (obj.kind) {
    case ShapeKind::circle: return dx * dx + dy * dy <= r * r;
    case ShapeKind::square: return std::abs(dx) <= 0.85f * r && std::abs(dy) <= 0.85f * r;
    case ShapeKind::triangle: return dy >= -r && dy <= r && std::abs(dx) <= (dy + r) / 2.0f;
  }
  return false;
}
}  // namespace

Image render_scene(const SceneGraph& scene) {
  Image img{scene.height, scene.width, std::vector<float>(scene.height * scene.width * Image::kChannels, 0.0f)};
  for (const SceneObject& obj : scene.objects) {
    const Rgb c = kPalette[obj.color];
    for (std::size_t y = 0; y < scene.height; ++y) {
      for (std::size_t x = 0; x < scene.width; ++x) {
        if (!covers(obj, static_cast<float>(x) + 0.5f, static_cast<float>(y) + 0.5f)) continue;
        img.at(y, x, 0) = c.r;
        img.at(y, x, 1) = c.g;
        img.at(y, x, 2) = c.b;
      }
    }
  }
  return img;
}

std::string caption_for(const SceneGraph& scene) {
  std::string out;
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const SceneObject& obj = scene.objects[i];
    if (i > 0) {
      const std::size_t prev = scene.objects[i - 1].quadrant;
      if (prev / 2 == obj.quadrant / 2) {
        out += " left of ";
      } else if (prev % 2 == obj.quadrant % 2) {
        out += " above ";
      } else {
        out += " and ";
      }
    }
    out += "a ";
    out += obj.large ? "large " : "small ";
    out += kColorNames[obj.color];
    out += ' ';
    out += to_string(obj.kind);
  }
  return out;
}

void check_resolution(std::size_t height, std::size_t width, std::size_t patch) {
  auto check = [patch](std::size_t v, const char* name) {
    if (v < kMinImageSide || v > kMaxImageSide) {
      throw ConfigError(std::string("image ") + name + " " + std::to_string(v) + " outside [" +
                        std::to_string(kMinImageSide) + ", " + std::to_string(kMaxImageSide) + "]");
    }
    if (patch == 0 || v % patch != 0) {
      throw ConfigError(std::string("image ") + name + " " + std::to_string(v) + " is not a multiple of patch " +
                        std::to_string(patch));
    }
  };
  check(height, "height");
  check(width, "width");
}

Sample gen_image_caption(std::uint64_t seed, std::size_t height, std::size_t width, std::size_t patch) {
  check_resolution(height, width, patch);
  Rng rng(derive_seed(seed, 0xCA9));
  Sample s;
  s.modality = Modality::image_caption;
  s.scene = random_scene(rng, height, width);
  s.image = render_scene(*s.scene);
  const Vocab& vocab = Vocab::builtin();
  s.prompt_tokens = vocab.encode("describe the image");
  s.answer_tokens = vocab.encode(caption_for(*s.scene));
  return s;
}

namespace {
constexpr std::array<std::string_view, 6> kCountWords = {"one", "two", "three", "four", "five", "six"};

std::string random_words(Rng& rng, std::size_t n) {
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out += ' ';
    if (rng.uniform() < 0.5) {
      out += kColorNames[static_cast<std::size_t>(rng.uniform_int(0, kNumColors - 1))];
    } else {
      out += to_string(static_cast<ShapeKind>(rng.uniform_int(0, 2)));
    }
  }
  return out;
}
}  // namespace

Sample gen_text_sample(std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x7E7));
  std::string prompt, answer;
  switch (rng.uniform_int(0, 5)) {
    case 0: {
      const auto a = rng.uniform_int(0, 49), b = rng.uniform_int(0, 49);
      prompt = "what is " + std::to_string(a) + " plus " + std::to_string(b);
      answer = std::to_string(a + b);
      break;
    }
    case 1: {
      auto a = rng.uniform_int(0, 99), b = rng.uniform_int(0, 99);
      if (a < b) std::swap(a, b);
      prompt = "what is " + std::to_string(a) + " minus " + std::to_string(b);
      answer = std::to_string(a - b);
      break;
    }
    case 2: {
      const auto a = rng.uniform_int(0, 9), b = rng.uniform_int(0, 9);
      prompt = "what is " + std::to_string(a) + " times " + std::to_string(b);
      answer = std::to_string(a * b);
      break;
    }
    case 3: {
      const std::string words = random_words(rng, static_cast<std::size_t>(rng.uniform_int(1, 4)));
      prompt = "repeat: " + words;
      answer = words;
      break;
    }
    case 4: {
      const auto n = static_cast<std::size_t>(rng.uniform_int(1, 4));
      std::vector<std::string> words;
      for (std::size_t i = 0; i < n; ++i) words.push_back(random_words(rng, 1));
      prompt = "reverse:";
      for (const auto& w : words) prompt += " " + w;
      for (std::size_t i = n; i-- > 0;) answer += (answer.empty() ? "" : " ") + words[i];
      break;
    }
    default: {
      const auto n = static_cast<std::size_t>(rng.uniform_int(1, 6));
      prompt = "count: " + random_words(rng, n);
      answer = std::string(kCountWords[n - 1]);
      break;
    }
  }
  const Vocab& vocab = Vocab::builtin();
  Sample s;
  s.modality = Modality::text_only;
  s.prompt_tokens = vocab.encode(prompt);
  s.answer_tokens = vocab.encode(answer);
  return s;
}

PackedSample pack_sample(Sample sample, std::size_t patch) {
  PackedSample p;
  std::size_t vision = 0;
  if (sample.modality == Modality::image_caption) {
    if (!sample.image) throw ConfigError("image-caption sample without an image");
    p.grid = patch_grid(*sample.image, patch);
    vision = p.grid.count();
  }
  p.tokens.assign(vision, Vocab::kImg);
  p.tokens.push_back(Vocab::kBos);
  p.tokens.insert(p.tokens.end(), sample.prompt_tokens.begin(), sample.prompt_tokens.end());
  const std::size_t answer_at = p.tokens.size();
  p.tokens.insert(p.tokens.end(), sample.answer_tokens.begin(), sample.answer_tokens.end());
  p.tokens.push_back(Vocab::kEos);
  p.layout = SequenceLayout{0, vision, vision, p.tokens.size(), answer_at};
  p.sample = std::move(sample);
  return p;
}

std::size_t Batch::image_count() const {
  return static_cast<std::size_t>(std::count_if(items.begin(), items.end(), [](const PackedSample& p) {
    return p.sample.modality == Modality::image_caption;
  }));
}

Batch make_batch(Rng& rng, std::size_t batch_size, const DataConfig& data, std::size_t patch) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(data.image_fraction >= 0.0 && data.image_fraction <= 1.0)) {
    throw ConfigError("image_fraction must lie in [0, 1]");
  }
  const auto n_images = static_cast<std::size_t>(std::llround(double(batch_size) * data.image_fraction));
  std::vector<bool> is_image(batch_size, false);
  std::fill_n(is_image.begin(), n_images, true);
  for (std::size_t i = batch_size; i-- > 1;) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i)));
    std::swap(is_image[i], is_image[j]);
  }

  // Multiples of the patch size inside the AnyRes range.
  std::vector<std::size_t> sides;
  for (std::size_t s = data.anyres_min; s <= data.anyres_max; ++s) {
    if (patch && s % patch == 0) sides.push_back(s);
  }
  if (data.anyres && sides.empty()) throw ConfigError("no AnyRes side length is a multiple of the patch size");

  Batch batch;
  for (std::size_t i = 0; i < batch_size; ++i) {
    const std::uint64_t seed = rng.next_u64() & ~kHeldoutBit;
    if (is_image[i]) {
      std::size_t h = data.image_h, w = data.image_w;
      if (data.anyres) {
        h = sides[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(sides.size()) - 1))];
        w = sides[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(sides.size()) - 1))];
      }
      batch.items.push_back(pack_sample(gen_image_caption(seed, h, w, patch), patch));
    } else {
      batch.items.push_back(pack_sample(gen_text_sample(seed), patch));
    }
  }
  for (const auto& item : batch.items) batch.padded_len = std::max(batch.padded_len, item.tokens.size());
  for (auto& item : batch.items) item.tokens.resize(batch.padded_len, Vocab::kPad);
  return batch;
}

std::uint64_t heldout_seed(std::uint64_t root_seed, std::size_t index) {
  return derive_seed(derive_seed(root_seed, 0x4E1D0u), index) | kHeldoutBit;
}

VORA_END_NAMESPACE
