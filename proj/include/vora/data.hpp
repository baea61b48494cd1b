#pragma once

#include "vora/real.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vora/mask.hpp"
#include "vora/ops.hpp"
#include "vora/rng.hpp"
#include "vora/vision.hpp"

VORA_BEGIN_NAMESPACE

enum class ShapeKind { circle, square, triangle };

std::string_view to_string(ShapeKind kind);

struct Rgb {
  float r, g, b;
};

inline constexpr std::size_t kNumColors = 8;
inline constexpr std::array<std::string_view, kNumColors> kColorNames = {"red",    "green",  "blue",  "yellow",
                                                                        "purple", "orange", "white", "cyan"};
inline constexpr std::array<Rgb, kNumColors> kPalette = {{{0.9f, 0.1f, 0.1f},
                                                          {0.1f, 0.8f, 0.2f},
                                                          {0.15f, 0.3f, 0.95f},
                                                          {0.95f, 0.9f, 0.1f},
                                                          {0.6f, 0.2f, 0.8f},
                                                          {1.0f, 0.55f, 0.0f},
                                                          {1.0f, 1.0f, 1.0f},
                                                          {0.1f, 0.9f, 0.9f}}};

/// One solid shape, placed inside one quadrant of the image
/// (0 top-left, 1 top-right, 2 bottom-left, 3 bottom-right).
struct SceneObject {
  ShapeKind kind = ShapeKind::circle;
  std::size_t color = 0;  // index into kPalette
  bool large = false;
  std::size_t quadrant = 0;
  float cx = 0, cy = 0, radius = 0;  // pixels
  bool operator==(const SceneObject&) const = default;
};

/// Objects are stored in increasing quadrant order with distinct colors.
struct SceneGraph {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<SceneObject> objects;
  bool operator==(const SceneGraph&) const = default;
};

inline constexpr std::size_t kMinImageSide = 16;
inline constexpr std::size_t kMaxImageSide = 64;

SceneGraph random_scene(Rng& rng, std::size_t height, std::size_t width, std::size_t min_objects = 1,
                        std::size_t max_objects = 4);
/// Hard-edged rasterization onto a black background.
Image render_scene(const SceneGraph& scene);
/// "a small red circle left of a large blue square": objects in quadrant
/// order, joined by "left of" (same row), "above" (same column) or "and".
std::string caption_for(const SceneGraph& scene);

enum class Modality { image_caption, text_only };

struct Sample {
  Modality modality = Modality::text_only;
  std::optional<Image> image;
  std::optional<SceneGraph> scene;
  std::vector<TokenId> prompt_tokens;
  std::vector<TokenId> answer_tokens;
  bool operator==(const Sample&) const = default;
};

/// Checks H and W against the patch size and the supported range; throws
/// ConfigError naming the offending dimension.
void check_resolution(std::size_t height, std::size_t width, std::size_t patch);

Sample gen_image_caption(std::uint64_t seed, std::size_t height, std::size_t width, std::size_t patch);
/// Templated QA: arithmetic, copy, reversal and word counting.
Sample gen_text_sample(std::uint64_t seed);

struct DataConfig {
  double image_fraction = 0.82;  // ~30M / 36.4M
  std::size_t image_h = 32;
  std::size_t image_w = 32;
  bool anyres = false;
  std::size_t anyres_min = 16;
  std::size_t anyres_max = 48;
};

/// One sample packed as [vision tokens][BOS][prompt][answer][EOS]. Vision
/// positions hold the <img> placeholder id.
struct PackedSample {
  Sample sample;
  std::vector<TokenId> tokens;  // length == padded length of the batch
  SequenceLayout layout;
  PatchGrid grid;
  std::size_t length() const { return layout.text_end; }
};

PackedSample pack_sample(Sample sample, std::size_t patch);

struct Batch {
  std::vector<PackedSample> items;
  std::size_t padded_len = 0;
  std::size_t image_count() const;
};

/// round(batch_size * image_fraction) image-caption samples at rng-chosen
/// slots, the rest text-only; sequences padded with <pad> to a common length.
Batch make_batch(Rng& rng, std::size_t batch_size, const DataConfig& data, std::size_t patch);

/// Training sample seeds have the top bit clear; held-out seeds have it set.
inline constexpr std::uint64_t kHeldoutBit = 1ULL << 63;

/// Seed of the index-th held-out sample.
std::uint64_t heldout_seed(std::uint64_t root_seed, std::size_t index);

VORA_END_NAMESPACE
