#pragma once

#include "vora/real.hpp"

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "vora/config.hpp"
#include "vora/rng.hpp"
#include "vora/tensor.hpp"

VORA_BEGIN_NAMESPACE

/// RGB image, row-major HWC floats in [0, 1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;  // height * width * 3

  static constexpr std::size_t kChannels = 3;
  float& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * width + x) * kChannels + c]; }
  float at(std::size_t y, std::size_t x, std::size_t c) const { return pixels[(y * width + x) * kChannels + c]; }
  bool operator==(const Image&) const = default;
};

struct PatchGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t count() const { return rows * cols; }
  bool operator==(const PatchGrid&) const = default;
};

PatchGrid patch_grid(const Image& image, std::size_t patch);

/// [S, patch*patch*3] with patches in row-major grid order; each row is the
/// patch flattened as (y, x, channel).
Tensor patchify(const Image& image, std::size_t patch);

/// Factorized 2-D sinusoidal encoding [rows*cols, d]: the first d/2 columns
/// encode the grid row, the last d/2 the grid column, each as sin/cos halves.
Tensor sinusoid_2d(PatchGrid grid, std::size_t d);

/// Two-layer MLP (GELU between) plus the 2-D positional encoding. The only
/// vision parameters that survive into merged inference.
struct VisionEmbed {
  Tensor fc1_w;  // [embed_hidden, patch_dim]
  Tensor fc1_b;  // [embed_hidden]
  Tensor fc2_w;  // [d_model, embed_hidden]
  Tensor fc2_b;  // [d_model]

  static VisionEmbed init(const ModelConfig& config, Rng& rng);
  void for_each(const std::function<void(const std::string&, Tensor&)>& fn);
  void set_requires_grad(bool value);
  std::size_t parameter_count() const;
};

Tensor embed_vision(const VisionEmbed& embed, const Tensor& patches, PatchGrid grid);

struct TeacherBlock {
  Tensor norm1, wq, wk, wv, wo;
  Tensor norm2, fc1_w, fc1_b, fc2_w, fc2_b;
};

/// Toy ViT: linear patch embedding + 2-D sinusoid, n_vit pre-norm blocks
/// with bi-directional attention and a GELU MLP, no CLS token.
struct TeacherWeights {
  Tensor patch_w;  // [d_vit, patch_dim]
  Tensor patch_b;  // [d_vit]
  std::vector<TeacherBlock> blocks;

  static TeacherWeights init(const ModelConfig& config, Rng& rng);
  void for_each(const std::function<void(const std::string&, Tensor&)>& fn);
  void set_requires_grad(bool value);
};

/// Per-block output hidden states, each [S, d_vit].
using TeacherStates = std::vector<Tensor>;

/// Patch-embedding sublayer before positional terms: patches * patch_w^T + patch_b.
Tensor teacher_patch_embed(const TeacherWeights& teacher, const Tensor& patches);

/// Forward that records a graph when gradients are enabled (used while
/// warming the teacher).
TeacherStates vit_forward(const ModelConfig& config, const TeacherWeights& teacher, const Tensor& patches,
                          PatchGrid grid);

/// Frozen forward: never records gradients.
TeacherStates teacher_forward(const ModelConfig& config, const TeacherWeights& teacher, const Image& image);

struct WarmTeacherOptions {
  std::size_t steps = 800;
  std::size_t batch_size = 8;
  float lr = 3e-3f;
  std::uint64_t seed = 0;
};

/// Briefly trains the teacher to classify (color, shape) of single-shape
/// synthetic images, so that its block features carry scene information.
/// Returns the final training accuracy over the last batch.
real warm_teacher(const ModelConfig& config, TeacherWeights& teacher, const WarmTeacherOptions& options);

VORA_END_NAMESPACE
