#include "vora/vision.hpp"

#include <cmath>

#include "vora/errors.hpp"
#include "vora/ops.hpp"

VORA_BEGIN_NAMESPACE

PatchGrid patch_grid(const Image& image, std::size_t patch) {
  if (patch == 0) throw ShapeError("patch size must be >= 1");
  if (image.height == 0 || image.height % patch != 0) {
    throw ShapeError("image height " + std::to_string(image.height) + " is not a positive multiple of patch " +
                     std::to_string(patch));
  }
  if (image.width == 0 || image.width % patch != 0) {
    throw ShapeError("image width " + std::to_string(image.width) + " is not a positive multiple of patch " +
                     std::to_string(patch));
  }
  if (image.pixels.size() != image.height * image.width * Image::kChannels) {
    throw ShapeError("image pixel buffer does not match its dimensions");
  }
  return {image.height / patch, image.width / patch};
}

Tensor patchify(const Image& image, std::size_t patch) {
  const PatchGrid grid = patch_grid(image, patch);
  const std::size_t row_len = patch * patch * Image::kChannels;
  std::vector<real> out(grid.count() * row_len);
  std::size_t o = 0;
  for (std::size_t gr = 0; gr < grid.rows; ++gr) {
    for (std::size_t gc = 0; gc < grid.cols; ++gc) {
      for (std::size_t y = 0; y < patch; ++y) {
        for (std::size_t x = 0; x < patch; ++x) {
          for (std::size_t c = 0; c < Image::kChannels; ++c) out[o++] = image.at(gr * patch + y, gc * patch + x, c);
        }
      }
    }
  }
  return Tensor::from({grid.count(), row_len}, std::move(out));
}

Tensor sinusoid_2d(PatchGrid grid, std::size_t d) {
  if (d % 4 != 0) throw ShapeError("2-D positional encoding needs a width divisible by 4, got " + std::to_string(d));
  const std::size_t quarter = d / 4;
  std::vector<real> out(grid.count() * d);
  for (std::size_t r = 0; r < grid.rows; ++r) {
    for (std::size_t c = 0; c < grid.cols; ++c) {
      real* row = out.data() + (r * grid.cols + c) * d;
      for (std::size_t i = 0; i < quarter; ++i) {
        const double freq = std::pow(10000.0, -double(i) / double(quarter));
        row[i] = static_cast<real>(std::sin(double(r) * freq));
        row[quarter + i] = static_cast<real>(std::cos(double(r) * freq));
        row[2 * quarter + i] = static_cast<real>(std::sin(double(c) * freq));
        row[3 * quarter + i] = static_cast<real>(std::cos(double(c) * freq));
      }
    }
  }
  return Tensor::from({grid.count(), d}, std::move(out));
}

VisionEmbed VisionEmbed::init(const ModelConfig& config, Rng& rng) {
  VisionEmbed e;
  e.fc1_w = rng.normal_tensor({config.embed_hidden, config.patch_dim()},
                              1.0f / std::sqrt(static_cast<real>(config.patch_dim())));
  e.fc1_b = Tensor::zeros({config.embed_hidden});
  e.fc2_w = rng.normal_tensor({config.d_model, config.embed_hidden},
                              1.0f / std::sqrt(static_cast<real>(config.embed_hidden)));
  e.fc2_b = Tensor::zeros({config.d_model});
  return e;
}

void VisionEmbed::for_each(const std::function<void(const std::string&, Tensor&)>& fn) {
  fn("vision.fc1_w", fc1_w);
  fn("vision.fc1_b", fc1_b);
  fn("vision.fc2_w", fc2_w);
  fn("vision.fc2_b", fc2_b);
}

void VisionEmbed::set_requires_grad(bool value) {
  for_each([value](const std::string&, Tensor& t) { t.set_requires_grad(value); });
}

std::size_t VisionEmbed::parameter_count() const {
  return fc1_w.numel() + fc1_b.numel() + fc2_w.numel() + fc2_b.numel();
}

Tensor embed_vision(const VisionEmbed& embed, const Tensor& patches, PatchGrid grid) {
  if (patches.rank() != 2 || patches.dim(0) != grid.count()) {
    throw ShapeError("embed_vision: " + shape_str(patches.shape()) + " patches for a " + std::to_string(grid.rows) +
                     "x" + std::to_string(grid.cols) + " grid");
  }
  Tensor hidden = gelu(add_bias(linear(patches, embed.fc1_w), embed.fc1_b));
  Tensor projected = add_bias(linear(hidden, embed.fc2_w), embed.fc2_b);
  return add(projected, sinusoid_2d(grid, embed.fc2_w.dim(0)));
}

TeacherWeights TeacherWeights::init(const ModelConfig& config, Rng& rng) {
  const auto d = config.d_vit, ff = config.vit_ff;
  const real s_in = 1.0f / std::sqrt(static_cast<real>(d));
  TeacherWeights t;
  t.patch_w = rng.normal_tensor({d, config.patch_dim()}, 1.0f / std::sqrt(static_cast<real>(config.patch_dim())));
  t.patch_b = Tensor::zeros({d});
  for (std::size_t i = 0; i < config.n_vit; ++i) {
    TeacherBlock b;
    b.norm1 = Tensor::full({d}, 1.0f);
    b.wq = rng.normal_tensor({d, d}, s_in);
    b.wk = rng.normal_tensor({d, d}, s_in);
    b.wv = rng.normal_tensor({d, d}, s_in);
    b.wo = rng.normal_tensor({d, d}, s_in * 0.5f);
    b.norm2 = Tensor::full({d}, 1.0f);
    b.fc1_w = rng.normal_tensor({ff, d}, s_in);
    b.fc1_b = Tensor::zeros({ff});
    b.fc2_w = rng.normal_tensor({d, ff}, 0.5f / std::sqrt(static_cast<real>(ff)));
    b.fc2_b = Tensor::zeros({d});
    t.blocks.push_back(std::move(b));
  }
  return t;
}

void TeacherWeights::for_each(const std::function<void(const std::string&, Tensor&)>& fn) {
  fn("teacher.patch_w", patch_w);
  fn("teacher.patch_b", patch_b);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string p = "teacher.blocks." + std::to_string(i) + ".";
    TeacherBlock& b = blocks[i];
    fn(p + "norm1", b.norm1);
    fn(p + "wq", b.wq);
    fn(p + "wk", b.wk);
    fn(p + "wv", b.wv);
    fn(p + "wo", b.wo);
    fn(p + "norm2", b.norm2);
    fn(p + "fc1_w", b.fc1_w);
    fn(p + "fc1_b", b.fc1_b);
    fn(p + "fc2_w", b.fc2_w);
    fn(p + "fc2_b", b.fc2_b);
  }
}

void TeacherWeights::set_requires_grad(bool value) {
  for_each([value](const std::string&, Tensor& t) { t.set_requires_grad(value); });
}

Tensor teacher_patch_embed(const TeacherWeights& teacher, const Tensor& patches) {
  return add_bias(linear(patches, teacher.patch_w), teacher.patch_b);
}

TeacherStates vit_forward(const ModelConfig& config, const TeacherWeights& teacher, const Tensor& patches,
                          PatchGrid grid) {
  const std::size_t d = config.d_vit, heads = config.vit_heads, hd = d / heads;
  const real inv_sqrt = 1.0f / std::sqrt(static_cast<real>(hd));
  Tensor h = add(teacher_patch_embed(teacher, patches), sinusoid_2d(grid, d));
  TeacherStates states;
  for (const TeacherBlock& b : teacher.blocks) {
    Tensor x = rms_norm(h, b.norm1, config.norm_eps);
    Tensor q = linear(x, b.wq), k = linear(x, b.wk), v = linear(x, b.wv);
    std::vector<Tensor> outs;
    for (std::size_t i = 0; i < heads; ++i) {
      Tensor probs = softmax_rows(scale(linear(slice_cols(q, i * hd, hd), slice_cols(k, i * hd, hd)), inv_sqrt));
      outs.push_back(matmul(probs, slice_cols(v, i * hd, hd)));
    }
    h = add(h, linear(heads == 1 ? outs[0] : concat(outs, 1), b.wo));
    Tensor m = rms_norm(h, b.norm2, config.norm_eps);
    h = add(h, add_bias(linear(gelu(add_bias(linear(m, b.fc1_w), b.fc1_b)), b.fc2_w), b.fc2_b));
    states.push_back(h);
  }
  return states;
}

TeacherStates teacher_forward(const ModelConfig& config, const TeacherWeights& teacher, const Image& image) {
  NoGradGuard no_grad;
  Tensor patches = patchify(image, config.patch);
  return vit_forward(config, teacher, patches, patch_grid(image, config.patch));
}

VORA_END_NAMESPACE
