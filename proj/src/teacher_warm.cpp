#include <algorithm>
#include <cmath>

#include "vora/data.hpp"
#include "vora/ops.hpp"
#include "vora/optim.hpp"
#include "vora/vision.hpp"

VORA_BEGIN_NAMESPACE

real warm_teacher(const ModelConfig& config, TeacherWeights& teacher, const WarmTeacherOptions& options) {
  const std::size_t classes = kNumColors * 3;
  Rng rng(derive_seed(options.seed, 0x3A7));
  Tensor head = rng.normal_tensor({classes, config.d_vit}, 0.02f);
  head.set_requires_grad(true);
  teacher.set_requires_grad(true);

  std::vector<NamedParam> params;
  teacher.for_each([&](const std::string& name, Tensor& t) {
    params.push_back({name, t, default_weight_decay(name, t, 0.01f)});
  });
  params.push_back({"teacher_head", head, 0.01f});
  AdamW opt(std::move(params), AdamWConfig{});

  const std::size_t side = std::max<std::size_t>(config.patch * 4, kMinImageSide);
  real accuracy = 0.0f;
  for (std::size_t step = 0; step < options.steps; ++step) {
    std::size_t correct = 0;
    std::vector<Tensor> losses;
    for (std::size_t i = 0; i < options.batch_size; ++i) {
      const SceneGraph scene = random_scene(rng, side, side, 1, 1);
      const Image image = render_scene(scene);
      const Tensor patches = patchify(image, config.patch);
      const PatchGrid grid = patch_grid(image, config.patch);
      const TeacherStates states = vit_forward(config, teacher, patches, grid);
      const Tensor pool = Tensor::full({1, grid.count()}, 1.0f / static_cast<real>(grid.count()));
      const Tensor logits = linear(matmul(pool, states.back()), head);
      const TokenId label = static_cast<TokenId>(scene.objects[0].color * 3 +
                                                 static_cast<std::size_t>(scene.objects[0].kind));
      losses.push_back(cross_entropy(logits, std::span<const TokenId>(&label, 1), {false}));
      std::size_t best = 0;
      for (std::size_t c = 1; c < classes; ++c) {
        if (logits.at(c) > logits.at(best)) best = c;
      }
      if (best == static_cast<std::size_t>(label)) ++correct;
    }
    Tensor loss = scale(sum(concat(losses, 0)), 1.0f / static_cast<real>(options.batch_size));
    loss.backward();
    opt.step(options.lr);
    opt.zero_grad();
    accuracy = static_cast<real>(correct) / static_cast<real>(options.batch_size);
  }
  teacher.set_requires_grad(false);
  return accuracy;
}

VORA_END_NAMESPACE
