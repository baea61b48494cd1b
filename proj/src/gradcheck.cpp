#include "vora/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vora/distill.hpp"
#include "vora/errors.hpp"
#include "vora/lora.hpp"
#include "vora/mask.hpp"
#include "vora/ops.hpp"
#include "vora/rng.hpp"
#include "vora/vision.hpp"
#include "vora/vocab.hpp"
#include "vora/vora_model.hpp"

VORA_BEGIN_NAMESPACE

namespace {

double numeric_partial(const std::function<Tensor()>& loss, Tensor& input, std::size_t i, double h) {
  auto data = input.mutable_data();
  const real x0 = data[i];
  auto central = [&](double step) {
    data[i] = static_cast<real>(x0 + step);
    const double up_step = double(data[i]) - double(x0);
    const double up = loss().item();
    data[i] = static_cast<real>(x0 - up_step);
    const double down = loss().item();
    data[i] = x0;
    return (up - down) / (2.0 * up_step);
  };
  NoGradGuard guard;
  return central(h);
}

}  // namespace

GradcheckResult check_gradients(const std::string& name, const std::function<Tensor()>& loss,
                                std::vector<Tensor> inputs, const GradcheckOptions& options) {
  GradcheckResult result;
  result.name = name;
  result.trials = 1;
  for (Tensor& t : inputs) {
    t.clear_grad();
    t.set_requires_grad(true);
  }
  Tensor out = loss();
  if (out.numel() != 1) throw ShapeError("gradcheck '" + name + "': loss is not a scalar");
  out.backward();

  Rng rng(derive_seed(options.seed, std::hash<std::string>{}(name)));
  bool ok = true;
  for (Tensor& t : inputs) {
    std::vector<real> analytic = t.has_grad() ? std::vector<real>(t.grad().begin(), t.grad().end())
                                               : std::vector<real>(t.numel(), real(0));
    std::vector<std::size_t> coords(t.numel());
    std::iota(coords.begin(), coords.end(), 0);
    if (coords.size() > options.max_coords) {
      for (std::size_t i = 0; i < options.max_coords; ++i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i),
                                                                static_cast<std::int64_t>(coords.size() - 1)));
        std::swap(coords[i], coords[j]);
      }
      coords.resize(options.max_coords);
    }
    for (std::size_t i : coords) {
      const double a = analytic[i];
      const double n = numeric_partial(loss, t, i, options.step);
      const double err = std::abs(a - n) / std::max(options.floor, std::abs(n));
      result.max_error = std::max(result.max_error, err);
      if (!(err <= options.tolerance)) ok = false;
      ++result.coords;
    }
    t.clear_grad();
  }
  result.passed = ok;
  return result;
}

namespace {

void accumulate(std::vector<GradcheckResult>& results, GradcheckResult r) {
  for (GradcheckResult& existing : results) {
    if (existing.name == r.name) {
      existing.trials += r.trials;
      existing.coords += r.coords;
      existing.max_error = std::max(existing.max_error, r.max_error);
      existing.passed = existing.passed && r.passed;
      return;
    }
  }
  results.push_back(std::move(r));
}

// One draw of every op with random extents in [1, 8].
void op_trial(Rng& rng, const GradcheckOptions& options, std::vector<GradcheckResult>& results) {
  auto randn = [&](Shape s, real std = 1) { return rng.normal_tensor(s, std); };
  auto extent = [&] { return static_cast<std::size_t>(rng.uniform_int(1, 8)); };
  auto check = [&](const std::string& name, std::vector<Tensor> inputs, const std::function<Tensor()>& body) {
    // Random output weights so every element carries a distinct gradient.
    const Tensor probe = [&] {
      NoGradGuard guard;
      return body();
    }();
    const Tensor w = randn(probe.shape());
    accumulate(results, check_gradients(name, [&] { return sum(mul(body(), w)); }, std::move(inputs), options));
  };

  const std::size_t m = extent(), k = extent(), n = extent();
  Tensor a = randn({m, k}), b = randn({k, n}), c = randn({m, k}), wt = randn({n, k}), bias = randn({k});
  check("matmul", {a, b}, [&] { return matmul(a, b); });
  check("linear", {a, wt}, [&] { return linear(a, wt); });
  check("transpose", {a}, [&] { return transpose(a); });
  check("reshape", {a}, [&] { return reshape(a, {k, m}); });
  check("add", {a, c}, [&] { return add(a, c); });
  check("sub", {a, c}, [&] { return sub(a, c); });
  check("mul", {a, c}, [&] { return mul(a, c); });
  check("scale", {a}, [&] { return scale(a, real(-1.7)); });
  check("add_scalar", {a}, [&] { return add_scalar(a, real(0.3)); });
  check("add_bias", {a, bias}, [&] { return add_bias(a, bias); });
  check("gelu", {a}, [&] { return gelu(a); });
  check("silu", {a}, [&] { return silu(a); });
  // Within ~sqrt(eps) of the origin a width-1 row is a smoothed sign
  // function, far narrower than the difference step; keep magnitudes away.
  Tensor x = randn({m, k}), gain = randn({k});
  for (real& v : x.mutable_data()) v = (v < 0 ? real(-1) : real(1)) * real(0.5 + rng.uniform());
  check("rms_norm", {x, gain}, [&] { return rms_norm(x, gain, real(1e-6)); });

  const std::size_t len = extent();
  const std::size_t vision = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(len - 1)));
  const SequenceLayout layout{0, vision, vision, len, vision};
  const Tensor mask = build_mask(layout, len, MaskMode::hybrid);
  Tensor scores = randn({len, len});
  check("softmax_rows_masked", {scores}, [&] { return softmax_rows(scores, mask); });
  check("softmax_rows", {scores}, [&] { return softmax_rows(scores); });

  const std::size_t vocab = extent();
  Tensor logits = randn({m, vocab});
  std::vector<TokenId> targets(m);
  std::vector<bool> ignore(m);
  for (std::size_t i = 0; i < m; ++i) {
    targets[i] = static_cast<TokenId>(rng.uniform_int(0, static_cast<std::int64_t>(vocab - 1)));
    ignore[i] = i > 0 && rng.uniform() < 0.3;
  }
  check("cross_entropy", {logits}, [&] { return cross_entropy(logits, targets, ignore); });
  Tensor table = randn({vocab, k});
  std::vector<TokenId> ids(n);
  for (auto& id : ids) id = static_cast<TokenId>(rng.uniform_int(0, static_cast<std::int64_t>(vocab - 1)));
  check("embedding", {table}, [&] { return embedding(table, ids); });

  Tensor d = randn({n, k}), e = randn({m, n});
  check("concat_rows", {a, d}, [&] {
    const Tensor parts[] = {a, d};
    return concat(parts, 0);
  });
  check("concat_cols", {a, e}, [&] {
    const Tensor parts[] = {a, e};
    return concat(parts, 1);
  });
  const std::size_t r0 = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(m - 1)));
  const std::size_t c0 = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(k - 1)));
  check("slice_rows", {a}, [&] { return slice_rows(a, r0, m - r0); });
  check("slice_cols", {a}, [&] { return slice_cols(a, c0, k - c0); });
  check("sum", {a}, [&] { return sum(a); });
  check("mean", {a}, [&] { return mean(a); });
  const std::size_t heads = static_cast<std::size_t>(rng.uniform_int(1, 2));
  Tensor qk = randn({m, heads * 2 * static_cast<std::size_t>(rng.uniform_int(1, 2))});
  const auto offset = static_cast<std::size_t>(rng.uniform_int(0, 5));
  check("rope", {qk}, [&] { return rope(qk, heads, real(10000), offset); });
  check("cosine_rows", {a, c}, [&] { return cosine_rows(a, c); });

  const std::size_t rank = static_cast<std::size_t>(rng.uniform_int(1, 4));
  LoraAdapter adapter{randn({rank, k}, real(0.5)), randn({n, rank}, real(0.5)), rank, real(2), {}, false};
  check("lora_forward", {a, wt, adapter.a, adapter.b}, [&] { return lora_forward(a, wt, adapter); });
}

// Nano model at a generic point (unit-scale weights, non-zero adapters).
void model_trial(std::uint64_t seed, const GradcheckOptions& options, std::vector<GradcheckResult>& results) {
  const ModelConfig nano = ModelConfig::nano();
  Rng rng(seed);
  VoraModel model = VoraModel::init(nano, derive_seed(seed, 1));
  model.for_each([&](const std::string&, Tensor& t) {
    auto d = t.mutable_data();
    if (t.rank() == 1) {
      for (real& v : d) v = real(1) + real(0.2) * static_cast<real>(rng.normal());
    } else {
      const real std = real(1) / std::sqrt(static_cast<real>(t.dim(1)));
      for (real& v : d) v = std * static_cast<real>(rng.normal());
    }
  });
  Rng teacher_rng(derive_seed(seed, 2));
  const TeacherWeights teacher = TeacherWeights::init(nano, teacher_rng);

  const PatchGrid grid{2, 3};
  Image image{grid.rows, grid.cols, {}};
  for (std::size_t i = 0; i < grid.count() * Image::kChannels; ++i) {
    image.pixels.push_back(static_cast<float>(rng.uniform()));
  }
  PackedSample sample;
  sample.sample.modality = Modality::image_caption;
  sample.sample.image = image;
  sample.grid = grid;
  sample.tokens.assign(grid.count(), Vocab::kImg);
  sample.tokens.push_back(Vocab::kBos);
  for (int i = 0; i < 5; ++i) sample.tokens.push_back(static_cast<TokenId>(rng.uniform_int(4, 7)));
  sample.tokens.push_back(Vocab::kEos);
  sample.layout = SequenceLayout{0, grid.count(), grid.count(), sample.tokens.size(), grid.count() + 3};
  const TeacherStates targets = teacher_forward(nano, teacher, image);

  auto objective = [&] {
    const LlmOutput out = model.forward(sample, MaskMode::hybrid);
    const DistillResult d =
        distill_loss(out.taps, targets, model.aux_heads, DistillMode::block_wise, sample.layout, nano.norm_eps);
    return total_loss(d.loss, lm_loss(out.logits, sample.layout, sample.tokens));
  };
  std::vector<Tensor> trainable, base;
  model.for_each([&](const std::string& name, Tensor& t) { (name.starts_with("llm.") ? base : trainable).push_back(t); });
  accumulate(results, check_gradients("embed_vision", [&] {
    const Tensor w = Tensor::full({grid.count(), nano.d_model}, real(0.1));
    return sum(mul(embed_vision(model.vision, patchify(image, nano.patch), grid), w));
  }, {model.vision.fc1_w, model.vision.fc1_b, model.vision.fc2_w, model.vision.fc2_b}, options));
  Tensor h_llm = rng.normal_tensor({grid.count(), nano.d_model}, 1);
  accumulate(results, check_gradients("block_distill_loss", [&] {
    return block_distill_loss(h_llm, targets[0], model.aux_heads[0]);
  }, {h_llm, model.aux_heads[0].norm_gain, model.aux_heads[0].proj}, options));
  accumulate(results, check_gradients("pretrain_objective", objective, trainable, options));
  accumulate(results, check_gradients("pretrain_objective_base_llm", objective, base, options));
}

}  // namespace

std::vector<GradcheckResult> run_gradcheck(const GradcheckOptions& options) {
  std::vector<GradcheckResult> results;
  Rng rng(derive_seed(options.seed, 0x6C));
  for (std::size_t t = 0; t < options.op_trials; ++t) op_trial(rng, options, results);
  for (std::size_t t = 0; t < options.model_trials; ++t) {
    model_trial(derive_seed(options.seed, 0x99 + t), options, results);
  }
  return results;
}

VORA_END_NAMESPACE
