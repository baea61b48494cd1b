#include "vora/optim.hpp"

#include <cmath>

#include "vora/errors.hpp"

VORA_BEGIN_NAMESPACE

real default_weight_decay(const std::string& name, const Tensor& t, real decay) {
  if (t.rank() == 1) return 0.0f;
  if (name.find("tok_embed") != std::string::npos) return 0.0f;
  return decay;
}

AdamW::AdamW(std::vector<NamedParam> params, AdamWConfig config) : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    if (!moments_.emplace(p.name, Moments{std::vector<real>(p.tensor.numel(), 0.0f),
                                          std::vector<real>(p.tensor.numel(), 0.0f)})
             .second) {
      throw StateError("parameter '" + p.name + "' registered twice with the optimizer");
    }
  }
}

void AdamW::step(real lr) {
  for (const auto& p : params_) {
    if (!p.tensor.has_grad()) throw StateError("no gradient for trainable tensor '" + p.name + "'");
  }
  ++steps_;
  const double bc1 = 1.0 - std::pow(double(config_.beta1), double(steps_));
  const double bc2 = 1.0 - std::pow(double(config_.beta2), double(steps_));
  for (auto& p : params_) {
    Moments& mo = moments_.at(p.name);
    auto data = p.tensor.mutable_data();
    auto grad = p.tensor.grad();
    const real decay = 1.0f - lr * p.weight_decay;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const real g = grad[i];
      mo.m[i] = config_.beta1 * mo.m[i] + (1.0f - config_.beta1) * g;
      mo.v[i] = config_.beta2 * mo.v[i] + (1.0f - config_.beta2) * g * g;
      const double m_hat = mo.m[i] / bc1;
      const double v_hat = mo.v[i] / bc2;
      const real update = static_cast<real>(m_hat / (std::sqrt(v_hat) + config_.eps));
      data[i] = data[i] * decay - lr * update;
    }
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.tensor.clear_grad();
}

VORA_END_NAMESPACE
