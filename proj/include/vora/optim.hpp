#pragma once

#include "vora/real.hpp"

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "vora/tensor.hpp"

VORA_BEGIN_NAMESPACE

struct AdamWConfig {
  real beta1 = 0.9f;
  real beta2 = 0.999f;
  real eps = 1e-8f;
  real weight_decay = 0.01f;
};

struct NamedParam {
  std::string name;
  Tensor tensor;
  real weight_decay = 0.0f;
};

/// Weight decay group: none for vectors (norm gains, biases) and token
/// embeddings, `decay` for everything else.
real default_weight_decay(const std::string& name, const Tensor& t, real decay);

/// AdamW with decoupled weight decay and bias correction. Moments are
/// allocated for exactly the parameters given at construction.
class AdamW {
 public:
  AdamW(std::vector<NamedParam> params, AdamWConfig config);

  /// One update at learning rate `lr`. Throws if a parameter has no grad.
  /// Does not clear gradients.
  void step(real lr);
  void zero_grad();

  std::size_t step_count() const { return steps_; }
  const std::vector<NamedParam>& params() const { return params_; }
  bool has_moments(const std::string& name) const { return moments_.contains(name); }
  const std::vector<real>& first_moment(const std::string& name) const { return moments_.at(name).m; }
  const std::vector<real>& second_moment(const std::string& name) const { return moments_.at(name).v; }

 private:
  struct Moments {
    std::vector<real> m, v;
  };
  std::vector<NamedParam> params_;
  AdamWConfig config_;
  std::map<std::string, Moments> moments_;
  std::size_t steps_ = 0;
};

VORA_END_NAMESPACE
