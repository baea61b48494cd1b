#pragma once

#include "vora/real.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vora/tensor.hpp"

namespace vora {

struct GradcheckOptions {
  double tolerance = 1e-3;
  /// Error is |analytic - numeric| / max(floor, |numeric|). A floor of 1
  /// makes small gradients absolute; lower floors make the check relative.
  double floor = 1.0;
  double step = 1e-3;  // central-difference half width
  std::size_t op_trials = 50;  // random input draws per op
  std::size_t model_trials = 3;  // random nano models for the full objective
  std::size_t max_coords = 48;  // per input tensor; larger tensors are sampled
  std::uint64_t seed = 0;
};

struct GradcheckResult {
  std::string name;
  std::size_t trials = 0;
  std::size_t coords = 0;
  double max_error = 0.0;
  bool passed = false;
};

}  // namespace vora

VORA_BEGIN_NAMESPACE

/// Compares backward() of `loss` against central differences for each
/// input. `loss` must rebuild the graph on every call.
GradcheckResult check_gradients(const std::string& name, const std::function<Tensor()>& loss,
                                std::vector<Tensor> inputs, const GradcheckOptions& options);

/// Every differentiable op, the LoRA and vision paths, the distillation
/// and LM losses, and the full pre-training objective on the nano model.
std::vector<GradcheckResult> run_gradcheck(const GradcheckOptions& options = {});

VORA_END_NAMESPACE

namespace vora::f64 {
/// The same suite built in double precision, where a relative floor far
/// below 1 is resolvable.
std::vector<GradcheckResult> run_gradcheck(const GradcheckOptions& options);
}  // namespace vora::f64
