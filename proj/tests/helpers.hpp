#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "vora/ops.hpp"
#include "vora/rng.hpp"
#include "vora/tensor.hpp"

namespace vora::test {

inline Tensor random_tensor(Rng& rng, const Shape& shape, real stddev = 1.0f) {
  return rng.normal_tensor(shape, stddev);
}

inline double max_abs_diff(std::span<const real> a, std::span<const real> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return a.size() == b.size() ? m : INFINITY;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) { return max_abs_diff(a.data(), b.data()); }

inline bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(real)) == 0;
}

inline std::vector<double> to_double(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace vora::test
