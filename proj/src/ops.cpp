#include "vora/ops.hpp"

#include <Eigen/Core>
#include <atomic>
#include <cmath>
#include <string>

#include "vora/errors.hpp"

VORA_BEGIN_NAMESPACE

namespace {

using RowMat = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

using Impl = detail::TensorImpl;
using BackwardFn = std::function<void(const Impl&)>;

std::atomic<std::uint64_t> g_next_seq{0};

ConstMatMap as_mat(const std::vector<real>& v, std::size_t rows, std::size_t cols) {
  return ConstMatMap(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
MatMap as_mat(std::vector<real>& v, std::size_t rows, std::size_t cols) {
  return MatMap(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

[[maybe_unused]] bool all_finite(std::span<const real> v) {
  for (real x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

// Wraps forward output into a tensor and records a node when any input
// needs a gradient.
Tensor make_result(Shape shape, std::vector<real> data, std::vector<Tensor> inputs, BackwardFn fn) {
  Tensor out = Tensor::from(shape, std::move(data));
#ifndef NDEBUG
  if (!all_finite(out.data())) {
    bool inputs_finite = true;
    for (const auto& in : inputs) inputs_finite = inputs_finite && all_finite(in.data());
    if (inputs_finite) throw NumericError("non-finite output from finite inputs");
  }
#endif
  if (!grad_enabled()) return out;
  bool needs = false;
  for (const auto& in : inputs) needs = needs || in.requires_grad();
  if (!needs) return out;
  auto node = std::make_shared<detail::Node>();
  node->seq = g_next_seq.fetch_add(1);
  node->inputs.reserve(inputs.size());
  for (const auto& in : inputs) node->inputs.push_back(in.impl());
  node->backward = std::move(fn);
  auto impl = out.impl();
  impl->requires_grad = true;
  impl->node = std::move(node);
  return out;
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

// Gradient accumulator for input i, or nullptr if it does not need one.
std::vector<real>* grad_of(const std::shared_ptr<Impl>& in) {
  return in->requires_grad ? &in->grad_buffer() : nullptr;
}

// Trailing-vector view: [rows, width] where width is the last extent.
std::pair<std::size_t, std::size_t> rows_and_width(const Tensor& x) {
  const std::size_t width = x.shape().back();
  return {x.numel() / width, width};
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimensions disagree " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  std::vector<real> out(m * n);
  as_mat(out, m, n).noalias() = as_mat(a.impl()->data, m, k) * as_mat(b.impl()->data, k, n);
  auto ai = a.impl(), bi = b.impl();
  return make_result({m, n}, std::move(out), {a, b}, [ai, bi, m, k, n](const Impl& o) {
    auto dc = as_mat(o.grad, m, n);
    if (auto* ga = grad_of(ai)) as_mat(*ga, m, k).noalias() += dc * as_mat(bi->data, k, n).transpose();
    if (auto* gb = grad_of(bi)) as_mat(*gb, k, n).noalias() += as_mat(ai->data, m, k).transpose() * dc;
  });
}

Tensor linear(const Tensor& x, const Tensor& w) {
  require_rank(x, 2, "linear");
  require_rank(w, 2, "linear");
  const std::size_t m = x.dim(0), k = x.dim(1), n = w.dim(0);
  if (w.dim(1) != k) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + " does not match weight " +
                     shape_str(w.shape()));
  }
  std::vector<real> out(m * n);
  as_mat(out, m, n).noalias() = as_mat(x.impl()->data, m, k) * as_mat(w.impl()->data, n, k).transpose();
  auto xi = x.impl(), wi = w.impl();
  return make_result({m, n}, std::move(out), {x, w}, [xi, wi, m, k, n](const Impl& o) {
    auto dy = as_mat(o.grad, m, n);
    if (auto* gx = grad_of(xi)) as_mat(*gx, m, k).noalias() += dy * as_mat(wi->data, n, k);
    if (auto* gw = grad_of(wi)) as_mat(*gw, n, k).noalias() += dy.transpose() * as_mat(xi->data, m, k);
  });
}

Tensor transpose(const Tensor& x) {
  require_rank(x, 2, "transpose");
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<real> out(m * n);
  as_mat(out, n, m) = as_mat(x.impl()->data, m, n).transpose();
  auto xi = x.impl();
  return make_result({n, m}, std::move(out), {x}, [xi, m, n](const Impl& o) {
    if (auto* g = grad_of(xi)) as_mat(*g, m, n) += as_mat(o.grad, n, m).transpose();
  });
}

Tensor reshape(const Tensor& x, const Shape& shape) {
  if (numel_of(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  auto xi = x.impl();
  return make_result(shape, xi->data, {x}, [xi](const Impl& o) {
    if (auto* g = grad_of(xi)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) (*g)[i] += o.grad[i];
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<real> out(a.numel());
  const auto& ad = a.impl()->data;
  const auto& bd = b.impl()->data;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
  auto ai = a.impl(), bi = b.impl();
  return make_result(a.shape(), std::move(out), {a, b}, [ai, bi](const Impl& o) {
    for (const auto& in : {ai, bi}) {
      if (auto* g = grad_of(in)) {
        for (std::size_t i = 0; i < o.grad.size(); ++i) (*g)[i] += o.grad[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<real> out(a.numel());
  const auto& ad = a.impl()->data;
  const auto& bd = b.impl()->data;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] - bd[i];
  auto ai = a.impl(), bi = b.impl();
  return make_result(a.shape(), std::move(out), {a, b}, [ai, bi](const Impl& o) {
    if (auto* g = grad_of(ai)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) (*g)[i] += o.grad[i];
    }
    if (auto* g = grad_of(bi)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) (*g)[i] -= o.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<real> out(a.numel());
  const auto& ad = a.impl()->data;
  const auto& bd = b.impl()->data;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
  auto ai = a.impl(), bi = b.impl();
  return make_result(a.shape(), std::move(out), {a, b}, [ai, bi](const Impl& o) {
    if (auto* g = grad_of(ai)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) (*g)[i] += o.grad[i] * bi->data[i];
    }
    if (auto* g = grad_of(bi)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) (*g)[i] += o.grad[i] * ai->data[i];
    }
  });
}

Tensor scale(const Tensor& x, real factor) {
  std::vector<real> out(x.numel());
  const auto& xd = x.impl()->data;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] * factor;
  auto xi = x.impl();
  return make_result(x.shape(), std::move(out), {x}, [xi, factor](const Impl& o) {
    if (auto* g = grad_of(xi)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) (*g)[i] += o.grad[i] * factor;
    }
  });
}

Tensor add_scalar(const Tensor& x, real value) {
  std::vector<real> out(x.numel());
  const auto& xd = x.impl()->data;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] + value;
  auto xi = x.impl();
  return make_result(x.shape(), std::move(out), {x}, [xi](const Impl& o) {
    if (auto* g = grad_of(xi)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) (*g)[i] += o.grad[i];
    }
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_rank(x, 2, "add_bias");
  require_rank(bias, 1, "add_bias");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (bias.dim(0) != n) {
    throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " does not match " + shape_str(x.shape()));
  }
  std::vector<real> out(x.impl()->data);
  const auto& bd = bias.impl()->data;
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] += bd[c];
  }
  auto xi = x.impl(), bi = bias.impl();
  return make_result(x.shape(), std::move(out), {x, bias}, [xi, bi, m, n](const Impl& o) {
    if (auto* g = grad_of(xi)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) (*g)[i] += o.grad[i];
    }
    if (auto* g = grad_of(bi)) {
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < n; ++c) (*g)[c] += o.grad[r * n + c];
      }
    }
  });
}

namespace {
constexpr real kGeluC = 0.7978845608028654f;  // sqrt(2/pi)
constexpr real kGeluK = 0.044715f;
}  // namespace

Tensor gelu(const Tensor& x) {
  std::vector<real> out(x.numel());
  const auto& xd = x.impl()->data;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const real v = xd[i];
    out[i] = 0.5f * v * (1.0f + std::tanh(kGeluC * (v + kGeluK * v * v * v)));
  }
  auto xi = x.impl();
  return make_result(x.shape(), std::move(out), {x}, [xi](const Impl& o) {
    auto* g = grad_of(xi);
    if (!g) return;
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      const real v = xi->data[i];
      const real t = std::tanh(kGeluC * (v + kGeluK * v * v * v));
      const real d = 0.5f * (1.0f + t) + 0.5f * v * (1.0f - t * t) * kGeluC * (1.0f + 3.0f * kGeluK * v * v);
      (*g)[i] += o.grad[i] * d;
    }
  });
}

Tensor silu(const Tensor& x) {
  std::vector<real> out(x.numel());
  const auto& xd = x.impl()->data;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] / (1.0f + std::exp(-xd[i]));
  auto xi = x.impl();
  return make_result(x.shape(), std::move(out), {x}, [xi](const Impl& o) {
    auto* g = grad_of(xi);
    if (!g) return;
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      const real v = xi->data[i];
      const real s = 1.0f / (1.0f + std::exp(-v));
      (*g)[i] += o.grad[i] * s * (1.0f + v * (1.0f - s));
    }
  });
}

Tensor rms_norm(const Tensor& x, const Tensor& gain, real eps) {
  require_rank(gain, 1, "rms_norm");
  if (x.rank() == 0 || x.shape().back() != gain.dim(0)) {
    throw ShapeError("rms_norm: gain " + shape_str(gain.shape()) + " does not match " + shape_str(x.shape()));
  }
  if (eps < 0.0f) throw ShapeError("rms_norm: eps must be non-negative");
  const auto [rows, d] = rows_and_width(x);
  const auto& xd = x.impl()->data;
  const auto& gd = gain.impl()->data;
  std::vector<real> out(x.numel());
  std::vector<real> inv_rms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double ss = 0.0;
    for (std::size_t j = 0; j < d; ++j) ss += double(xd[r * d + j]) * xd[r * d + j];
    const double ms = ss / double(d) + eps;
    if (ms <= 0.0) throw NumericError("rms_norm: zero vector with eps == 0");
    inv_rms[r] = static_cast<real>(1.0 / std::sqrt(ms));
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = xd[r * d + j] * inv_rms[r] * gd[j];
  }
  auto xi = x.impl(), gi = gain.impl();
  return make_result(x.shape(), std::move(out), {x, gain}, [xi, gi, rows, d, inv_rms](const Impl& o) {
    auto* gx = grad_of(xi);
    auto* gg = grad_of(gi);
    for (std::size_t r = 0; r < rows; ++r) {
      const real* xr = xi->data.data() + r * d;
      const real* dy = o.grad.data() + r * d;
      const real inv = inv_rms[r];
      if (gg) {
        for (std::size_t j = 0; j < d; ++j) (*gg)[j] += dy[j] * xr[j] * inv;
      }
      if (gx) {
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) dot += double(dy[j]) * gi->data[j] * xr[j];
        const real coef = static_cast<real>(dot * double(inv) * inv * inv / double(d));
        for (std::size_t j = 0; j < d; ++j) (*gx)[r * d + j] += gi->data[j] * dy[j] * inv - xr[j] * coef;
      }
    }
  });
}

namespace {

Tensor softmax_impl(const Tensor& x, const real* mask) {
  require_rank(x, 2, "softmax_rows");
  const std::size_t m = x.dim(0), n = x.dim(1);
  const auto& xd = x.impl()->data;
  std::vector<real> out(m * n, 0.0f);
  for (std::size_t r = 0; r < m; ++r) {
    real mx = -std::numeric_limits<real>::infinity();
    bool any = false;
    for (std::size_t c = 0; c < n; ++c) {
      if (mask && mask[r * n + c] == kMasked) continue;
      mx = std::max(mx, xd[r * n + c]);
      any = true;
    }
    if (!any) throw NumericError("softmax_rows: row fully masked (row " + std::to_string(r) + ")");
    double total = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      if (mask && mask[r * n + c] == kMasked) continue;
      const real e = std::exp(xd[r * n + c] - mx);
      out[r * n + c] = e;
      total += e;
    }
    const real inv = static_cast<real>(1.0 / total);
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] *= inv;
  }
  auto xi = x.impl();
  Tensor result = make_result(x.shape(), std::move(out), {x}, {});
  if (!result.has_node()) return result;
  // The backward closure reads the output values through its argument.
  result.impl()->node->backward = [xi, m, n](const Impl& o) {
    auto* g = grad_of(xi);
    if (!g) return;
    for (std::size_t r = 0; r < m; ++r) {
      const real* y = o.data.data() + r * n;
      const real* dy = o.grad.data() + r * n;
      double dot = 0.0;
      for (std::size_t c = 0; c < n; ++c) dot += double(dy[c]) * y[c];
      const real fdot = static_cast<real>(dot);
      for (std::size_t c = 0; c < n; ++c) (*g)[r * n + c] += y[c] * (dy[c] - fdot);
    }
  };
  return result;
}

}  // namespace

Tensor softmax_rows(const Tensor& x, const Tensor& additive_mask) {
  require_same_shape(x, additive_mask, "softmax_rows");
  for (real v : additive_mask.data()) {
    if (v != 0.0f && v != kMasked) throw Error("softmax_rows: mask entries must be 0 or the masked sentinel");
  }
  return softmax_impl(x, additive_mask.impl()->data.data());
}

Tensor softmax_rows(const Tensor& x) { return softmax_impl(x, nullptr); }

Tensor cross_entropy(const Tensor& logits, std::span<const TokenId> targets, const std::vector<bool>& ignore) {
  require_rank(logits, 2, "cross_entropy");
  const std::size_t t = logits.dim(0), v = logits.dim(1);
  if (targets.size() != t || ignore.size() != t) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets / " +
                     std::to_string(ignore.size()) + " flags for logits " + shape_str(logits.shape()));
  }
  std::size_t count = 0;
  for (std::size_t i = 0; i < t; ++i) {
    if (ignore[i]) continue;
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= v) {
      throw ShapeError("cross_entropy: target " + std::to_string(targets[i]) + " outside vocabulary of " +
                       std::to_string(v));
    }
    ++count;
  }
  if (count == 0) throw Error("cross_entropy: every position is ignored");

  const auto& z = logits.impl()->data;
  std::vector<real> probs(t * v, 0.0f);
  double total = 0.0;
  for (std::size_t i = 0; i < t; ++i) {
    if (ignore[i]) continue;
    const real* row = z.data() + i * v;
    real mx = row[0];
    for (std::size_t c = 1; c < v; ++c) mx = std::max(mx, row[c]);
    double se = 0.0;
    for (std::size_t c = 0; c < v; ++c) se += std::exp(double(row[c]) - mx);
    const double lse = std::log(se) + mx;
    total += lse - row[targets[i]];
    for (std::size_t c = 0; c < v; ++c) probs[i * v + c] = static_cast<real>(std::exp(double(row[c]) - lse));
  }
  const real inv_count = 1.0f / static_cast<real>(count);
  auto li = logits.impl();
  std::vector<TokenId> tgt(targets.begin(), targets.end());
  return make_result({1}, {static_cast<real>(total / double(count))}, {logits},
                     [li, probs = std::move(probs), tgt = std::move(tgt), ignore, t, v, inv_count](const Impl& o) {
                       auto* g = grad_of(li);
                       if (!g) return;
                       const real up = o.grad[0] * inv_count;
                       for (std::size_t i = 0; i < t; ++i) {
                         if (ignore[i]) continue;
                         for (std::size_t c = 0; c < v; ++c) (*g)[i * v + c] += up * probs[i * v + c];
                         (*g)[i * v + tgt[i]] -= up;
                       }
                     });
}

Tensor embedding(const Tensor& table, std::span<const TokenId> ids) {
  require_rank(table, 2, "embedding");
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  if (ids.empty()) throw ShapeError("embedding: empty id list");
  std::vector<real> out(ids.size() * d);
  const auto& td = table.impl()->data;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw ShapeError("embedding: id " + std::to_string(ids[i]) + " outside table of " + std::to_string(vocab));
    }
    std::copy_n(td.begin() + static_cast<std::ptrdiff_t>(ids[i] * d), d, out.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  auto ti = table.impl();
  std::vector<TokenId> idv(ids.begin(), ids.end());
  return make_result({ids.size(), d}, std::move(out), {table}, [ti, idv = std::move(idv), d](const Impl& o) {
    auto* g = grad_of(ti);
    if (!g) return;
    for (std::size_t i = 0; i < idv.size(); ++i) {
      for (std::size_t j = 0; j < d; ++j) (*g)[idv[i] * d + j] += o.grad[i * d + j];
    }
  });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  if (axis > 1) throw ShapeError("concat: axis must be 0 or 1");
  const bool one_d = parts[0].rank() == 1;
  if (one_d && axis != 0) throw ShapeError("concat: 1-D inputs only concatenate on axis 0");
  const std::size_t rank = one_d ? 1 : 2;
  for (const auto& p : parts) require_rank(p, rank, "concat");

  if (axis == 0) {
    const std::size_t width = one_d ? 1 : parts[0].dim(1);
    std::size_t rows = 0;
    std::vector<real> out;
    for (const auto& p : parts) {
      if (!one_d && p.dim(1) != width) {
        throw ShapeError("concat: column mismatch " + shape_str(parts[0].shape()) + " vs " + shape_str(p.shape()));
      }
      rows += p.dim(0);
      out.insert(out.end(), p.data().begin(), p.data().end());
    }
    Shape shape = one_d ? Shape{rows} : Shape{rows, width};
    std::vector<std::shared_ptr<Impl>> impls;
    for (const auto& p : parts) impls.push_back(p.impl());
    return make_result(shape, std::move(out), {parts.begin(), parts.end()}, [impls](const Impl& o) {
      std::size_t offset = 0;
      for (const auto& in : impls) {
        const std::size_t n = in->data.size();
        if (auto* g = grad_of(in)) {
          for (std::size_t i = 0; i < n; ++i) (*g)[i] += o.grad[offset + i];
        }
        offset += n;
      }
    });
  }

  const std::size_t rows = parts[0].dim(0);
  std::size_t cols = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    if (p.dim(0) != rows) {
      throw ShapeError("concat: row mismatch " + shape_str(parts[0].shape()) + " vs " + shape_str(p.shape()));
    }
    widths.push_back(p.dim(1));
    cols += p.dim(1);
  }
  std::vector<real> out(rows * cols);
  std::size_t col0 = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& src = parts[k].impl()->data;
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(r * widths[k]), widths[k],
                  out.begin() + static_cast<std::ptrdiff_t>(r * cols + col0));
    }
    col0 += widths[k];
  }
  std::vector<std::shared_ptr<Impl>> impls;
  for (const auto& p : parts) impls.push_back(p.impl());
  return make_result({rows, cols}, std::move(out), {parts.begin(), parts.end()},
                     [impls, widths, rows, cols](const Impl& o) {
                       std::size_t c0 = 0;
                       for (std::size_t k = 0; k < impls.size(); ++k) {
                         if (auto* g = grad_of(impls[k])) {
                           for (std::size_t r = 0; r < rows; ++r) {
                             for (std::size_t c = 0; c < widths[k]; ++c) (*g)[r * widths[k] + c] += o.grad[r * cols + c0 + c];
                           }
                         }
                         c0 += widths[k];
                       }
                     });
}

Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count) {
  require_rank(x, 2, "slice_rows");
  const std::size_t rows = x.dim(0), width = x.dim(1);
  if (count == 0 || start + count > rows) {
    throw ShapeError("slice_rows: [" + std::to_string(start) + ", " + std::to_string(start + count) +
                     ") outside " + shape_str(x.shape()));
  }
  const auto& xd = x.impl()->data;
  std::vector<real> out(xd.begin() + static_cast<std::ptrdiff_t>(start * width),
                         xd.begin() + static_cast<std::ptrdiff_t>((start + count) * width));
  auto xi = x.impl();
  return make_result({count, width}, std::move(out), {x}, [xi, start, width](const Impl& o) {
    if (auto* g = grad_of(xi)) {
      for (std::size_t i = 0; i < o.grad.size(); ++i) (*g)[start * width + i] += o.grad[i];
    }
  });
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count) {
  require_rank(x, 2, "slice_cols");
  const std::size_t rows = x.dim(0), width = x.dim(1);
  if (count == 0 || start + count > width) {
    throw ShapeError("slice_cols: [" + std::to_string(start) + ", " + std::to_string(start + count) +
                     ") outside " + shape_str(x.shape()));
  }
  const auto& xd = x.impl()->data;
  std::vector<real> out(rows * count);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(xd.begin() + static_cast<std::ptrdiff_t>(r * width + start), count,
                out.begin() + static_cast<std::ptrdiff_t>(r * count));
  }
  auto xi = x.impl();
  return make_result({rows, count}, std::move(out), {x}, [xi, rows, width, start, count](const Impl& o) {
    if (auto* g = grad_of(xi)) {
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < count; ++c) (*g)[r * width + start + c] += o.grad[r * count + c];
      }
    }
  });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (real v : x.data()) total += v;
  auto xi = x.impl();
  return make_result({1}, {static_cast<real>(total)}, {x}, [xi](const Impl& o) {
    if (auto* g = grad_of(xi)) {
      for (real& gv : *g) gv += o.grad[0];
    }
  });
}

Tensor mean(const Tensor& x) {
  double total = 0.0;
  for (real v : x.data()) total += v;
  const real n = static_cast<real>(x.numel());
  auto xi = x.impl();
  return make_result({1}, {static_cast<real>(total / double(x.numel()))}, {x}, [xi, n](const Impl& o) {
    if (auto* g = grad_of(xi)) {
      const real up = o.grad[0] / n;
      for (real& gv : *g) gv += up;
    }
  });
}

Tensor rope(const Tensor& x, std::size_t n_heads, real base, std::size_t offset) {
  require_rank(x, 2, "rope");
  const std::size_t seq = x.dim(0), width = x.dim(1);
  if (n_heads == 0 || width % n_heads != 0 || (width / n_heads) % 2 != 0) {
    throw ShapeError("rope: width " + std::to_string(width) + " is not n_heads x even head size");
  }
  const std::size_t hd = width / n_heads, half = hd / 2;
  std::vector<real> cosv(seq * half), sinv(seq * half);
  for (std::size_t p = 0; p < seq; ++p) {
    for (std::size_t i = 0; i < half; ++i) {
      const double inv_freq = std::pow(double(base), -2.0 * double(i) / double(hd));
      const double angle = double(p + offset) * inv_freq;
      cosv[p * half + i] = static_cast<real>(std::cos(angle));
      sinv[p * half + i] = static_cast<real>(std::sin(angle));
    }
  }
  const auto& xd = x.impl()->data;
  std::vector<real> out(xd.size());
  for (std::size_t p = 0; p < seq; ++p) {
    for (std::size_t h = 0; h < n_heads; ++h) {
      const std::size_t b = p * width + h * hd;
      for (std::size_t i = 0; i < half; ++i) {
        const real c = cosv[p * half + i], s = sinv[p * half + i];
        const real x0 = xd[b + i], x1 = xd[b + i + half];
        out[b + i] = x0 * c - x1 * s;
        out[b + i + half] = x0 * s + x1 * c;
      }
    }
  }
  auto xi = x.impl();
  return make_result(x.shape(), std::move(out), {x},
                     [xi, seq, width, n_heads, hd, half, cosv, sinv](const Impl& o) {
                       auto* g = grad_of(xi);
                       if (!g) return;
                       for (std::size_t p = 0; p < seq; ++p) {
                         for (std::size_t h = 0; h < n_heads; ++h) {
                           const std::size_t b = p * width + h * hd;
                           for (std::size_t i = 0; i < half; ++i) {
                             const real c = cosv[p * half + i], s = sinv[p * half + i];
                             const real g0 = o.grad[b + i], g1 = o.grad[b + i + half];
                             (*g)[b + i] += g0 * c + g1 * s;
                             (*g)[b + i + half] += -g0 * s + g1 * c;
                           }
                         }
                       }
                     });
}

Tensor cosine_rows(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "cosine_rows");
  require_same_shape(a, b, "cosine_rows");
  const std::size_t rows = a.dim(0), d = a.dim(1);
  const auto& ad = a.impl()->data;
  const auto& bd = b.impl()->data;
  std::vector<real> out(rows), na(rows), nb(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double dot = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double x = ad[r * d + j], y = bd[r * d + j];
      dot += x * y;
      saa += x * x;
      sbb += y * y;
    }
    if (saa == 0.0 || sbb == 0.0) {
      throw NumericError("cosine undefined: zero-norm vector in row " + std::to_string(r));
    }
    na[r] = static_cast<real>(std::sqrt(saa));
    nb[r] = static_cast<real>(std::sqrt(sbb));
    out[r] = static_cast<real>(dot / (std::sqrt(saa) * std::sqrt(sbb)));
  }
  auto ai = a.impl(), bi = b.impl();
  std::vector<real> cosines = out;
  return make_result({rows}, std::move(out), {a, b}, [ai, bi, rows, d, na, nb, cosines](const Impl& o) {
    auto* ga = grad_of(ai);
    auto* gb = grad_of(bi);
    for (std::size_t r = 0; r < rows; ++r) {
      const real up = o.grad[r], c = cosines[r];
      const real inv_ab = 1.0f / (na[r] * nb[r]);
      for (std::size_t j = 0; j < d; ++j) {
        const real x = ai->data[r * d + j], y = bi->data[r * d + j];
        if (ga) (*ga)[r * d + j] += up * (y * inv_ab - c * x / (na[r] * na[r]));
        if (gb) (*gb)[r * d + j] += up * (x * inv_ab - c * y / (nb[r] * nb[r]));
      }
    }
  });
}

VORA_END_NAMESPACE
