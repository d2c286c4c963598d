// Copyright 2026 The kwsnas Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "kwsnas/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "kwsnas/error.hpp"

namespace kwsnas {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << " x ";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), Real{0}, requires_grad);
}

Tensor Tensor::full(Shape shape, Real value, bool requires_grad) {
  auto impl = std::make_shared<Impl>();
  impl->values.assign(shape_numel(shape), value);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from_values(Shape shape, std::vector<Real> values,
                           bool requires_grad) {
  if (values.size() != shape_numel(shape)) {
    throw ShapeError("tensor of shape " + shape_to_string(shape) + " needs " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  auto impl = std::make_shared<Impl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(Real value, bool requires_grad) {
  return full({1}, value, requires_grad);
}

Tensor::Impl& Tensor::impl() const {
  if (!impl_) throw Error("use of an undefined tensor");
  return *impl_;
}

const Shape& Tensor::shape() const { return impl().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " +
                     shape_to_string(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return impl().values.size(); }

std::span<Real> Tensor::values() const { return impl().values; }

Real Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_to_string(shape()));
  }
  return impl().values[0];
}

bool Tensor::requires_grad() const { return impl().requires_grad; }
void Tensor::set_requires_grad(bool on) const { impl().requires_grad = on; }

bool Tensor::has_grad() const { return !impl().grad.empty(); }

std::span<Real> Tensor::grad() const {
  auto& i = impl();
  if (i.grad.empty()) i.grad.assign(i.values.size(), Real{0});
  return i.grad;
}

void Tensor::zero_grad() const {
  auto& i = impl();
  std::fill(i.grad.begin(), i.grad.end(), Real{0});
}

Tensor Tensor::clone() const {
  return from_values(shape(), impl().values, false);
}

void Tensor::copy_values_from(const Tensor& other) const {
  if (other.shape() != shape()) {
    throw ShapeError("copy from " + shape_to_string(other.shape()) + " into " +
                     shape_to_string(shape()));
  }
  impl().values = other.impl().values;
}

// ---------------------------------------------------------------------------
// Tape

bool Tape::needs_grad(std::initializer_list<const Tensor*> parents) const {
  if (!recording_) return false;
  return std::any_of(parents.begin(), parents.end(), [](const Tensor* t) {
    return t->defined() && t->requires_grad();
  });
}

void Tape::record(Tensor output, std::vector<Tensor> parents,
                  std::function<void()> backward) {
  if (consumed_) throw Error("recording on a tape that was already run backward");
  output.set_requires_grad(true);
  nodes_.push_back({std::move(output), std::move(parents), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) throw Error("backward called twice on the same tape");
  if (loss.numel() != 1) {
    throw ShapeError("backward needs a scalar loss, got " +
                     shape_to_string(loss.shape()));
  }
  const bool on_tape =
      std::any_of(nodes_.begin(), nodes_.end(),
                  [&](const Node& n) { return n.output.same_as(loss); });
  if (!on_tape) throw Error("backward on a loss that was not recorded on this tape");
  consumed_ = true;

  Tensor seed = loss;
  seed.grad()[0] += Real{1};
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (!it->output.has_grad()) continue;
    it->backward();
  }
}

// ---------------------------------------------------------------------------
// Ops

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op,
                  const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " +
                     std::to_string(rank) + ", got " +
                     shape_to_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
}

bool wants_grad(const Tensor& t) { return t.defined() && t.requires_grad(); }

}  // namespace

namespace {

// Row-major C = op(A) * op(B) + beta * C, with beta either 0 or 1.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const Real* a, std::size_t lda, const Real* b, std::size_t ldb, Real beta, Real* c,
          std::size_t ldc) {
  using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using CMap = Eigen::Map<const Mat, 0, Eigen::OuterStride<>>;
  using Map = Eigen::Map<Mat, 0, Eigen::OuterStride<>>;
  const auto ei = [](std::size_t v) { return static_cast<Eigen::Index>(v); };
  const CMap am(a, ei(trans_a ? k : m), ei(trans_a ? m : k), Eigen::OuterStride<>(ei(lda)));
  const CMap bm(b, ei(trans_b ? n : k), ei(trans_b ? k : n), Eigen::OuterStride<>(ei(ldb)));
  Map cm(c, ei(m), ei(n), Eigen::OuterStride<>(ei(ldc)));
  if (beta == Real{0}) cm.setZero();
  if (trans_a && trans_b) cm.noalias() += am.transpose() * bm.transpose();
  else if (trans_a) cm.noalias() += am.transpose() * bm;
  else if (trans_b) cm.noalias() += am * bm.transpose();
  else cm.noalias() += am * bm;
}

}  // namespace

Tensor conv1d(Tape& tape, const Tensor& input, const Tensor& weight,
              std::size_t stride) {
  const bool batched = input.rank() == 3;
  if (!batched && input.rank() != 2) {
    throw ShapeError("conv1d: input must be [C_in x T] or [N x C_in x T], got " +
                     shape_to_string(input.shape()));
  }
  require_rank(weight, 3, "conv1d", "weight");
  if (stride == 0) throw ShapeError("conv1d: stride must be positive");
  const std::size_t n_batch = batched ? input.dim(0) : 1;
  const std::size_t c_in = input.dim(batched ? 1 : 0);
  const std::size_t t_in = input.dim(batched ? 2 : 1);
  const std::size_t c_out = weight.dim(0);
  const std::size_t k = weight.dim(2);
  if (weight.dim(1) != c_in) {
    throw ShapeError("conv1d: weight expects C_in=" +
                     std::to_string(weight.dim(1)) + " but input has C_in=" +
                     std::to_string(c_in));
  }
  if (k % 2 == 0) {
    throw ShapeError("conv1d: kernel size K=" + std::to_string(k) +
                     " must be odd");
  }
  if (t_in == 0) throw ShapeError("conv1d: input has T=0");
  const std::size_t t_out = (t_in + stride - 1) / stride;
  const std::size_t rows = c_in * k;

  // The batch is processed in chunks of `nb` clips. Within a chunk,
  // col[r * M + j * T' + t] with r = ci * K + kk and M = nb * T' holds
  // x[n0 + j, ci, t * stride + kk - K/2] (zero outside the input), so every
  // product with the [C_out x C_in*K] weight matrix runs along M contiguous
  // elements while the chunk stays cache resident.
  const std::size_t chunk = std::max<std::size_t>(1, 2048 / t_out);
  auto im2col = [=](const Real* x, std::size_t n0, std::size_t nb, Real* col) {
    const auto pad = static_cast<std::ptrdiff_t>(k / 2);
    const std::size_t m = nb * t_out;
    for (std::size_t ci = 0; ci < c_in; ++ci) {
      for (std::size_t kk = 0; kk < k; ++kk) {
        Real* crow = col + (ci * k + kk) * m;
        for (std::size_t j = 0; j < nb; ++j) {
          const Real* xrow = x + ((n0 + j) * c_in + ci) * t_in;
          Real* c = crow + j * t_out;
          for (std::size_t t = 0; t < t_out; ++t) {
            const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * stride + kk) - pad;
            c[t] = (src >= 0 && src < static_cast<std::ptrdiff_t>(t_in)) ? xrow[src] : Real{0};
          }
        }
      }
    }
  };

  Shape out_shape = batched ? Shape{n_batch, c_out, t_out} : Shape{c_out, t_out};
  Tensor out = Tensor::zeros(out_shape);
  {
    std::vector<Real> col(rows * chunk * t_out), acc(c_out * chunk * t_out);
    const Real* x = input.values().data();
    const Real* w = weight.values().data();
    Real* y = out.values().data();
    for (std::size_t n0 = 0; n0 < n_batch; n0 += chunk) {
      const std::size_t nb = std::min(chunk, n_batch - n0);
      const std::size_t m = nb * t_out;
      im2col(x, n0, nb, col.data());
      gemm(false, false, c_out, m, rows, w, rows, col.data(), m, Real{0}, acc.data(), m);
      for (std::size_t j = 0; j < nb; ++j) {
        for (std::size_t co = 0; co < c_out; ++co) {
          std::copy_n(acc.data() + co * m + j * t_out, t_out, y + ((n0 + j) * c_out + co) * t_out);
        }
      }
    }
  }
  if (!tape.needs_grad({&input, &weight})) return out;

  tape.record(out, {input, weight}, [=]() mutable {
    const Real* gy = out.grad().data();
    const Real* x = input.values().data();
    const Real* w = weight.values().data();
    const bool gx_on = wants_grad(input);
    const bool gw_on = wants_grad(weight);
    Real* gx = gx_on ? input.grad().data() : nullptr;
    Real* gw = gw_on ? weight.grad().data() : nullptr;
    const auto pad = static_cast<std::ptrdiff_t>(k / 2);
    std::vector<Real> gyt(c_out * chunk * t_out), col(rows * chunk * t_out);
    for (std::size_t n0 = 0; n0 < n_batch; n0 += chunk) {
      const std::size_t nb = std::min(chunk, n_batch - n0);
      const std::size_t m = nb * t_out;
      // gyt[co * M + j * T' + t] = gy[n0 + j, co, t]
      for (std::size_t j = 0; j < nb; ++j) {
        for (std::size_t co = 0; co < c_out; ++co) {
          std::copy_n(gy + ((n0 + j) * c_out + co) * t_out, t_out, gyt.data() + co * m + j * t_out);
        }
      }
      if (gw_on) {
        im2col(x, n0, nb, col.data());
        gemm(false, true, c_out, rows, m, gyt.data(), m, col.data(), m, Real{1}, gw, rows);
      }
      if (gx_on) {
        // col is reused for d(col) = W^T gy
        gemm(true, false, rows, m, c_out, w, rows, gyt.data(), m, Real{0}, col.data(), m);
        for (std::size_t ci = 0; ci < c_in; ++ci) {
          for (std::size_t kk = 0; kk < k; ++kk) {
            const Real* grow = col.data() + (ci * k + kk) * m;
            for (std::size_t j = 0; j < nb; ++j) {
              Real* gxrow = gx + ((n0 + j) * c_in + ci) * t_in;
              const Real* gr = grow + j * t_out;
              for (std::size_t t = 0; t < t_out; ++t) {
                const std::ptrdiff_t dst = static_cast<std::ptrdiff_t>(t * stride + kk) - pad;
                if (dst >= 0 && dst < static_cast<std::ptrdiff_t>(t_in)) gxrow[dst] += gr[t];
              }
            }
          }
        }
      }
    }
  });
  return out;
}

Tensor batchnorm1d(Tape& tape, const Tensor& input, const Tensor& gamma,
                   const Tensor& beta, BatchNormMode mode, Tensor& running_mean,
                   Tensor& running_var, Real momentum, Real eps) {
  require_rank(input, 3, "batchnorm1d", "input");
  const std::size_t n_batch = input.dim(0), c = input.dim(1), t = input.dim(2);
  for (const Tensor* p : std::initializer_list<const Tensor*>{&gamma, &beta, &running_mean, &running_var}) {
    if (p->shape() != Shape{c}) {
      throw ShapeError("batchnorm1d: per-channel tensors must be [" +
                       std::to_string(c) + "], got " +
                       shape_to_string(p->shape()));
    }
  }
  if (mode == BatchNormMode::kTrain && n_batch * t == 0) {
    throw ShapeError("batchnorm1d: empty batch in train mode");
  }
  const std::size_t m = n_batch * t;
  std::vector<Real> mean(c), inv_std(c);
  auto x = input.values();
  if (mode == BatchNormMode::kTrain) {
    auto rm = running_mean.values();
    auto rv = running_var.values();
    for (std::size_t ch = 0; ch < c; ++ch) {
      Real s = 0;
      for (std::size_t n = 0; n < n_batch; ++n) {
        const Real* row = &x[(n * c + ch) * t];
        for (std::size_t i = 0; i < t; ++i) s += row[i];
      }
      const Real mu = s / static_cast<Real>(m);
      Real ss = 0;
      for (std::size_t n = 0; n < n_batch; ++n) {
        const Real* row = &x[(n * c + ch) * t];
        for (std::size_t i = 0; i < t; ++i) ss += (row[i] - mu) * (row[i] - mu);
      }
      const Real var = ss / static_cast<Real>(m);
      mean[ch] = mu;
      inv_std[ch] = Real{1} / std::sqrt(var + eps);
      const Real unbiased = m > 1 ? ss / static_cast<Real>(m - 1) : var;
      rm[ch] = (1 - momentum) * rm[ch] + momentum * mu;
      rv[ch] = (1 - momentum) * rv[ch] + momentum * unbiased;
    }
  } else {
    auto rm = running_mean.values();
    auto rv = running_var.values();
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = rm[ch];
      inv_std[ch] = Real{1} / std::sqrt(rv[ch] + eps);
    }
  }

  Tensor out = Tensor::zeros(input.shape());
  Tensor xhat = Tensor::zeros(input.shape());
  {
    auto y = out.values();
    auto xh = xhat.values();
    auto g = gamma.values();
    auto b = beta.values();
    for (std::size_t n = 0; n < n_batch; ++n) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t base = (n * c + ch) * t;
        for (std::size_t i = 0; i < t; ++i) {
          const Real h = (x[base + i] - mean[ch]) * inv_std[ch];
          xh[base + i] = h;
          y[base + i] = g[ch] * h + b[ch];
        }
      }
    }
  }
  if (!tape.needs_grad({&input, &gamma, &beta})) return out;

  const bool train = mode == BatchNormMode::kTrain;
  tape.record(out, {input, gamma, beta}, [=]() mutable {
    auto gy = std::as_const(out).grad();
    auto xh = std::as_const(xhat).values();
    auto g = std::as_const(gamma).values();
    std::vector<Real> sum_gy(c, 0), sum_gy_xh(c, 0);
    for (std::size_t n = 0; n < n_batch; ++n) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t base = (n * c + ch) * t;
        for (std::size_t i = 0; i < t; ++i) {
          sum_gy[ch] += gy[base + i];
          sum_gy_xh[ch] += gy[base + i] * xh[base + i];
        }
      }
    }
    if (wants_grad(gamma)) {
      auto gg = gamma.grad();
      for (std::size_t ch = 0; ch < c; ++ch) gg[ch] += sum_gy_xh[ch];
    }
    if (wants_grad(beta)) {
      auto gb = beta.grad();
      for (std::size_t ch = 0; ch < c; ++ch) gb[ch] += sum_gy[ch];
    }
    if (wants_grad(input)) {
      auto gx = input.grad();
      const Real inv_m = Real{1} / static_cast<Real>(m);
      for (std::size_t n = 0; n < n_batch; ++n) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          const std::size_t base = (n * c + ch) * t;
          const Real k = g[ch] * inv_std[ch];
          for (std::size_t i = 0; i < t; ++i) {
            if (train) {
              gx[base + i] += k * (gy[base + i] - inv_m * sum_gy[ch] -
                                   xh[base + i] * inv_m * sum_gy_xh[ch]);
            } else {
              gx[base + i] += k * gy[base + i];
            }
          }
        }
      }
    }
  });
  return out;
}

namespace {

// Shared plumbing for ops of the form y[i] = f(x[i]).
template <typename Fwd, typename Bwd>
Tensor elementwise(Tape& tape, const Tensor& x, Fwd fwd, Bwd dydx) {
  Tensor out = Tensor::zeros(x.shape());
  {
    auto xv = x.values();
    auto yv = out.values();
    for (std::size_t i = 0; i < xv.size(); ++i) yv[i] = fwd(xv[i]);
  }
  if (!tape.needs_grad({&x})) return out;
  tape.record(out, {x}, [=]() mutable {
    auto gy = std::as_const(out).grad();
    auto xv = std::as_const(x).values();
    auto yv = std::as_const(out).values();
    auto gx = x.grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * dydx(xv[i], yv[i]);
  });
  return out;
}

}  // namespace

Tensor relu(Tape& tape, const Tensor& x) {
  return elementwise(
      // NaN passes through so a diverged batch still surfaces as non-finite.
      tape, x, [](Real v) { return v < 0 ? Real{0} : v; },
      [](Real v, Real) { return v > 0 ? Real{1} : Real{0}; });
}

Tensor sigmoid(Tape& tape, const Tensor& x) {
  return elementwise(
      tape, x,
      [](Real v) {
        if (v >= 0) return Real{1} / (Real{1} + std::exp(-v));
        const Real e = std::exp(v);
        return e / (Real{1} + e);
      },
      [](Real, Real y) { return y * (Real{1} - y); });
}

Tensor softmax(Tape& tape, const Tensor& x) {
  if (x.rank() != 1 && x.rank() != 2) {
    throw ShapeError("softmax: expected rank 1 or 2, got " +
                     shape_to_string(x.shape()));
  }
  const std::size_t cols = x.dim(x.rank() - 1);
  if (cols == 0) throw ShapeError("softmax: empty axis");
  const std::size_t rows = x.numel() / cols;
  Tensor out = Tensor::zeros(x.shape());
  {
    auto xv = x.values();
    auto yv = out.values();
    for (std::size_t r = 0; r < rows; ++r) {
      const Real* xr = &xv[r * cols];
      Real* yr = &yv[r * cols];
      const Real mx = *std::max_element(xr, xr + cols);
      Real z = 0;
      for (std::size_t j = 0; j < cols; ++j) {
        yr[j] = std::exp(xr[j] - mx);
        z += yr[j];
      }
      for (std::size_t j = 0; j < cols; ++j) yr[j] /= z;
    }
  }
  if (!tape.needs_grad({&x})) return out;
  tape.record(out, {x}, [=]() mutable {
    auto gy = std::as_const(out).grad();
    auto yv = std::as_const(out).values();
    auto gx = x.grad();
    for (std::size_t r = 0; r < rows; ++r) {
      Real dot = 0;
      for (std::size_t j = 0; j < cols; ++j) dot += gy[r * cols + j] * yv[r * cols + j];
      for (std::size_t j = 0; j < cols; ++j) {
        gx[r * cols + j] += yv[r * cols + j] * (gy[r * cols + j] - dot);
      }
    }
  });
  return out;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape());
  {
    auto av = a.values(), bv = b.values();
    auto yv = out.values();
    for (std::size_t i = 0; i < yv.size(); ++i) yv[i] = av[i] + bv[i];
  }
  if (!tape.needs_grad({&a, &b})) return out;
  tape.record(out, {a, b}, [=]() mutable {
    auto gy = std::as_const(out).grad();
    for (const Tensor* p : {&a, &b}) {
      if (!wants_grad(*p)) continue;
      auto g = p->grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
    }
  });
  return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape());
  {
    auto av = a.values(), bv = b.values();
    auto yv = out.values();
    for (std::size_t i = 0; i < yv.size(); ++i) yv[i] = av[i] * bv[i];
  }
  if (!tape.needs_grad({&a, &b})) return out;
  tape.record(out, {a, b}, [=]() mutable {
    auto gy = std::as_const(out).grad();
    auto av = std::as_const(a).values(), bv = std::as_const(b).values();
    if (wants_grad(a)) {
      auto g = a.grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i] * bv[i];
    }
    if (wants_grad(b)) {
      auto g = b.grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i] * av[i];
    }
  });
  return out;
}

Tensor broadcast_mul(Tape& tape, const Tensor& x, const Tensor& gate) {
  require_rank(x, 3, "broadcast_mul", "x");
  require_rank(gate, 2, "broadcast_mul", "gate");
  const std::size_t n_batch = x.dim(0), c = x.dim(1), t = x.dim(2);
  if (gate.dim(0) != n_batch || gate.dim(1) != c) {
    throw ShapeError("broadcast_mul: gate " + shape_to_string(gate.shape()) +
                     " does not match x " + shape_to_string(x.shape()));
  }
  Tensor out = Tensor::zeros(x.shape());
  {
    auto xv = x.values(), gv = gate.values();
    auto yv = out.values();
    for (std::size_t nc = 0; nc < n_batch * c; ++nc) {
      for (std::size_t i = 0; i < t; ++i) yv[nc * t + i] = xv[nc * t + i] * gv[nc];
    }
  }
  if (!tape.needs_grad({&x, &gate})) return out;
  tape.record(out, {x, gate}, [=]() mutable {
    auto gy = std::as_const(out).grad();
    auto xv = std::as_const(x).values(), gv = std::as_const(gate).values();
    const bool gx_on = wants_grad(x), gg_on = wants_grad(gate);
    std::span<Real> gx = gx_on ? x.grad() : std::span<Real>{};
    std::span<Real> gg = gg_on ? gate.grad() : std::span<Real>{};
    for (std::size_t nc = 0; nc < n_batch * c; ++nc) {
      Real acc = 0;
      for (std::size_t i = 0; i < t; ++i) {
        if (gx_on) gx[nc * t + i] += gy[nc * t + i] * gv[nc];
        acc += gy[nc * t + i] * xv[nc * t + i];
      }
      if (gg_on) gg[nc] += acc;
    }
  });
  return out;
}

Tensor global_avg_pool(Tape& tape, const Tensor& x) {
  require_rank(x, 3, "global_avg_pool", "x");
  const std::size_t n_batch = x.dim(0), c = x.dim(1), t = x.dim(2);
  if (t == 0) throw ShapeError("global_avg_pool: T=0");
  Tensor out = Tensor::zeros({n_batch, c});
  {
    auto xv = x.values();
    auto yv = out.values();
    for (std::size_t nc = 0; nc < n_batch * c; ++nc) {
      Real s = 0;
      for (std::size_t i = 0; i < t; ++i) s += xv[nc * t + i];
      yv[nc] = s / static_cast<Real>(t);
    }
  }
  if (!tape.needs_grad({&x})) return out;
  tape.record(out, {x}, [=]() mutable {
    auto gy = std::as_const(out).grad();
    auto gx = x.grad();
    const Real inv_t = Real{1} / static_cast<Real>(t);
    for (std::size_t nc = 0; nc < n_batch * c; ++nc) {
      for (std::size_t i = 0; i < t; ++i) gx[nc * t + i] += gy[nc] * inv_t;
    }
  });
  return out;
}

Tensor linear(Tape& tape, const Tensor& x, const Tensor& weight,
              const Tensor& bias) {
  require_rank(x, 2, "linear", "x");
  require_rank(weight, 2, "linear", "weight");
  const std::size_t n_batch = x.dim(0), in = x.dim(1), out_dim = weight.dim(0);
  if (weight.dim(1) != in) {
    throw ShapeError("linear: weight expects in=" + std::to_string(weight.dim(1)) +
                     " but x has in=" + std::to_string(in));
  }
  if (bias.defined() && bias.shape() != Shape{out_dim}) {
    throw ShapeError("linear: bias must be [" + std::to_string(out_dim) +
                     "], got " + shape_to_string(bias.shape()));
  }
  Tensor out = Tensor::zeros({n_batch, out_dim});
  {
    auto xv = x.values(), wv = weight.values();
    auto yv = out.values();
    for (std::size_t n = 0; n < n_batch; ++n) {
      for (std::size_t o = 0; o < out_dim; ++o) {
        Real s = bias.defined() ? bias.values()[o] : Real{0};
        for (std::size_t i = 0; i < in; ++i) s += xv[n * in + i] * wv[o * in + i];
        yv[n * out_dim + o] = s;
      }
    }
  }
  if (!tape.needs_grad({&x, &weight, &bias})) return out;
  tape.record(out, {x, weight, bias}, [=]() mutable {
    auto gy = std::as_const(out).grad();
    auto xv = std::as_const(x).values(), wv = std::as_const(weight).values();
    if (wants_grad(x)) {
      auto gx = x.grad();
      for (std::size_t n = 0; n < n_batch; ++n)
        for (std::size_t o = 0; o < out_dim; ++o)
          for (std::size_t i = 0; i < in; ++i)
            gx[n * in + i] += gy[n * out_dim + o] * wv[o * in + i];
    }
    if (wants_grad(weight)) {
      auto gw = weight.grad();
      for (std::size_t n = 0; n < n_batch; ++n)
        for (std::size_t o = 0; o < out_dim; ++o)
          for (std::size_t i = 0; i < in; ++i)
            gw[o * in + i] += gy[n * out_dim + o] * xv[n * in + i];
    }
    if (wants_grad(bias)) {
      auto gb = bias.grad();
      for (std::size_t n = 0; n < n_batch; ++n)
        for (std::size_t o = 0; o < out_dim; ++o) gb[o] += gy[n * out_dim + o];
    }
  });
  return out;
}

Tensor cross_entropy(Tape& tape, const Tensor& logits,
                     std::span<const int> labels) {
  require_rank(logits, 2, "cross_entropy", "logits");
  const std::size_t n_batch = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n_batch) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) +
                     " labels for a batch of " + std::to_string(n_batch));
  }
  if (n_batch == 0 || k == 0) throw ShapeError("cross_entropy: empty logits");
  std::vector<int> lab(labels.begin(), labels.end());
  for (int l : lab) {
    if (l < 0 || static_cast<std::size_t>(l) >= k) {
      throw ShapeError("cross_entropy: label " + std::to_string(l) +
                       " out of range [0, " + std::to_string(k) + ")");
    }
  }
  std::vector<Real> prob(n_batch * k);
  Real loss = 0;
  {
    auto xv = logits.values();
    for (std::size_t n = 0; n < n_batch; ++n) {
      const Real* row = &xv[n * k];
      const Real mx = *std::max_element(row, row + k);
      Real z = 0;
      for (std::size_t j = 0; j < k; ++j) {
        prob[n * k + j] = std::exp(row[j] - mx);
        z += prob[n * k + j];
      }
      for (std::size_t j = 0; j < k; ++j) prob[n * k + j] /= z;
      loss += -(row[lab[n]] - mx - std::log(z));
    }
  }
  Tensor out = Tensor::scalar(loss / static_cast<Real>(n_batch));
  if (!tape.needs_grad({&logits})) return out;
  tape.record(out, {logits}, [=, prob = std::move(prob)]() mutable {
    const Real g = std::as_const(out).grad()[0] / static_cast<Real>(n_batch);
    auto gx = logits.grad();
    for (std::size_t n = 0; n < n_batch; ++n) {
      for (std::size_t j = 0; j < k; ++j) {
        const Real target = static_cast<int>(j) == lab[n] ? Real{1} : Real{0};
        gx[n * k + j] += g * (prob[n * k + j] - target);
      }
    }
  });
  return out;
}

Tensor sum(Tape& tape, const Tensor& x) {
  Real s = 0;
  for (Real v : x.values()) s += v;
  Tensor out = Tensor::scalar(s);
  if (!tape.needs_grad({&x})) return out;
  tape.record(out, {x}, [=]() mutable {
    const Real g = std::as_const(out).grad()[0];
    for (Real& v : x.grad()) v += g;
  });
  return out;
}

Tensor scale(Tape& tape, const Tensor& x, Real factor) {
  return elementwise(
      tape, x, [factor](Real v) { return v * factor; },
      [factor](Real, Real) { return factor; });
}

Tensor add_constant(Tape& tape, const Tensor& x, std::span<const Real> c) {
  if (c.size() != x.numel()) {
    throw ShapeError("add_constant: " + std::to_string(c.size()) +
                     " constants for a tensor of " + std::to_string(x.numel()));
  }
  Tensor out = Tensor::zeros(x.shape());
  {
    auto xv = x.values();
    auto yv = out.values();
    for (std::size_t i = 0; i < yv.size(); ++i) yv[i] = xv[i] + c[i];
  }
  if (!tape.needs_grad({&x})) return out;
  tape.record(out, {x}, [=]() mutable {
    auto gy = std::as_const(out).grad();
    auto gx = x.grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i];
  });
  return out;
}

Tensor element(Tape& tape, const Tensor& x, std::size_t index) {
  if (index >= x.numel()) {
    throw ShapeError("element: index " + std::to_string(index) +
                     " out of range for " + shape_to_string(x.shape()));
  }
  Tensor out = Tensor::scalar(x.values()[index]);
  if (!tape.needs_grad({&x})) return out;
  tape.record(out, {x}, [=]() mutable {
    x.grad()[index] += std::as_const(out).grad()[0];
  });
  return out;
}

Tensor weighted_sum(Tape& tape, std::span<const Tensor> inputs,
                    const Tensor& weights) {
  if (inputs.empty()) throw ShapeError("weighted_sum: no inputs");
  if (weights.rank() != 1 || weights.numel() != inputs.size()) {
    throw ShapeError("weighted_sum: weights " +
                     shape_to_string(weights.shape()) + " for " +
                     std::to_string(inputs.size()) + " inputs");
  }
  for (const Tensor& t : inputs) require_same_shape(t, inputs[0], "weighted_sum");
  Tensor out = Tensor::zeros(inputs[0].shape());
  {
    auto yv = out.values();
    auto wv = weights.values();
    for (std::size_t j = 0; j < inputs.size(); ++j) {
      auto xv = inputs[j].values();
      for (std::size_t i = 0; i < yv.size(); ++i) yv[i] += wv[j] * xv[i];
    }
  }
  std::vector<Tensor> parents(inputs.begin(), inputs.end());
  bool any = tape.needs_grad({&weights});
  for (const Tensor& t : inputs) any = any || tape.needs_grad({&t});
  if (!any) return out;
  parents.push_back(weights);
  tape.record(out, parents, [=]() mutable {
    auto gy = std::as_const(out).grad();
    auto wv = std::as_const(weights).values();
    const bool gw_on = wants_grad(weights);
    std::span<Real> gw = gw_on ? weights.grad() : std::span<Real>{};
    for (std::size_t j = 0; j + 1 < parents.size(); ++j) {
      Tensor& in = parents[j];
      auto xv = std::as_const(in).values();
      if (gw_on) {
        Real acc = 0;
        for (std::size_t i = 0; i < gy.size(); ++i) acc += gy[i] * xv[i];
        gw[j] += acc;
      }
      if (wants_grad(in)) {
        auto gx = in.grad();
        for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += wv[j] * gy[i];
      }
    }
  });
  return out;
}

}  // namespace kwsnas
