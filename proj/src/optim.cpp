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

#include "kwsnas/optim.hpp"

#include <cmath>
#include <string>

#include "kwsnas/error.hpp"

namespace kwsnas {

namespace {

void check_sizes(std::size_t param, std::size_t other, const char* what) {
  if (param != other) {
    throw ShapeError(std::string("optimizer: ") + what + " has " +
                     std::to_string(other) + " elements, parameter has " +
                     std::to_string(param));
  }
}

void check_lr(Real lr) {
  if (!(lr > 0)) throw ConfigError("optimizer: learning rate must be > 0");
}

}  // namespace

void sgd_momentum_step(std::span<Real> param, std::span<const Real> grad,
                       std::span<Real> velocity, Real lr, Real momentum,
                       Real weight_decay) {
  check_lr(lr);
  check_sizes(param.size(), grad.size(), "gradient");
  check_sizes(param.size(), velocity.size(), "velocity buffer");
  for (std::size_t i = 0; i < param.size(); ++i) {
    velocity[i] = momentum * velocity[i] + grad[i] + weight_decay * param[i];
    param[i] -= lr * velocity[i];
  }
}

void adam_step(std::span<Real> param, std::span<const Real> grad,
               std::span<Real> m, std::span<Real> v, std::int64_t step, Real lr,
               Real beta1, Real beta2, Real eps) {
  check_lr(lr);
  check_sizes(param.size(), grad.size(), "gradient");
  check_sizes(param.size(), m.size(), "first-moment buffer");
  check_sizes(param.size(), v.size(), "second-moment buffer");
  if (step < 1) throw ConfigError("adam_step: step count must be >= 1");
  const Real c1 = 1 - std::pow(beta1, static_cast<Real>(step));
  const Real c2 = 1 - std::pow(beta2, static_cast<Real>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    m[i] = beta1 * m[i] + (1 - beta1) * grad[i];
    v[i] = beta2 * v[i] + (1 - beta2) * grad[i] * grad[i];
    param[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
  }
}

SgdMomentum::SgdMomentum(std::vector<Tensor> params, Real lr, Real momentum,
                         Real weight_decay)
    : params_(std::move(params)),
      lr_(lr),
      momentum_(momentum),
      weight_decay_(weight_decay) {
  check_lr(lr);
  for (const auto& p : params_) velocity_.emplace_back(p.numel(), Real{0});
}

void SgdMomentum::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    sgd_momentum_step(p.values(), std::as_const(p).grad(), velocity_[i], lr_,
                      momentum_, weight_decay_);
  }
}

void SgdMomentum::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

Adam::Adam(std::vector<Tensor> params, Real lr, Real beta1, Real beta2, Real eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  check_lr(lr);
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), Real{0});
    v_.emplace_back(p.numel(), Real{0});
  }
}

void Adam::step() {
  ++t_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    adam_step(p.values(), std::as_const(p).grad(), m_[i], v_[i], t_, lr_,
              beta1_, beta2_, eps_);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace kwsnas
