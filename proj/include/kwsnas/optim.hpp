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

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "kwsnas/tensor.hpp"

namespace kwsnas {

/// In-place momentum SGD on one buffer:
///   v = momentum * v + (g + weight_decay * p);  p -= lr * v
void sgd_momentum_step(std::span<Real> param, std::span<const Real> grad,
                       std::span<Real> velocity, Real lr, Real momentum,
                       Real weight_decay = 0);

/// In-place bias-corrected Adam on one buffer. `step` is the 1-based count
/// of updates applied so far including this one.
void adam_step(std::span<Real> param, std::span<const Real> grad,
               std::span<Real> m, std::span<Real> v, std::int64_t step, Real lr,
               Real beta1, Real beta2, Real eps);

class SgdMomentum {
 public:
  SgdMomentum(std::vector<Tensor> params, Real lr, Real momentum,
              Real weight_decay = 0);

  void step();
  void zero_grad();
  void set_lr(Real lr) { lr_ = lr; }
  Real lr() const { return lr_; }
  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<Real>> velocity_;
  Real lr_, momentum_, weight_decay_;
};

class Adam {
 public:
  Adam(std::vector<Tensor> params, Real lr, Real beta1 = 0.9,
       Real beta2 = 0.999, Real eps = 1e-8);

  void step();
  void zero_grad();
  std::int64_t steps_taken() const { return t_; }
  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<Real>> m_, v_;
  Real lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
};

}  // namespace kwsnas
