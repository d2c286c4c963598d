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

// Minimal reverse-mode automatic differentiation over dense tensors.
//
// A Tensor is a shared handle to a value buffer and an optional gradient
// buffer. Operations take a Tape and record a backward closure on it; the
// tape is then replayed in reverse by Tape::backward.
//
// Gradient semantics: backward() *accumulates* into the grad buffer of every
// tensor that requires a gradient. Leaf tensors (parameters) therefore keep
// summing across tapes until zero_grad() is called. A tape can be run
// backward exactly once; a second call throws.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace kwsnas {

#ifdef KWSNAS_USE_FLOAT
using Real = float;
#else
using Real = double;
#endif

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Real value, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<Real> values,
                            bool requires_grad = false);
  static Tensor scalar(Real value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  // A Tensor is a handle: copies share storage, and const applies to the
  // handle, not to the values it points at.
  std::span<Real> values() const;
  Real item() const;

  bool requires_grad() const;
  void set_requires_grad(bool on) const;

  bool has_grad() const;
  /// Gradient buffer, allocated (zero-filled) on first access.
  std::span<Real> grad() const;
  void zero_grad() const;

  /// Deep copy of the values; the copy carries no gradient.
  Tensor clone() const;
  /// Overwrites values from another tensor of the same shape.
  void copy_values_from(const Tensor& other) const;

  bool same_as(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    std::vector<Real> values;
    std::vector<Real> grad;
    bool requires_grad = false;
  };
  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}
  Impl& impl() const;

  std::shared_ptr<Impl> impl_;
};

/// Records operations in forward order and replays them in reverse.
class Tape {
 public:
  struct Node {
    Tensor output;
    std::vector<Tensor> parents;
    std::function<void()> backward;
  };

  /// A non-recording tape evaluates ops without building a graph.
  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  const std::vector<Node>& nodes() const { return nodes_; }

  /// True when at least one parent needs a gradient and the tape records.
  bool needs_grad(std::initializer_list<const Tensor*> parents) const;
  void record(Tensor output, std::vector<Tensor> parents,
              std::function<void()> backward);

  void backward(const Tensor& loss);

 private:
  std::vector<Node> nodes_;
  bool recording_;
  bool consumed_ = false;
};

enum class BatchNormMode { kTrain, kEval };

// Every op below raises ShapeError on incompatible inputs.

/// 1-D convolution with symmetric "same" zero padding of K-1 in total.
/// input is [C_in x T] or [N x C_in x T]; weight is [C_out x C_in x K], K odd.
/// Output length is ceil(T / stride).
Tensor conv1d(Tape& tape, const Tensor& input, const Tensor& weight,
              std::size_t stride);

/// Per-channel batch normalization of [N x C x T]. In train mode the batch
/// statistics are used and the running stats move with `momentum` (unbiased
/// variance); eval mode reads the running stats.
Tensor batchnorm1d(Tape& tape, const Tensor& input, const Tensor& gamma,
                   const Tensor& beta, BatchNormMode mode, Tensor& running_mean,
                   Tensor& running_var, Real momentum = 0.1, Real eps = 1e-5);

Tensor relu(Tape& tape, const Tensor& x);
Tensor sigmoid(Tape& tape, const Tensor& x);
/// Softmax over the last axis of a rank-1 or rank-2 tensor.
Tensor softmax(Tape& tape, const Tensor& x);
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
/// x [N x C x T] scaled per (n, c) by gate [N x C].
Tensor broadcast_mul(Tape& tape, const Tensor& x, const Tensor& gate);
/// [N x C x T] -> [N x C], mean over time.
Tensor global_avg_pool(Tape& tape, const Tensor& x);
/// x [N x in] times weight [out x in] transposed, plus optional bias [out].
Tensor linear(Tape& tape, const Tensor& x, const Tensor& weight,
              const Tensor& bias);
/// Mean negative log-likelihood of integer labels under softmax(logits).
Tensor cross_entropy(Tape& tape, const Tensor& logits,
                     std::span<const int> labels);
Tensor sum(Tape& tape, const Tensor& x);
Tensor scale(Tape& tape, const Tensor& x, Real factor);
/// x + c for a constant buffer c; the gradient passes through unchanged.
Tensor add_constant(Tape& tape, const Tensor& x, std::span<const Real> c);
/// Scalar view of one element of x.
Tensor element(Tape& tape, const Tensor& x, std::size_t index);
/// sum_i weights[i] * inputs[i]; weights is rank-1 with inputs.size() entries.
Tensor weighted_sum(Tape& tape, std::span<const Tensor> inputs,
                    const Tensor& weights);

}  // namespace kwsnas
