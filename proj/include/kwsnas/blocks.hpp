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
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "kwsnas/genotype.hpp"
#include "kwsnas/tensor.hpp"

namespace kwsnas {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Anything that maps a [N x C x T] batch to [N x classes] logits.
class Model {
 public:
  virtual ~Model() = default;
  virtual Tensor forward(Tape& tape, const Tensor& inputs, bool training) = 0;
  /// Trainable tensors in a stable order.
  virtual std::vector<NamedTensor> named_parameters() const = 0;
  /// Non-trainable state (batch-norm running statistics).
  virtual std::vector<NamedTensor> named_buffers() const { return {}; }

  std::vector<Tensor> parameters() const;
};

class Conv1d {
 public:
  /// Bias-free; fan-in scaled uniform init, bound sqrt(6 / (c_in * K)).
  Conv1d(int c_in, int c_out, int kernel, int stride, std::mt19937_64& rng);

  Tensor forward(Tape& tape, const Tensor& x) const;
  std::size_t out_length(std::size_t t_in) const;
  std::int64_t param_count() const;
  std::int64_t macs(std::size_t t_in) const;
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;

  int c_in() const { return c_in_; }
  int c_out() const { return c_out_; }
  int kernel() const { return kernel_; }
  int stride() const { return stride_; }
  const Tensor& weight() const { return weight_; }

 private:
  int c_in_, c_out_, kernel_, stride_;
  Tensor weight_;
};

class BatchNorm {
 public:
  explicit BatchNorm(int channels);

  Tensor forward(Tape& tape, const Tensor& x, bool training);
  std::int64_t param_count() const { return 2 * channels_; }
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
  void collect_buffers(const std::string& prefix, std::vector<NamedTensor>& out) const;

  const Tensor& gamma() const { return gamma_; }
  const Tensor& beta() const { return beta_; }

 private:
  int channels_;
  Tensor gamma_, beta_, running_mean_, running_var_;
};

class Linear {
 public:
  /// Uniform init with bound 1 / sqrt(in) for weight and bias.
  Linear(int in, int out, std::mt19937_64& rng);

  Tensor forward(Tape& tape, const Tensor& x) const;
  std::int64_t param_count() const { return std::int64_t{in_} * out_ + out_; }
  std::int64_t macs() const { return std::int64_t{in_} * out_; }
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;

  const Tensor& weight() const { return weight_; }
  const Tensor& bias() const { return bias_; }

 private:
  int in_, out_;
  Tensor weight_, bias_;
};

/// Channel gate: mean over time -> linear C->C/r -> ReLU -> linear C/r->C
/// -> sigmoid -> per-channel scale.
class SqueezeExcite {
 public:
  SqueezeExcite(int channels, int reduction, std::mt19937_64& rng);

  Tensor forward(Tape& tape, const Tensor& x) const;
  std::int64_t param_count() const { return reduce_.param_count() + expand_.param_count(); }
  std::int64_t macs() const { return reduce_.macs() + expand_.macs(); }
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
  int hidden() const { return hidden_; }
  const Linear& expand() const { return expand_; }

 private:
  int hidden_;
  Linear reduce_, expand_;
};

/// Residual TC-ResNet block:
///   main     = conv(K, stride) -> BN -> ReLU -> conv(K, 1) -> BN [-> SE]
///   shortcut = identity, or conv(1, stride) -> BN when the shape changes
///   out      = ReLU(main + shortcut)
class TcBlock {
 public:
  TcBlock(const CandidateSpec& spec, int c_in, int c_out, int stride,
          int se_reduction, std::mt19937_64& rng);

  Tensor forward(Tape& tape, const Tensor& x, bool training);
  std::int64_t param_count() const;
  std::int64_t macs(std::size_t t_in) const;
  std::size_t out_length(std::size_t t_in) const { return conv1_.out_length(t_in); }
  void collect(const std::string& prefix, std::vector<NamedTensor>& out) const;
  void collect_buffers(const std::string& prefix, std::vector<NamedTensor>& out) const;

  const CandidateSpec& spec() const { return spec_; }
  bool has_projection() const { return proj_.has_value(); }
  const Conv1d& conv1() const { return conv1_; }
  const Conv1d& conv2() const { return conv2_; }
  const std::optional<SqueezeExcite>& se() const { return se_; }

 private:
  CandidateSpec spec_;
  Conv1d conv1_;
  BatchNorm bn1_;
  Conv1d conv2_;
  BatchNorm bn2_;
  std::optional<Conv1d> proj_;
  std::optional<BatchNorm> proj_bn_;
  std::optional<SqueezeExcite> se_;
};

/// conv(K=3) -> BN -> ReLU from the MFCC channels to the stem width.
class Stem {
 public:
  Stem(int c_in, int c_out, std::mt19937_64& rng);
  Tensor forward(Tape& tape, const Tensor& x, bool training);
  std::int64_t param_count() const { return conv_.param_count() + bn_.param_count(); }
  std::int64_t macs(std::size_t t_in) const { return conv_.macs(t_in); }
  void collect(std::vector<NamedTensor>& out) const;
  void collect_buffers(std::vector<NamedTensor>& out) const;

 private:
  Conv1d conv_;
  BatchNorm bn_;
};

/// Global average pool over time followed by the classifier.
class Tail {
 public:
  Tail(int c_in, int classes, std::mt19937_64& rng);
  Tensor forward(Tape& tape, const Tensor& x) const;
  std::int64_t param_count() const { return fc_.param_count(); }
  std::int64_t macs() const { return fc_.macs(); }
  void collect(std::vector<NamedTensor>& out) const;

 private:
  Linear fc_;
};

/// A concrete network: stem, one entry per genotype layer (several selected
/// candidates are summed; skip is identity), tail.
class Network : public Model {
 public:
  Network(const Genotype& genotype, const SearchSpaceConfig& space, std::uint64_t seed);

  Tensor forward(Tape& tape, const Tensor& inputs, bool training) override;
  std::vector<NamedTensor> named_parameters() const override;
  std::vector<NamedTensor> named_buffers() const override;

  const Genotype& genotype() const { return genotype_; }
  const SearchSpaceConfig& space() const { return space_; }
  const Stem& stem() const { return stem_; }
  const Tail& tail() const { return tail_; }
  /// Block for (layer, choice); nullptr for skip.
  const TcBlock* block(std::size_t layer, std::size_t choice) const;

 private:
  Genotype genotype_;
  SearchSpaceConfig space_;
  std::mt19937_64 rng_;  // init only
  Stem stem_;
  std::vector<std::vector<std::optional<TcBlock>>> layers_;
  Tail tail_;

  friend std::int64_t count_params(const Network&);
  friend std::int64_t count_macs(const Network&, std::size_t);
};

std::unique_ptr<Network> build_network(const Genotype& genotype,
                                       const SearchSpaceConfig& space,
                                       std::uint64_t seed);

/// Trainable element count: conv and linear weights, linear biases, and the
/// batch-norm gamma/beta pairs.
std::int64_t count_params(const Network& net);
/// Fused multiply-accumulates for one clip of `frames` time steps:
/// sum over convs of C_out * T_out * C_in * K plus C_in * C_out per linear.
std::int64_t count_macs(const Network& net, std::size_t frames);
/// Multiply-adds with multiplies and adds counted separately (2 x MACs),
/// the unit of published TC-ResNet "x+" figures.
std::int64_t count_madds(const Network& net, std::size_t frames);

/// The six-block TC-ResNet-14 baseline: channels {24,24,32,32,48,48} and
/// stem 16, all scaled by `multiplier`, stride 2 on every channel increase.
SearchSpaceConfig tc_resnet14_space(double multiplier = 1.5);
std::unique_ptr<Network> build_tc_resnet14(double multiplier = 1.5, int kernel = 9,
                                           std::uint64_t seed = 0);

}  // namespace kwsnas
