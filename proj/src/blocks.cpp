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

#include "kwsnas/blocks.hpp"

#include <cmath>

#include "kwsnas/error.hpp"

namespace kwsnas {

std::vector<Tensor> Model::parameters() const {
  std::vector<Tensor> out;
  for (auto& nt : named_parameters()) out.push_back(nt.tensor);
  return out;
}

namespace {

Tensor uniform_tensor(Shape shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (auto& v : t.values()) v = static_cast<Real>(dist(rng));
  return t;
}

}  // namespace

// ---------------------------------------------------------------------------

Conv1d::Conv1d(int c_in, int c_out, int kernel, int stride, std::mt19937_64& rng)
    : c_in_(c_in), c_out_(c_out), kernel_(kernel), stride_(stride) {
  if (c_in < 1 || c_out < 1) {
    throw ConfigError("conv1d: channel counts must be positive (got " +
                      std::to_string(c_in) + " -> " + std::to_string(c_out) + ")");
  }
  if (kernel < 1 || kernel % 2 == 0) throw ConfigError("conv1d: kernel must be odd");
  if (stride < 1) throw ConfigError("conv1d: stride must be positive");
  weight_ = uniform_tensor({static_cast<std::size_t>(c_out), static_cast<std::size_t>(c_in),
                            static_cast<std::size_t>(kernel)},
                           std::sqrt(6.0 / (c_in * kernel)), rng);
}

Tensor Conv1d::forward(Tape& tape, const Tensor& x) const {
  return conv1d(tape, x, weight_, static_cast<std::size_t>(stride_));
}

std::size_t Conv1d::out_length(std::size_t t_in) const {
  return (t_in + static_cast<std::size_t>(stride_) - 1) / static_cast<std::size_t>(stride_);
}

std::int64_t Conv1d::param_count() const {
  return std::int64_t{c_out_} * c_in_ * kernel_;
}

std::int64_t Conv1d::macs(std::size_t t_in) const {
  return std::int64_t{c_out_} * static_cast<std::int64_t>(out_length(t_in)) * c_in_ * kernel_;
}

void Conv1d::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".weight", weight_});
}

BatchNorm::BatchNorm(int channels)
    : channels_(channels),
      gamma_(Tensor::full({static_cast<std::size_t>(channels)}, 1, true)),
      beta_(Tensor::zeros({static_cast<std::size_t>(channels)}, true)),
      running_mean_(Tensor::zeros({static_cast<std::size_t>(channels)})),
      running_var_(Tensor::full({static_cast<std::size_t>(channels)}, 1)) {}

Tensor BatchNorm::forward(Tape& tape, const Tensor& x, bool training) {
  return batchnorm1d(tape, x, gamma_, beta_,
                     training ? BatchNormMode::kTrain : BatchNormMode::kEval,
                     running_mean_, running_var_);
}

void BatchNorm::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".gamma", gamma_});
  out.push_back({prefix + ".beta", beta_});
}

void BatchNorm::collect_buffers(const std::string& prefix,
                                std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".running_mean", running_mean_});
  out.push_back({prefix + ".running_var", running_var_});
}

Linear::Linear(int in, int out, std::mt19937_64& rng) : in_(in), out_(out) {
  if (in < 1 || out < 1) throw ConfigError("linear: sizes must be positive");
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight_ = uniform_tensor({static_cast<std::size_t>(out), static_cast<std::size_t>(in)}, bound, rng);
  bias_ = uniform_tensor({static_cast<std::size_t>(out)}, bound, rng);
}

Tensor Linear::forward(Tape& tape, const Tensor& x) const {
  return linear(tape, x, weight_, bias_);
}

void Linear::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".weight", weight_});
  out.push_back({prefix + ".bias", bias_});
}

SqueezeExcite::SqueezeExcite(int channels, int reduction, std::mt19937_64& rng)
    : hidden_(std::max(1, channels / reduction)),
      reduce_(channels, hidden_, rng),
      expand_(hidden_, channels, rng) {}

Tensor SqueezeExcite::forward(Tape& tape, const Tensor& x) const {
  Tensor s = global_avg_pool(tape, x);
  s = relu(tape, reduce_.forward(tape, s));
  s = sigmoid(tape, expand_.forward(tape, s));
  return broadcast_mul(tape, x, s);
}

void SqueezeExcite::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  reduce_.collect(prefix + ".reduce", out);
  expand_.collect(prefix + ".expand", out);
}

// ---------------------------------------------------------------------------

namespace {

int require_tc(const CandidateSpec& spec, int c_in) {
  if (spec.is_skip()) throw ConfigError("TcBlock built from a skip candidate");
  spec.validate();
  return c_in;
}

}  // namespace

TcBlock::TcBlock(const CandidateSpec& spec, int c_in, int c_out, int stride,
                 int se_reduction, std::mt19937_64& rng)
    : spec_(spec),
      conv1_(require_tc(spec, c_in), c_out, spec.kernel, stride, rng),
      bn1_(c_out),
      conv2_(c_out, c_out, spec.kernel, 1, rng),
      bn2_(c_out) {
  if (stride != 1 || c_in != c_out) {
    proj_.emplace(c_in, c_out, 1, stride, rng);
    proj_bn_.emplace(c_out);
  }
  if (spec.se) se_.emplace(c_out, se_reduction, rng);
}

Tensor TcBlock::forward(Tape& tape, const Tensor& x, bool training) {
  Tensor h = relu(tape, bn1_.forward(tape, conv1_.forward(tape, x), training));
  h = bn2_.forward(tape, conv2_.forward(tape, h), training);
  if (se_) h = se_->forward(tape, h);
  Tensor shortcut = proj_ ? proj_bn_->forward(tape, proj_->forward(tape, x), training) : x;
  return relu(tape, add(tape, h, shortcut));
}

std::int64_t TcBlock::param_count() const {
  std::int64_t n = conv1_.param_count() + bn1_.param_count() + conv2_.param_count() +
                   bn2_.param_count();
  if (proj_) n += proj_->param_count() + proj_bn_->param_count();
  if (se_) n += se_->param_count();
  return n;
}

std::int64_t TcBlock::macs(std::size_t t_in) const {
  const std::size_t t_out = conv1_.out_length(t_in);
  std::int64_t n = conv1_.macs(t_in) + conv2_.macs(t_out);
  if (proj_) n += proj_->macs(t_in);
  if (se_) n += se_->macs();
  return n;
}

void TcBlock::collect(const std::string& prefix, std::vector<NamedTensor>& out) const {
  conv1_.collect(prefix + ".conv1", out);
  bn1_.collect(prefix + ".bn1", out);
  conv2_.collect(prefix + ".conv2", out);
  bn2_.collect(prefix + ".bn2", out);
  if (proj_) {
    proj_->collect(prefix + ".proj", out);
    proj_bn_->collect(prefix + ".proj_bn", out);
  }
  if (se_) se_->collect(prefix + ".se", out);
}

void TcBlock::collect_buffers(const std::string& prefix, std::vector<NamedTensor>& out) const {
  bn1_.collect_buffers(prefix + ".bn1", out);
  bn2_.collect_buffers(prefix + ".bn2", out);
  if (proj_bn_) proj_bn_->collect_buffers(prefix + ".proj_bn", out);
}

Stem::Stem(int c_in, int c_out, std::mt19937_64& rng) : conv_(c_in, c_out, 3, 1, rng), bn_(c_out) {}

Tensor Stem::forward(Tape& tape, const Tensor& x, bool training) {
  return relu(tape, bn_.forward(tape, conv_.forward(tape, x), training));
}

void Stem::collect(std::vector<NamedTensor>& out) const {
  conv_.collect("stem.conv", out);
  bn_.collect("stem.bn", out);
}

void Stem::collect_buffers(std::vector<NamedTensor>& out) const {
  bn_.collect_buffers("stem.bn", out);
}

Tail::Tail(int c_in, int classes, std::mt19937_64& rng) : fc_(c_in, classes, rng) {}

Tensor Tail::forward(Tape& tape, const Tensor& x) const {
  return fc_.forward(tape, global_avg_pool(tape, x));
}

void Tail::collect(std::vector<NamedTensor>& out) const { fc_.collect("tail.fc", out); }

// ---------------------------------------------------------------------------

namespace {

const SearchSpaceConfig& checked(const Genotype& g, const SearchSpaceConfig& space) {
  space.validate();
  validate_genotype(g, space);
  return space;
}

}  // namespace

Network::Network(const Genotype& genotype, const SearchSpaceConfig& space, std::uint64_t seed)
    : genotype_(genotype),
      space_(checked(genotype, space)),
      rng_(seed),
      stem_(space.input_channels, space.stem_channels, rng_),
      tail_(space.channels.back(), space.num_classes, rng_) {
  std::mt19937_64& rng = rng_;
  for (int l = 0; l < space.num_layers; ++l) {
    std::vector<std::optional<TcBlock>> entry;
    for (const auto& spec : genotype.layers[static_cast<std::size_t>(l)]) {
      if (spec.is_skip()) {
        entry.emplace_back(std::nullopt);
      } else {
        entry.emplace_back(std::in_place, spec, space.in_channels(l),
                           space.channels[static_cast<std::size_t>(l)],
                           space.strides[static_cast<std::size_t>(l)], space.se_reduction, rng);
      }
    }
    layers_.push_back(std::move(entry));
  }
}

Tensor Network::forward(Tape& tape, const Tensor& inputs, bool training) {
  if (inputs.rank() != 3 || inputs.dim(1) != static_cast<std::size_t>(space_.input_channels)) {
    throw ShapeError("network expects [N x " + std::to_string(space_.input_channels) +
                     " x T] input, got " + shape_to_string(inputs.shape()));
  }
  Tensor x = stem_.forward(tape, inputs, training);
  for (auto& entry : layers_) {
    Tensor acc;
    for (auto& block : entry) {
      Tensor y = block ? block->forward(tape, x, training) : x;
      acc = acc.defined() ? add(tape, acc, y) : y;
    }
    x = acc;
  }
  return tail_.forward(tape, x);
}

std::vector<NamedTensor> Network::named_parameters() const {
  std::vector<NamedTensor> out;
  stem_.collect(out);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    for (std::size_t c = 0; c < layers_[l].size(); ++c) {
      if (layers_[l][c]) {
        layers_[l][c]->collect("layer" + std::to_string(l) + "." + layers_[l][c]->spec().label(), out);
      }
    }
  }
  tail_.collect(out);
  return out;
}

std::vector<NamedTensor> Network::named_buffers() const {
  std::vector<NamedTensor> out;
  stem_.collect_buffers(out);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    for (const auto& b : layers_[l]) {
      if (b) b->collect_buffers("layer" + std::to_string(l) + "." + b->spec().label(), out);
    }
  }
  return out;
}

const TcBlock* Network::block(std::size_t layer, std::size_t choice) const {
  const auto& b = layers_.at(layer).at(choice);
  return b ? &*b : nullptr;
}

std::unique_ptr<Network> build_network(const Genotype& genotype, const SearchSpaceConfig& space,
                                       std::uint64_t seed) {
  return std::make_unique<Network>(genotype, space, seed);
}

std::int64_t count_params(const Network& net) {
  std::int64_t n = net.stem_.param_count() + net.tail_.param_count();
  for (const auto& entry : net.layers_) {
    for (const auto& b : entry) {
      if (b) n += b->param_count();
    }
  }
  return n;
}

std::int64_t count_macs(const Network& net, std::size_t frames) {
  std::int64_t n = net.stem_.macs(frames);
  std::size_t t = frames;
  for (std::size_t l = 0; l < net.layers_.size(); ++l) {
    for (const auto& b : net.layers_[l]) {
      if (b) n += b->macs(t);
    }
    const auto s = static_cast<std::size_t>(net.space_.strides[l]);
    t = (t + s - 1) / s;
  }
  return n + net.tail_.macs();
}

std::int64_t count_madds(const Network& net, std::size_t frames) {
  return 2 * count_macs(net, frames);
}

SearchSpaceConfig tc_resnet14_space(double multiplier) {
  SearchSpaceConfig c;
  c.num_layers = 6;
  for (int base : {24, 24, 32, 32, 48, 48}) c.channels.push_back(scale_channels(base, multiplier));
  c.strides = {2, 1, 2, 1, 2, 1};
  c.stem_channels = scale_channels(16, multiplier);
  c.candidate_set = default_candidate_set();
  return c;
}

std::unique_ptr<Network> build_tc_resnet14(double multiplier, int kernel, std::uint64_t seed) {
  const SearchSpaceConfig space = tc_resnet14_space(multiplier);
  Genotype g;
  g.layers.assign(static_cast<std::size_t>(space.num_layers), {CandidateSpec::tc(kernel)});
  return build_network(g, space, seed);
}

}  // namespace kwsnas
