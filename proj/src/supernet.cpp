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

#include "kwsnas/supernet.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "kwsnas/error.hpp"

namespace kwsnas {

std::string method_name(SearchMethod method) {
  switch (method) {
    case SearchMethod::kDarts: return "darts";
    case SearchMethod::kFairDarts: return "fairdarts";
    case SearchMethod::kNoisyDarts: return "noisydarts";
  }
  return "?";
}

SearchMethod parse_method(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "darts") return SearchMethod::kDarts;
  if (lower == "fairdarts") return SearchMethod::kFairDarts;
  if (lower == "noisydarts") return SearchMethod::kNoisyDarts;
  throw ConfigError("unknown search method '" + std::string(name) +
                    "'; valid methods: darts, fairdarts, noisydarts");
}

void SearchConfig::validate() const {
  if (epochs < 0) throw ConfigError("search.epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("search.batch_size must be >= 1");
  if (!(w_lr > 0) || !(alpha_lr > 0)) throw ConfigError("search learning rates must be > 0");
  if (w_momentum < 0 || w_momentum >= 1) throw ConfigError("search.w_momentum must be in [0, 1)");
  if (w_weight_decay < 0) throw ConfigError("search.w_weight_decay must be >= 0");
  if (noise_std < 0) throw ConfigError("search.noise_std must be >= 0");
  if (w01_weight < 0) throw ConfigError("search.w01_weight must be >= 0");
  if (!(threshold > 0 && threshold < 1)) throw ConfigError("search.threshold must be in (0, 1)");
}

Json to_json(const SearchConfig& c) {
  return Json{{"method", method_name(c.method)},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"w_lr", c.w_lr},
              {"w_momentum", c.w_momentum},
              {"w_weight_decay", c.w_weight_decay},
              {"alpha_lr", c.alpha_lr},
              {"alpha_beta1", c.alpha_beta1},
              {"alpha_beta2", c.alpha_beta2},
              {"alpha_eps", c.alpha_eps},
              {"noise_std", c.noise_std},
              {"noise_mean", c.noise_mean},
              {"w01_weight", c.w01_weight},
              {"threshold", c.threshold},
              {"seed", c.seed},
              {"arch_step_first", c.arch_step_first},
              {"valid_source", c.valid_source == ValidSource::kValidSplit ? "valid" : "train_half"}};
}

SearchConfig search_from_json(const Json& j, const SearchConfig& base) {
  if (!j.is_object()) throw ConfigError("search must be an object");
  SearchConfig c = base;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "method") c.method = parse_method(v.get<std::string>());
      else if (key == "epochs") c.epochs = v.get<int>();
      else if (key == "batch_size") c.batch_size = v.get<int>();
      else if (key == "w_lr") c.w_lr = v.get<double>();
      else if (key == "w_momentum") c.w_momentum = v.get<double>();
      else if (key == "w_weight_decay") c.w_weight_decay = v.get<double>();
      else if (key == "alpha_lr") c.alpha_lr = v.get<double>();
      else if (key == "alpha_beta1") c.alpha_beta1 = v.get<double>();
      else if (key == "alpha_beta2") c.alpha_beta2 = v.get<double>();
      else if (key == "alpha_eps") c.alpha_eps = v.get<double>();
      else if (key == "noise_std") c.noise_std = v.get<double>();
      else if (key == "noise_mean") c.noise_mean = v.get<double>();
      else if (key == "w01_weight") c.w01_weight = v.get<double>();
      else if (key == "threshold") c.threshold = v.get<double>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "arch_step_first") c.arch_step_first = v.get<bool>();
      else if (key == "valid_source") {
        const auto s = v.get<std::string>();
        if (s == "valid") c.valid_source = ValidSource::kValidSplit;
        else if (s == "train_half") c.valid_source = ValidSource::kTrainHalf;
        else throw ConfigError("search.valid_source must be \"valid\" or \"train_half\"");
      } else {
        throw ConfigError("unknown key search." + key);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("search: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

AlphaTable::AlphaTable(const SearchSpaceConfig& space, SearchMethod method)
    : method_(method), candidates_(space.candidate_set) {
  for (int l = 0; l < space.num_layers; ++l) {
    auto idx = space.available_candidates(l);
    rows_.push_back(Tensor::zeros({idx.size()}, true));
    row_index_.push_back(std::move(idx));
  }
}

bool AlphaTable::available(std::size_t layer, std::size_t candidate) const {
  const auto& idx = row_index_.at(layer);
  return std::find(idx.begin(), idx.end(), static_cast<int>(candidate)) != idx.end();
}

Real AlphaTable::raw(std::size_t layer, std::size_t candidate) const {
  const auto& idx = row_index_.at(layer);
  const auto it = std::find(idx.begin(), idx.end(), static_cast<int>(candidate));
  if (it == idx.end()) return Real{0};
  return rows_[layer].values()[static_cast<std::size_t>(it - idx.begin())];
}

void AlphaTable::set_raw(std::size_t layer, std::size_t candidate, Real value) {
  const auto& idx = row_index_.at(layer);
  const auto it = std::find(idx.begin(), idx.end(), static_cast<int>(candidate));
  if (it == idx.end()) {
    throw ConfigError("alpha entry (" + std::to_string(layer) + ", " +
                      std::to_string(candidate) + ") is masked at this layer");
  }
  rows_[layer].values()[static_cast<std::size_t>(it - idx.begin())] = value;
}

std::vector<Real> AlphaTable::gates(std::size_t layer) const {
  Tape tape(false);
  const Tensor g = gate_weights(tape, rows_.at(layer), method_);
  std::vector<Real> out(candidates_.size(), Real{0});
  const auto& idx = row_index_[layer];
  for (std::size_t j = 0; j < idx.size(); ++j) out[static_cast<std::size_t>(idx[j])] = g.values()[j];
  return out;
}

AlphaTable AlphaTable::clone() const {
  AlphaTable out = *this;
  for (auto& r : out.rows_) {
    const bool rg = r.requires_grad();
    r = r.clone();
    r.set_requires_grad(rg);
  }
  return out;
}

Tensor gate_weights(Tape& tape, const Tensor& alpha_row, SearchMethod method) {
  return uses_softmax(method) ? softmax(tape, alpha_row) : sigmoid(tape, alpha_row);
}

Tensor noisy_skip_forward(Tape& tape, const Tensor& x, double mean, double std,
                          std::mt19937_64& rng) {
  if (std < 0) throw ConfigError("noise standard deviation must be >= 0");
  if (std == 0 && mean == 0) return x;
  std::vector<Real> noise(x.numel());
  if (std == 0) {
    std::fill(noise.begin(), noise.end(), static_cast<Real>(mean));
  } else {
    std::normal_distribution<double> dist(mean, std);
    for (auto& v : noise) v = static_cast<Real>(dist(rng));
  }
  return add_constant(tape, x, noise);
}

Tensor fairdarts_aux_loss(Tape& tape, std::span<const Tensor> alpha_rows) {
  std::size_t n = 0;
  Tensor total;
  for (const auto& row : alpha_rows) {
    n += row.numel();
    const std::vector<Real> half(row.numel(), Real{-0.5});
    Tensor d = add_constant(tape, sigmoid(tape, row), half);
    Tensor s = sum(tape, mul(tape, d, d));
    total = total.defined() ? add(tape, total, s) : s;
  }
  if (n == 0) throw ShapeError("fairdarts_aux_loss: no alpha entries");
  return scale(tape, total, Real{-1} / static_cast<Real>(n));
}

// ---------------------------------------------------------------------------

Supernet::Supernet(const SearchSpaceConfig& space, const SearchConfig& search)
    : space_((space.validate(), space)),
      search_((search.validate(), search)),
      init_rng_(search.seed),
      stem_(space.input_channels, space.stem_channels, init_rng_),
      tail_(space.channels.back(), space.num_classes, init_rng_),
      alpha_(space, search.method),
      noise_rng_(search.seed ^ 0x6e6f697365ULL) {
  for (int l = 0; l < space.num_layers; ++l) {
    std::vector<std::optional<TcBlock>> entry;
    for (int c : alpha_.row_candidates(static_cast<std::size_t>(l))) {
      const auto& spec = space.candidate_set[static_cast<std::size_t>(c)];
      if (spec.is_skip()) {
        entry.emplace_back(std::nullopt);
      } else {
        entry.emplace_back(std::in_place, spec, space.in_channels(l),
                           space.channels[static_cast<std::size_t>(l)],
                           space.strides[static_cast<std::size_t>(l)], space.se_reduction,
                           init_rng_);
      }
    }
    layers_.push_back(std::move(entry));
  }
}

Tensor Supernet::mixed_layer_forward(Tape& tape, std::size_t layer, const Tensor& x,
                                     bool training) {
  auto& entry = layers_.at(layer);
  const bool noisy = training && search_.method == SearchMethod::kNoisyDarts;
  std::vector<Tensor> outputs;
  outputs.reserve(entry.size());
  for (auto& block : entry) {
    if (block) {
      outputs.push_back(block->forward(tape, x, training));
    } else {
      outputs.push_back(noisy ? noisy_skip_forward(tape, x, search_.noise_mean, search_.noise_std,
                                                   noise_rng_)
                              : x);
    }
  }
  const Tensor gates = gate_weights(tape, alpha_.row(layer), search_.method);
  return weighted_sum(tape, outputs, gates);
}

Tensor Supernet::forward(Tape& tape, const Tensor& inputs, bool training) {
  if (inputs.rank() != 3 || inputs.dim(1) != static_cast<std::size_t>(space_.input_channels)) {
    throw ShapeError("supernet expects [N x " + std::to_string(space_.input_channels) +
                     " x T] input, got " + shape_to_string(inputs.shape()));
  }
  Tensor x = stem_.forward(tape, inputs, training);
  for (std::size_t l = 0; l < layers_.size(); ++l) x = mixed_layer_forward(tape, l, x, training);
  return tail_.forward(tape, x);
}

std::vector<NamedTensor> Supernet::named_parameters() const {
  std::vector<NamedTensor> out;
  stem_.collect(out);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    for (const auto& b : layers_[l]) {
      if (b) b->collect("layer" + std::to_string(l) + "." + b->spec().label(), out);
    }
  }
  tail_.collect(out);
  return out;
}

std::vector<NamedTensor> Supernet::named_buffers() const {
  std::vector<NamedTensor> out;
  stem_.collect_buffers(out);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    for (const auto& b : layers_[l]) {
      if (b) b->collect_buffers("layer" + std::to_string(l) + "." + b->spec().label(), out);
    }
  }
  return out;
}

const TcBlock* Supernet::candidate_block(std::size_t layer, std::size_t candidate) const {
  const auto& idx = alpha_.row_candidates(layer);
  const auto it = std::find(idx.begin(), idx.end(), static_cast<int>(candidate));
  if (it == idx.end()) return nullptr;
  const auto& b = layers_[layer][static_cast<std::size_t>(it - idx.begin())];
  return b ? &*b : nullptr;
}

}  // namespace kwsnas
