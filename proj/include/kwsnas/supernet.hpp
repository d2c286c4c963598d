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
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kwsnas/blocks.hpp"
#include "kwsnas/genotype.hpp"
#include "kwsnas/tensor.hpp"

namespace kwsnas {

enum class SearchMethod { kDarts, kFairDarts, kNoisyDarts };

std::string method_name(SearchMethod method);
/// Accepts "darts", "fairdarts", "noisydarts" (case-insensitive); the error
/// message lists the valid names.
SearchMethod parse_method(std::string_view name);
inline bool uses_softmax(SearchMethod m) { return m != SearchMethod::kFairDarts; }

/// Where the architecture step draws its batches from.
enum class ValidSource { kValidSplit, kTrainHalf };

struct SearchConfig {
  SearchMethod method = SearchMethod::kDarts;
  int epochs = 50;
  int batch_size = 128;
  double w_lr = 0.1;
  double w_momentum = 0.9;
  double w_weight_decay = 3e-4;
  double alpha_lr = 3e-4;
  double alpha_beta1 = 0.5;
  double alpha_beta2 = 0.999;
  double alpha_eps = 1e-8;
  double noise_std = 0.1;   // NoisyDARTS only
  double noise_mean = 0.0;  // NoisyDARTS only
  double w01_weight = 0.2;  // FairDARTS only
  double threshold = 0.8;   // FairDARTS only
  std::uint64_t seed = 0;
  bool arch_step_first = true;
  ValidSource valid_source = ValidSource::kValidSplit;

  void validate() const;
};

Json to_json(const SearchConfig& config);
SearchConfig search_from_json(const Json& j, const SearchConfig& base = {});

/// Architectural parameters, one row per searchable layer and one column per
/// entry of the candidate set. Candidates that cannot appear at a layer
/// (skip where the shape changes) are masked out: they hold no parameter and
/// report a raw value and gate of 0.
class AlphaTable {
 public:
  AlphaTable() = default;
  AlphaTable(const SearchSpaceConfig& space, SearchMethod method);

  std::size_t num_layers() const { return rows_.size(); }
  std::size_t num_candidates() const { return candidates_.size(); }
  SearchMethod method() const { return method_; }
  const std::vector<CandidateSpec>& candidates() const { return candidates_; }

  bool available(std::size_t layer, std::size_t candidate) const;
  Real raw(std::size_t layer, std::size_t candidate) const;
  void set_raw(std::size_t layer, std::size_t candidate, Real value);
  /// softmax (DARTS, NoisyDARTS) or sigmoid (FairDARTS) of one row,
  /// expanded to num_candidates() with zeros at masked positions.
  std::vector<Real> gates(std::size_t layer) const;

  /// Parameter tensor of a row, holding only the available candidates.
  const Tensor& row(std::size_t layer) const { return rows_.at(layer); }
  /// Candidate index of each entry of row(layer).
  const std::vector<int>& row_candidates(std::size_t layer) const { return row_index_.at(layer); }
  std::vector<Tensor> tensors() const { return rows_; }

  /// Deep copy with independent storage.
  AlphaTable clone() const;

 private:
  SearchMethod method_ = SearchMethod::kDarts;
  std::vector<CandidateSpec> candidates_;
  std::vector<Tensor> rows_;
  std::vector<std::vector<int>> row_index_;
};

/// Gate values of one alpha row: softmax or sigmoid per method.
Tensor gate_weights(Tape& tape, const Tensor& alpha_row, SearchMethod method);

/// x + eps with eps ~ N(mean, std) drawn per element from `rng`. The noise is
/// a constant for differentiation. std == 0 and mean == 0 return x itself.
/// Throws ConfigError when std < 0.
Tensor noisy_skip_forward(Tape& tape, const Tensor& x, double mean, double std,
                          std::mt19937_64& rng);

/// Zero-one loss pushing sigmoid gates to 0 or 1:
///   L01 = -(1/N) * sum_o (sigmoid(alpha_o) - 0.5)^2
/// taken jointly over every entry of the given rows.
Tensor fairdarts_aux_loss(Tape& tape, std::span<const Tensor> alpha_rows);

/// Over-parameterized network: every searchable layer holds one block per
/// available candidate, mixed by the gated alpha row.
class Supernet : public Model {
 public:
  Supernet(const SearchSpaceConfig& space, const SearchConfig& search);

  Tensor forward(Tape& tape, const Tensor& inputs, bool training) override;
  /// Network weights only; the alpha rows are exposed by alpha().
  std::vector<NamedTensor> named_parameters() const override;
  std::vector<NamedTensor> named_buffers() const override;

  /// Weighted sum of every candidate's output at `layer`. Skip candidates
  /// receive Gaussian noise when the method is NoisyDARTS and training.
  Tensor mixed_layer_forward(Tape& tape, std::size_t layer, const Tensor& x, bool training);

  AlphaTable& alpha() { return alpha_; }
  const AlphaTable& alpha() const { return alpha_; }
  const SearchSpaceConfig& space() const { return space_; }
  const SearchConfig& search_config() const { return search_; }
  /// Block behind (layer, candidate index); nullptr for skip or masked.
  const TcBlock* candidate_block(std::size_t layer, std::size_t candidate) const;

 private:
  SearchSpaceConfig space_;
  SearchConfig search_;
  std::mt19937_64 init_rng_;
  Stem stem_;
  // layers_[l][j] pairs with alpha_.row_candidates(l)[j]
  std::vector<std::vector<std::optional<TcBlock>>> layers_;
  Tail tail_;
  AlphaTable alpha_;
  std::mt19937_64 noise_rng_;
};

}  // namespace kwsnas
