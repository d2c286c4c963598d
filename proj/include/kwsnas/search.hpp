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
#include <functional>
#include <iosfwd>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "kwsnas/dataset.hpp"
#include "kwsnas/genotype.hpp"
#include "kwsnas/optim.hpp"
#include "kwsnas/supernet.hpp"

namespace kwsnas {

/// The two disjoint optimizers of the bi-level search: Adam over the alpha
/// rows and momentum SGD over the network weights.
struct SearchOptimizers {
  SearchOptimizers(const Supernet& net, const SearchConfig& config);
  Adam arch;
  SgdMomentum weights;
};

struct StepReport {
  double arch_loss = 0;    // CE on the validation batch, plus w01 * L01 for FairDARTS
  double aux_loss = 0;     // L01 (FairDARTS), else 0
  double weight_loss = 0;  // CE on the training batch
  std::size_t train_correct = 0;
  /// Sum of |change| of every weight across the architecture update and of
  /// every alpha across the weight update. Both are 0 when the partition holds.
  double weight_drift_in_arch_step = 0;
  double alpha_drift_in_weight_step = 0;
};

/// One first-order step: an Adam update of alpha on `valid` and a momentum
/// SGD update of the weights on `train`, in the order set by the config.
/// Throws NumericError on a non-finite loss.
StepReport search_step(Supernet& net, const Batch& train, const Batch& valid,
                       SearchOptimizers& optimizers);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0;
  double train_accuracy = 0;
  double arch_loss = 0;
  double valid_accuracy = 0;  // supernet in inference mode on the arch split
  double mean_max_gate = 0;
  int skip_argmax_layers = 0;
};

struct SearchObserver {
  std::function<void(const StepReport&)> on_step;
  std::function<void(const EpochLog&)> on_epoch;
};

struct SearchResult {
  /// Alpha after initialization and after each epoch (epochs + 1 entries).
  std::vector<AlphaTable> trajectory;
  std::vector<EpochLog> log;
  std::unique_ptr<Supernet> supernet;
};

SearchResult run_search(const SearchSpaceConfig& space, const SearchConfig& config,
                        const FeatureDataset& data, const SearchObserver& observer = {});

struct Derivation {
  Genotype genotype;
  /// FairDARTS layers where no gate reached the threshold and the argmax
  /// was taken instead.
  std::vector<int> fallback_layers;
};

/// DARTS/NoisyDARTS: argmax of each row, ties to the lowest candidate index.
/// FairDARTS: every candidate whose sigmoid gate is >= threshold, in
/// candidate-set order, falling back to the argmax for an empty layer.
Derivation derive_genotype(const AlphaTable& alpha, double threshold = 0.8);

/// One candidate per layer, uniform over the layer's available candidates.
Genotype random_sample_genotype(const SearchSpaceConfig& space, std::mt19937_64& rng);

/// Number of single-path architectures: product over layers of the number
/// of available candidates. Throws ConfigError on 64-bit overflow.
std::uint64_t search_space_cardinality(const SearchSpaceConfig& space);
std::uint64_t search_space_cardinality(std::span<const std::size_t> per_layer_counts);

/// CSV with header epoch,layer,candidate,raw_alpha,gate_value and one row per
/// available (layer, candidate) per trajectory entry. Values use 17
/// significant digits so a read-back reproduces them exactly.
void write_alpha_trajectory(std::ostream& os, std::span<const AlphaTable> trajectory);
void write_alpha_trajectory(const std::string& path, std::span<const AlphaTable> trajectory);
/// Throws ParseError on malformed input and ConfigError when the rows do not
/// fit the search space.
std::vector<AlphaTable> read_alpha_trajectory(std::istream& is, const SearchSpaceConfig& space,
                                              SearchMethod method);
std::vector<AlphaTable> read_alpha_trajectory(const std::string& path,
                                              const SearchSpaceConfig& space,
                                              SearchMethod method);

}  // namespace kwsnas
