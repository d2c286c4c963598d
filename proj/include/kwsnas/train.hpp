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
#include <span>
#include <string>
#include <vector>

#include "kwsnas/blocks.hpp"
#include "kwsnas/dataset.hpp"
#include "kwsnas/genotype.hpp"

namespace kwsnas {

/// Momentum SGD with step decay: lr is multiplied by `decay` once each
/// epoch index reaches floor(milestone * epochs).
struct TrainConfig {
  int epochs = 100;
  int batch_size = 128;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::vector<double> milestones{0.6, 0.8};
  double decay = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

Json to_json(const TrainConfig& config);
TrainConfig train_from_json(const Json& j, const TrainConfig& base = {});
/// Learning rate for a 0-based epoch index.
double lr_at_epoch(const TrainConfig& config, int epoch);

struct TrainEpochLog {
  int epoch = 0;
  double lr = 0;
  double train_loss = 0;
  double train_accuracy = 0;
  double valid_loss = 0;
  double valid_accuracy = 0;
};

struct TrainResult {
  std::vector<TrainEpochLog> log;
  int best_epoch = 0;  // 1-based; 0 when no epoch ran
  double best_valid_accuracy = 0;
};

/// Cross-entropy training of `model`. After every epoch the model is scored
/// on the validation split and the best-scoring weights are restored at the
/// end (the last epoch wins when there is no validation split). Throws
/// NumericError carrying the epoch and last finite loss on divergence.
TrainResult train_model(Model& model, const FeatureDataset& data, const TrainConfig& config,
                        const std::function<void(const TrainEpochLog&)>& on_epoch = {});

/// Index of the largest value; ties go to the lowest index.
std::size_t argmax(std::span<const Real> values);

/// Row-wise softmax of the logits for every clip, in split order.
std::vector<std::vector<Real>> predict_probabilities(Model& model, const FeatureSplit& split,
                                                     std::size_t batch_size = 256);
/// Mean cross-entropy in inference mode.
double evaluate_loss(Model& model, const FeatureSplit& split, std::size_t batch_size = 256);
/// Fraction of clips whose argmax logit matches the label. Throws DataError
/// on an empty split.
double evaluate_top1(Model& model, const FeatureSplit& split, std::size_t batch_size = 256);
double top1_from_scores(std::span<const std::vector<Real>> scores, std::span<const int> labels);

struct RocPoint {
  double threshold = 0;
  double fpr = 0;
  double fnr = 0;
};

/// Keyword detection curve. Positives are the ten keyword classes, negatives
/// silence and unknown. The score of a clip is its largest keyword
/// posterior. A positive is detected when score >= threshold and the argmax
/// class is its label; a negative triggers when score >= threshold.
/// Without explicit thresholds the sweep is 0, every distinct score and the
/// smallest value above 1, in descending order, so FPR never decreases down
/// the list. Throws DataError unless both positives and negatives exist.
std::vector<RocPoint> roc_from_scores(std::span<const std::vector<Real>> probabilities,
                                      std::span<const int> labels,
                                      std::span<const double> thresholds = {});
std::vector<RocPoint> compute_roc(Model& model, const FeatureSplit& split,
                                  std::span<const double> thresholds = {});

struct RunMetrics {
  std::string run_id;
  std::uint64_t seed = 0;
  double top1 = 0;
  std::int64_t params = 0;
  std::int64_t madds = 0;
  std::vector<RocPoint> roc;
};

/// CSV: run_id,seed,top1,params,madds
void write_metrics_csv(std::ostream& os, std::span<const RunMetrics> runs);
/// CSV: threshold,fpr,fnr
void write_roc_csv(std::ostream& os, std::span<const RocPoint> roc);

}  // namespace kwsnas
