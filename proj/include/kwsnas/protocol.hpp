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
#include <string>

#include "kwsnas/train.hpp"

namespace kwsnas {

/// Repeated-run accuracy summary. std is the sample standard deviation
/// (n - 1 denominator) and is 0 for a single run.
struct AccuracySummary {
  std::size_t runs = 0;
  double mean = 0;
  double std = 0;
  double best = 0;
};

AccuracySummary summarize_accuracy(std::span<const double> top1);

/// Averages over several independently searched models: mean params, mean
/// madds and the accuracy summary of their top-1 values.
struct ModelAverage {
  AccuracySummary accuracy;
  double mean_params = 0;
  double mean_madds = 0;
};

ModelAverage average_models(std::span<const RunMetrics> runs);

/// "96.49±0.18": percentages with two decimals.
std::string format_mean_std(const AccuracySummary& s);
/// Three significant digits with a K or M suffix: 303012 -> "303K",
/// 13354272 -> "13.4M", 93000 -> "93.0K".
std::string format_count(double value);
/// "name | params | madds | mean±std | best" with best at one decimal.
std::string format_table_row(const std::string& name, const ModelAverage& avg);

}  // namespace kwsnas
