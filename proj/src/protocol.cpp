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

#include "kwsnas/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "kwsnas/error.hpp"

namespace kwsnas {

AccuracySummary summarize_accuracy(std::span<const double> top1) {
  if (top1.empty()) throw ConfigError("cannot summarize zero runs");
  AccuracySummary s;
  s.runs = top1.size();
  double total = 0;
  for (double v : top1) total += v;
  s.mean = total / static_cast<double>(s.runs);
  if (s.runs > 1) {
    double ss = 0;
    for (double v : top1) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(s.runs - 1));
  }
  s.best = *std::max_element(top1.begin(), top1.end());
  return s;
}

ModelAverage average_models(std::span<const RunMetrics> runs) {
  if (runs.empty()) throw ConfigError("cannot average zero models");
  ModelAverage a;
  std::vector<double> acc;
  for (const auto& r : runs) {
    a.mean_params += static_cast<double>(r.params);
    a.mean_madds += static_cast<double>(r.madds);
    acc.push_back(r.top1);
  }
  a.mean_params /= static_cast<double>(runs.size());
  a.mean_madds /= static_cast<double>(runs.size());
  a.accuracy = summarize_accuracy(acc);
  return a;
}

std::string format_mean_std(const AccuracySummary& s) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f±%.2f", 100.0 * s.mean, 100.0 * s.std);
  return buf;
}

std::string format_count(double value) {
  const char* suffix = "";
  double v = value;
  if (std::fabs(value) >= 1e6) {
    v = value / 1e6;
    suffix = "M";
  } else if (std::fabs(value) >= 1e3) {
    v = value / 1e3;
    suffix = "K";
  }
  char buf[64];
  const int decimals = std::fabs(v) >= 100 ? 0 : (std::fabs(v) >= 10 ? 1 : 2);
  std::snprintf(buf, sizeof(buf), "%.*f%s", decimals, v, suffix);
  return buf;
}

std::string format_table_row(const std::string& name, const ModelAverage& avg) {
  char best[32];
  std::snprintf(best, sizeof(best), "%.1f", 100.0 * avg.accuracy.best);
  return name + " | " + format_count(avg.mean_params) + " | " + format_count(avg.mean_madds) +
         " | " + format_mean_std(avg.accuracy) + " | " + best;
}

}  // namespace kwsnas
