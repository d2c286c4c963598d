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
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace kwsnas {

using Json = nlohmann::ordered_json;

enum class CandidateKind { kTc, kSkip };

/// One choice at a searchable layer: a TC-ResNet block (kernel, optional SE)
/// or an identity skip.
struct CandidateSpec {
  CandidateKind kind = CandidateKind::kTc;
  int kernel = 3;
  bool se = false;

  static CandidateSpec tc(int kernel, bool se = false) {
    return {CandidateKind::kTc, kernel, se};
  }
  static CandidateSpec skip() { return {CandidateKind::kSkip, 0, false}; }

  bool is_skip() const { return kind == CandidateKind::kSkip; }
  /// "C5", "C7SE" or "skip".
  std::string label() const;
  static CandidateSpec from_label(std::string_view label);
  void validate() const;

  friend bool operator==(const CandidateSpec&, const CandidateSpec&) = default;
};

inline constexpr int kAllowedKernels[] = {3, 5, 7, 9};

/// C3 C5 C7 C9 C3SE C5SE C7SE C9SE skip.
std::vector<CandidateSpec> default_candidate_set();

/// Channel count times multiplier, rounded half up.
int scale_channels(int base, double multiplier);

struct SearchSpaceConfig {
  int num_layers = 9;
  std::vector<int> channels;
  std::vector<int> strides;
  int input_channels = 40;
  int stem_channels = 24;
  int num_classes = 12;
  std::vector<CandidateSpec> candidate_set;
  int se_reduction = 4;

  /// Nine layers, channels [24,24,36,36,48,48,72,72,72] x 1.5, strides
  /// [2,1,2,1,2,1,2,1,1], stem 16 x 1.5.
  static SearchSpaceConfig standard();
  /// Same topology at a width that searches in seconds on one core.
  static SearchSpaceConfig desk_scale();

  /// Throws ConfigError describing the first violated invariant.
  void validate() const;
  int in_channels(int layer) const;
  /// Skip needs stride 1 and equal in/out channels.
  bool skip_allowed(int layer) const;
  /// Indices into candidate_set usable at this layer.
  std::vector<int> available_candidates(int layer) const;
  /// 16 hex digits identifying the configuration.
  std::string hash() const;

  friend bool operator==(const SearchSpaceConfig&, const SearchSpaceConfig&) = default;
};

Json to_json(const SearchSpaceConfig& config);
/// Missing keys keep their defaults from `base`; unknown keys are rejected.
SearchSpaceConfig space_from_json(const Json& j,
                                  const SearchSpaceConfig& base = SearchSpaceConfig::standard());

/// Per searchable layer, the set of selected candidates in candidate-set order.
struct Genotype {
  std::vector<std::vector<CandidateSpec>> layers;

  friend bool operator==(const Genotype&, const Genotype&) = default;
};

/// Throws ConfigError if the genotype does not fit the space (layer count,
/// empty entries, skip where the shape changes, kernels outside the set).
void validate_genotype(const Genotype& genotype, const SearchSpaceConfig& space);

/// Stable text form: {"layers": [[{kind, kernel?, se?}, ...], ...], "config_hash"}
/// with one line per layer.
std::string serialize_genotype(const Genotype& genotype, const SearchSpaceConfig& space);

struct GenotypeFile {
  Genotype genotype;
  std::string config_hash;
};
/// Throws ParseError on malformed text.
GenotypeFile parse_genotype(std::string_view text);

/// Compact form "C3SE C5+C7 skip ..." with '+' joining multi-choice layers.
std::string genotype_to_string(const Genotype& genotype);
Genotype genotype_from_string(std::string_view text);

}  // namespace kwsnas
