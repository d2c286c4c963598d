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

#include <filesystem>
#include <string>

#include "kwsnas/dataset.hpp"
#include "kwsnas/genotype.hpp"
#include "kwsnas/mfcc.hpp"
#include "kwsnas/supernet.hpp"
#include "kwsnas/train.hpp"

namespace kwsnas {

/// Where clips come from: a Speech Commands tree, a manifest CSV (split by
/// speaker hash) or the synthetic generator.
struct DataSpec {
  enum class Kind { kSynth, kRoot, kManifest };
  Kind kind = Kind::kSynth;
  std::string root;
  std::string manifest;
  SynthSpec synth;
  SplitSpec split;
};

struct ExperimentConfig {
  SearchSpaceConfig space = SearchSpaceConfig::desk_scale();
  SearchConfig search;
  TrainConfig train;
  DataSpec data;
  std::string output_dir = "out";
};

Json to_json(const DataSpec& data);
Json to_json(const ExperimentConfig& config);
/// Missing sections and keys keep their defaults; unknown keys are rejected
/// with ConfigError.
ExperimentConfig experiment_from_json(const Json& j);
ExperimentConfig load_experiment(const std::filesystem::path& path);

/// output_dir, unless KWSNAS_OUTPUT_DIR is set in the environment.
std::filesystem::path resolve_output_dir(const ExperimentConfig& config);
/// Writes the fully resolved config as config.json under `dir`.
void write_resolved_config(const std::filesystem::path& dir, const ExperimentConfig& config);

DatasetSplits load_splits(const DataSpec& data);
/// Featurizes every split. No per-coefficient normalization is applied.
FeatureDataset load_features(const DataSpec& data, const MfccConfig& mfcc = {});

/// Writes `text` to `path`, creating parent directories.
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace kwsnas
