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

#include "kwsnas/experiment.hpp"

#include <cstdlib>
#include <fstream>
#include <iterator>

#include "kwsnas/error.hpp"

namespace kwsnas {

Json to_json(const DataSpec& d) {
  Json j;
  switch (d.kind) {
    case DataSpec::Kind::kSynth:
      j["synth"] = Json{{"n_speakers", d.synth.n_speakers},
                        {"n_clips", d.synth.n_clips},
                        {"seed", d.synth.seed}};
      break;
    case DataSpec::Kind::kRoot:
      j["root"] = d.root;
      break;
    case DataSpec::Kind::kManifest:
      j["manifest"] = d.manifest;
      break;
  }
  j["split_seed"] = d.split.seed;
  j["use_official_lists"] = d.split.use_official_lists;
  return j;
}

Json to_json(const ExperimentConfig& c) {
  return Json{{"space", to_json(c.space)},
              {"search", to_json(c.search)},
              {"train", to_json(c.train)},
              {"data", to_json(c.data)},
              {"output_dir", c.output_dir}};
}

namespace {

DataSpec data_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("data must be an object");
  DataSpec d;
  int sources = 0;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "root") {
        d.kind = DataSpec::Kind::kRoot;
        d.root = v.get<std::string>();
        ++sources;
      } else if (key == "manifest") {
        d.kind = DataSpec::Kind::kManifest;
        d.manifest = v.get<std::string>();
        ++sources;
      } else if (key == "synth") {
        d.kind = DataSpec::Kind::kSynth;
        ++sources;
        for (const auto& [k, s] : v.items()) {
          if (k == "n_speakers") d.synth.n_speakers = s.get<int>();
          else if (k == "n_clips") d.synth.n_clips = s.get<int>();
          else if (k == "seed") d.synth.seed = s.get<std::uint64_t>();
          else throw ConfigError("unknown key data.synth." + k);
        }
      } else if (key == "split_seed") {
        d.split.seed = v.get<std::uint64_t>();
      } else if (key == "use_official_lists") {
        d.split.use_official_lists = v.get<bool>();
      } else {
        throw ConfigError("unknown key data." + key);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("data: ") + e.what());
  }
  if (sources > 1) throw ConfigError("data: give exactly one of root, manifest, synth");
  if (d.synth.n_speakers < 1 || d.synth.n_clips < kNumClasses) {
    throw ConfigError("data.synth needs n_speakers >= 1 and n_clips >= 12");
  }
  return d;
}

}  // namespace

ExperimentConfig experiment_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  ExperimentConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "space") c.space = space_from_json(v, c.space);
    else if (key == "search") c.search = search_from_json(v, c.search);
    else if (key == "train") c.train = train_from_json(v, c.train);
    else if (key == "data") c.data = data_from_json(v);
    else if (key == "output_dir") {
      if (!v.is_string()) throw ConfigError("output_dir must be a string");
      c.output_dir = v.get<std::string>();
    } else {
      throw ConfigError("unknown key " + key);
    }
  }
  c.space.validate();
  return c;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return experiment_from_json(j);
}

std::filesystem::path resolve_output_dir(const ExperimentConfig& c) {
  if (const char* env = std::getenv("KWSNAS_OUTPUT_DIR"); env && *env) return env;
  return c.output_dir;
}

void write_resolved_config(const std::filesystem::path& dir, const ExperimentConfig& c) {
  write_text_file(dir / "config.json", to_json(c).dump(2) + "\n");
}

DatasetSplits load_splits(const DataSpec& d) {
  switch (d.kind) {
    case DataSpec::Kind::kRoot:
      return split_dataset(d.root, d.split);
    case DataSpec::Kind::kManifest: {
      const auto clips = read_manifest(d.manifest);
      return split_manifest(clips);
    }
    case DataSpec::Kind::kSynth:
      break;
  }
  const auto clips = synth_dataset(d.synth);
  return split_manifest(clips);
}

FeatureDataset load_features(const DataSpec& d, const MfccConfig& mfcc) {
  return featurize(load_splits(d), mfcc);
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  os << text;
  if (!os) throw DataError("write failed: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace kwsnas
