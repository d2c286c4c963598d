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

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kwsnas/error.hpp"
#include "kwsnas/mfcc.hpp"
#include "kwsnas/tensor.hpp"
#include "kwsnas/wav.hpp"

namespace kwsnas {

inline constexpr std::array<std::string_view, 10> kKeywords = {
    "yes", "no", "up", "down", "left", "right", "on", "off", "stop", "go"};
inline constexpr int kNumClasses = 12;
inline constexpr int kNumKeywords = 10;
inline constexpr int kSilenceLabel = 10;
inline constexpr int kUnknownLabel = 11;

std::string class_name(int label);
inline bool is_keyword(int label) { return label >= 0 && label < kSilenceLabel; }

/// A clip that can be materialized on demand. `source` is a file path or
/// "seed:<n>" for a synthetic clip; `offset` is the first sample taken from
/// the source (used for silence crops out of long background recordings).
struct ClipRef {
  std::string source;
  int label = -1;
  std::string speaker_id;
  std::size_t offset = 0;

  friend bool operator==(const ClipRef&, const ClipRef&) = default;
};

enum class Split { kTrain, kValid, kTest };

struct DatasetSplits {
  std::vector<ClipRef> train, valid, test;
};

struct SplitSpec {
  std::uint64_t seed = 0;  // drives silence crops and unknown sampling
  bool use_official_lists = true;
};

/// Stable 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view text);
/// Bucket 0..9 from the speaker id; buckets 0-7 train, 8 valid, 9 test.
int speaker_bucket(std::string_view speaker_id);
Split split_for_speaker(std::string_view speaker_id);

/// Speaker id of a Speech Commands file name ("<speaker>_nohash_<n>.wav").
std::string speaker_from_filename(std::string_view filename);

/// Splits a Speech Commands style tree into 12-class train/valid/test sets.
/// Official validation_list.txt / testing_list.txt take precedence over
/// speaker hashing when present. Silence clips are one-second crops of
/// _background_noise_ recordings and unknown clips are drawn from the
/// non-keyword words; both are count-matched to the mean keyword count of
/// each split.
DatasetSplits split_dataset(const std::filesystem::path& root,
                            const SplitSpec& spec = {});

/// Speaker-hash split of an already labeled manifest.
DatasetSplits split_manifest(std::span<const ClipRef> clips);

struct SynthSpec {
  int n_speakers = 40;
  int n_clips = 480;
  std::uint64_t seed = 0;
};

struct SynthOptions {
  bool additive_noise = true;
  bool neutral_speaker = false;  // no per-speaker pitch offset
  bool fixed_onset = false;      // no onset jitter
};

/// Balanced synthetic manifest: clip i has label i % 12 and a speaker drawn
/// from n_speakers ids.
std::vector<ClipRef> synth_dataset(const SynthSpec& spec);

/// Samples of one synthetic clip. Every class has its own tone / chirp /
/// noise template; the speaker id shifts pitch by up to +-6%.
std::vector<Real> synth_clip_samples(int label, std::string_view speaker_id,
                                     std::uint64_t clip_seed,
                                     const SynthOptions& options = {});

AudioClip load_clip(const ClipRef& ref);

/// CSV with header "source,label,speaker_id,offset".
void write_manifest(const std::filesystem::path& path,
                    std::span<const ClipRef> clips);
std::vector<ClipRef> read_manifest(const std::filesystem::path& path);

/// Features of one split, each example stored as [n_mfcc x frames].
struct FeatureSplit {
  std::vector<std::vector<Real>> features;
  std::vector<int> labels;
  std::size_t n_mfcc = 40;
  std::size_t frames = 98;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
};

struct FeatureDataset {
  FeatureSplit train, valid, test;
};

FeatureSplit featurize(std::span<const ClipRef> clips, MfccExtractor& extractor);

FeatureDataset featurize(const DatasetSplits& splits, const MfccConfig& config = {});

struct Batch {
  Tensor inputs;  // [N x n_mfcc x frames]
  std::vector<int> labels;
};

Batch make_batch(const FeatureSplit& split, std::span<const std::size_t> indices);

/// Raised by BatchStream::next() when the epoch is exhausted.
class EpochBoundary : public Error {
 public:
  EpochBoundary() : Error("batch stream exhausted: epoch boundary") {}
};

/// Mini-batches over a split in a seeded shuffled order. The final batch of
/// an epoch may be smaller than batch_size.
class BatchStream {
 public:
  BatchStream(const FeatureSplit& split, std::size_t batch_size, bool shuffle,
              std::uint64_t seed);

  Batch next();
  /// Starts a new epoch, reshuffling when enabled.
  void reset();
  std::size_t batches_per_epoch() const;

 private:
  const FeatureSplit* split_;
  std::size_t batch_size_;
  bool shuffle_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

}  // namespace kwsnas
