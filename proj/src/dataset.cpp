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

#include "kwsnas/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

namespace kwsnas {

namespace fs = std::filesystem;

std::string class_name(int label) {
  if (is_keyword(label)) return std::string(kKeywords[static_cast<std::size_t>(label)]);
  if (label == kSilenceLabel) return "_silence_";
  if (label == kUnknownLabel) return "_unknown_";
  throw DataError("label " + std::to_string(label) + " out of range [0, 12)");
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

int speaker_bucket(std::string_view speaker_id) {
  return static_cast<int>(fnv1a64(speaker_id) % 10);
}

Split split_for_speaker(std::string_view speaker_id) {
  const int b = speaker_bucket(speaker_id);
  if (b < 8) return Split::kTrain;
  return b == 8 ? Split::kValid : Split::kTest;
}

std::string speaker_from_filename(std::string_view filename) {
  const auto pos = filename.find("_nohash_");
  if (pos != std::string_view::npos) return std::string(filename.substr(0, pos));
  const auto us = filename.find('_');
  const auto dot = filename.rfind('.');
  return std::string(filename.substr(0, std::min(us, dot)));
}

namespace {

std::vector<ClipRef>& split_ref(DatasetSplits& s, Split which) {
  switch (which) {
    case Split::kTrain: return s.train;
    case Split::kValid: return s.valid;
    default: return s.test;
  }
}

const char* split_name(Split which) {
  switch (which) {
    case Split::kTrain: return "train";
    case Split::kValid: return "valid";
    default: return "test";
  }
}

std::set<std::string> read_list(const fs::path& path) {
  std::set<std::string> out;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) out.insert(line);
  }
  return out;
}

std::vector<fs::path> sorted_entries(const fs::path& dir, bool dirs) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (dirs ? e.is_directory() : (e.is_regular_file() && e.path().extension() == ".wav")) {
      out.push_back(e.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

DatasetSplits split_dataset(const fs::path& root, const SplitSpec& spec) {
  if (!fs::is_directory(root)) {
    throw DataError("dataset root " + root.string() + " is not a directory");
  }
  std::vector<std::string> missing;
  for (auto kw : kKeywords) {
    if (!fs::is_directory(root / kw)) missing.emplace_back(kw);
  }
  if (!missing.empty()) {
    std::string msg = "dataset root " + root.string() + " is missing keyword directories:";
    for (const auto& m : missing) msg += " " + m;
    throw DataError(msg);
  }

  const fs::path val_list = root / "validation_list.txt";
  const fs::path test_list = root / "testing_list.txt";
  const bool official = spec.use_official_lists && fs::exists(val_list) &&
                        fs::exists(test_list);
  std::set<std::string> val_set, test_set;
  if (official) {
    val_set = read_list(val_list);
    test_set = read_list(test_list);
  }

  DatasetSplits out;
  // unknown pools: split -> word -> clips
  std::array<std::map<std::string, std::vector<ClipRef>>, 3> unknown;
  for (const auto& dir : sorted_entries(root, true)) {
    const std::string word = dir.filename().string();
    if (word.empty() || word[0] == '_') continue;
    const auto kw = std::find(kKeywords.begin(), kKeywords.end(), word);
    const int label = kw == kKeywords.end()
                          ? kUnknownLabel
                          : static_cast<int>(kw - kKeywords.begin());
    for (const auto& file : sorted_entries(dir, false)) {
      const std::string name = file.filename().string();
      const std::string rel = word + "/" + name;
      ClipRef ref{file.string(), label, speaker_from_filename(name), 0};
      Split which;
      if (official) {
        which = val_set.count(rel) ? Split::kValid
                : test_set.count(rel) ? Split::kTest
                                      : Split::kTrain;
      } else {
        which = split_for_speaker(ref.speaker_id);
      }
      if (label == kUnknownLabel) {
        unknown[static_cast<std::size_t>(which)][word].push_back(std::move(ref));
      } else {
        split_ref(out, which).push_back(std::move(ref));
      }
    }
  }

  std::vector<std::pair<fs::path, std::size_t>> noise;
  if (fs::is_directory(root / "_background_noise_")) {
    for (const auto& f : sorted_entries(root / "_background_noise_", false)) {
      noise.emplace_back(f, read_wav_samples(f).size());
    }
  }

  for (Split which : {Split::kTrain, Split::kValid, Split::kTest}) {
    auto& clips = split_ref(out, which);
    const auto idx = static_cast<std::size_t>(which);
    const auto target = static_cast<std::size_t>(
        std::lround(static_cast<double>(clips.size()) / kKeywords.size()));
    std::mt19937_64 rng(splitmix64(spec.seed * 3 + idx));

    auto& pool = unknown[idx];
    for (std::size_t i = 0; i < target; ++i) {
      std::vector<std::string> words;
      for (const auto& [w, v] : pool) {
        if (!v.empty()) words.push_back(w);
      }
      if (words.empty()) break;
      auto& v = pool[words[std::uniform_int_distribution<std::size_t>(0, words.size() - 1)(rng)]];
      const std::size_t pick = std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng);
      clips.push_back(v[pick]);
      v.erase(v.begin() + static_cast<std::ptrdiff_t>(pick));
    }

    const std::string silence_speaker = std::string("_silence_") + split_name(which);
    for (std::size_t i = 0; i < target; ++i) {
      if (noise.empty()) {
        clips.push_back({"zeros", kSilenceLabel, silence_speaker, 0});
        continue;
      }
      const auto& [path, len] =
          noise[std::uniform_int_distribution<std::size_t>(0, noise.size() - 1)(rng)];
      const std::size_t max_off = len > kClipSamples ? len - kClipSamples : 0;
      const std::size_t off = std::uniform_int_distribution<std::size_t>(0, max_off)(rng);
      clips.push_back({path.string(), kSilenceLabel, silence_speaker, off});
    }
  }
  return out;
}

DatasetSplits split_manifest(std::span<const ClipRef> clips) {
  DatasetSplits out;
  for (const auto& c : clips) split_ref(out, split_for_speaker(c.speaker_id)).push_back(c);
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic keywords

std::vector<ClipRef> synth_dataset(const SynthSpec& spec) {
  if (spec.n_clips < kNumClasses) {
    throw ConfigError("synth: n_clips must be >= 12, got " + std::to_string(spec.n_clips));
  }
  if (spec.n_speakers < 1) throw ConfigError("synth: n_speakers must be >= 1");
  std::mt19937_64 rng(splitmix64(spec.seed));
  std::uniform_int_distribution<int> pick_speaker(0, spec.n_speakers - 1);
  std::vector<ClipRef> out;
  out.reserve(static_cast<std::size_t>(spec.n_clips));
  for (int i = 0; i < spec.n_clips; ++i) {
    char speaker[32];
    std::snprintf(speaker, sizeof(speaker), "spk%04d", pick_speaker(rng));
    const std::uint64_t clip_seed = splitmix64(spec.seed ^ (0x5851f42d4c957f2dULL * (i + 1)));
    out.push_back({"seed:" + std::to_string(clip_seed), i % kNumClasses, speaker, 0});
  }
  return out;
}

std::vector<Real> synth_clip_samples(int label, std::string_view speaker_id,
                                     std::uint64_t clip_seed,
                                     const SynthOptions& options) {
  if (label < 0 || label >= kNumClasses) {
    throw DataError("synth: label " + std::to_string(label) + " out of range");
  }
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  constexpr double fs_hz = kSampleRate;
  std::mt19937_64 rng(clip_seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const double u = static_cast<double>(fnv1a64(speaker_id) % 10007) / 10006.0;
  const double pitch = options.neutral_speaker ? 1.0 : 1.0 + 0.06 * (2.0 * u - 1.0);
  const double jitter = uni(rng);
  const double onset = options.fixed_onset ? 0.2 : 0.1 + 0.2 * jitter;
  const double duration = 0.55;
  const double amp = 0.25 + 0.15 * uni(rng);
  const double phase0 = kTwoPi * uni(rng);

  std::vector<Real> out(kClipSamples, Real{0});
  if (label == kSilenceLabel) {
    if (options.additive_noise) {
      for (auto& s : out) s = static_cast<Real>(0.003 * gauss(rng));
    }
    return out;
  }

  // Tone components as (start Hz, end Hz, relative amplitude).
  struct Partial { double f0, f1, a; };
  std::vector<Partial> partials;
  bool gated = false;
  switch (label) {
    case 0: partials = {{400, 400, 1}}; break;
    case 1: partials = {{900, 900, 1}}; break;
    case 2: partials = {{1600, 1600, 1}}; break;
    case 3: partials = {{2800, 2800, 1}}; break;
    case 4: partials = {{300, 1500, 1}}; break;
    case 5: partials = {{2500, 600, 1}}; break;
    case 6: partials = {{500, 500, 0.7071}, {2000, 2000, 0.7071}}; break;
    case 7: partials = {{700, 700, 0.7071}, {3500, 3500, 0.7071}}; break;
    case 8: partials = {{1100, 1100, 0.87}, {2200, 2200, 0.44}, {3300, 3300, 0.22}}; break;
    case 9: partials = {{600, 600, 1}}; gated = true; break;
    default: break;  // unknown: noise burst
  }

  const auto first = static_cast<std::size_t>(onset * fs_hz);
  const auto len = static_cast<std::size_t>(duration * fs_hz);
  const double ramp = 0.03 * fs_hz;
  std::vector<double> phase(partials.size(), phase0);
  for (std::size_t i = 0; i < len && first + i < kClipSamples; ++i) {
    const double t = static_cast<double>(i) / fs_hz;
    const double pos = static_cast<double>(i);
    double env = 1.0;
    if (pos < ramp) env = 0.5 - 0.5 * std::cos(std::numbers::pi * pos / ramp);
    if (pos > len - ramp) env = 0.5 - 0.5 * std::cos(std::numbers::pi * (len - pos) / ramp);
    if (gated && std::fmod(t * 6.0, 1.0) >= 0.5) env = 0.0;
    double v = 0.0;
    if (partials.empty()) {
      v = 0.6 * gauss(rng);
    } else {
      for (std::size_t p = 0; p < partials.size(); ++p) {
        const double f = pitch * (partials[p].f0 + (partials[p].f1 - partials[p].f0) * t / duration);
        phase[p] += kTwoPi * f / fs_hz;
        v += partials[p].a * std::sin(phase[p]);
      }
    }
    out[first + i] = static_cast<Real>(amp * env * v);
  }
  if (options.additive_noise) {
    for (auto& s : out) s += static_cast<Real>(0.01 * gauss(rng));
  }
  for (auto& s : out) s = std::clamp(s, Real{-1}, Real{1});
  return out;
}

AudioClip load_clip(const ClipRef& ref) {
  AudioClip clip;
  clip.label = ref.label;
  clip.speaker_id = ref.speaker_id;
  if (ref.source.rfind("seed:", 0) == 0) {
    std::uint64_t seed = 0;
    try {
      seed = std::stoull(ref.source.substr(5));
    } catch (const std::exception&) {
      throw DataError("bad synthetic clip source '" + ref.source + "'");
    }
    clip.samples = synth_clip_samples(ref.label, ref.speaker_id, seed);
  } else if (ref.source == "zeros") {
    clip.samples.assign(kClipSamples, Real{0});
  } else {
    const auto all = read_wav_samples(ref.source);
    const std::size_t off = std::min(ref.offset, all.size());
    clip.samples = fit_to_clip_length(std::span<const Real>(all).subspan(off));
  }
  return clip;
}

void write_manifest(const fs::path& path, std::span<const ClipRef> clips) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest " + path.string());
  out << "source,label,speaker_id,offset\n";
  for (const auto& c : clips) {
    if (c.source.find(',') != std::string::npos || c.speaker_id.find(',') != std::string::npos) {
      throw DataError("manifest fields may not contain commas: " + c.source);
    }
    out << c.source << ',' << c.label << ',' << c.speaker_id << ',' << c.offset << '\n';
  }
}

std::vector<ClipRef> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "source,label,speaker_id,offset") {
    throw ParseError("manifest " + path.string() + ": unexpected header", 0);
  }
  std::vector<ClipRef> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 4) {
      throw DataError("manifest " + path.string() + " line " + std::to_string(line_no) +
                      ": expected 4 fields");
    }
    try {
      out.push_back({f[0], std::stoi(f[1]), f[2], static_cast<std::size_t>(std::stoull(f[3]))});
    } catch (const std::exception&) {
      throw DataError("manifest " + path.string() + " line " + std::to_string(line_no) +
                      ": bad number");
    }
    if (out.back().label < 0 || out.back().label >= kNumClasses) {
      throw DataError("manifest " + path.string() + " line " + std::to_string(line_no) +
                      ": label out of range");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Features and batches

FeatureSplit featurize(std::span<const ClipRef> clips, MfccExtractor& extractor) {
  FeatureSplit out;
  out.n_mfcc = static_cast<std::size_t>(extractor.config().n_mfcc);
  out.frames = extractor.frame_count(kClipSamples);
  for (const auto& ref : clips) {
    const AudioClip clip = load_clip(ref);
    FeatureMap fm = extractor.compute(clip.samples);
    auto v = fm.mfcc.values();
    out.features.emplace_back(v.begin(), v.end());
    out.labels.push_back(ref.label);
  }
  return out;
}

FeatureDataset featurize(const DatasetSplits& splits, const MfccConfig& config) {
  MfccExtractor extractor(config);
  return {featurize(splits.train, extractor), featurize(splits.valid, extractor),
          featurize(splits.test, extractor)};
}

Batch make_batch(const FeatureSplit& split, std::span<const std::size_t> indices) {
  const std::size_t per = split.n_mfcc * split.frames;
  Tensor inputs = Tensor::zeros({indices.size(), split.n_mfcc, split.frames});
  auto v = inputs.values();
  Batch b;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto& f = split.features.at(indices[i]);
    if (f.size() != per) throw ShapeError("feature size mismatch in split");
    std::copy(f.begin(), f.end(), v.begin() + static_cast<std::ptrdiff_t>(i * per));
    b.labels.push_back(split.labels[indices[i]]);
  }
  b.inputs = inputs;
  return b;
}

BatchStream::BatchStream(const FeatureSplit& split, std::size_t batch_size,
                         bool shuffle, std::uint64_t seed)
    : split_(&split), batch_size_(batch_size), shuffle_(shuffle), rng_(seed) {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (split.empty()) throw DataError("cannot batch an empty split");
  order_.resize(split.size());
  reset();
}

void BatchStream::reset() {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  if (shuffle_) std::shuffle(order_.begin(), order_.end(), rng_);
  cursor_ = 0;
}

Batch BatchStream::next() {
  if (cursor_ >= order_.size()) throw EpochBoundary();
  const std::size_t n = std::min(batch_size_, order_.size() - cursor_);
  Batch b = make_batch(*split_, std::span<const std::size_t>(order_).subspan(cursor_, n));
  cursor_ += n;
  return b;
}

std::size_t BatchStream::batches_per_epoch() const {
  return (order_.size() + batch_size_ - 1) / batch_size_;
}

}  // namespace kwsnas
