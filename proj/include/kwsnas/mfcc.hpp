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
#include <memory>
#include <span>
#include <vector>

#include "kwsnas/tensor.hpp"
#include "kwsnas/wav.hpp"

namespace kwsnas {

struct MfccConfig {
  int sample_rate = kSampleRate;
  int window = 480;  // 30 ms
  int hop = 160;     // 10 ms
  int n_fft = 512;
  int n_mels = 40;
  int n_mfcc = 40;
  double f_min = 20.0;
  double f_max = 8000.0;
  double log_floor = 1e-10;
};

/// Cepstral features laid out as [n_mfcc x frames].
struct FeatureMap {
  Tensor mfcc;
  std::size_t frames() const { return mfcc.dim(1); }
};

/// Hann-windowed magnitude spectrum -> triangular area-normalized mel bank
/// -> log -> orthonormal DCT-II. Frames are taken without padding, so a
/// one-second clip yields floor((16000 - 480) / 160) + 1 = 98 frames.
///
/// Holds an FFT plan and scratch buffers; not safe to share across threads.
class MfccExtractor {
 public:
  explicit MfccExtractor(MfccConfig config = {});
  ~MfccExtractor();
  MfccExtractor(const MfccExtractor&) = delete;
  MfccExtractor& operator=(const MfccExtractor&) = delete;

  FeatureMap compute(std::span<const Real> samples);
  std::size_t frame_count(std::size_t n_samples) const;

  const MfccConfig& config() const { return config_; }
  /// [n_mels][n_fft / 2 + 1] filter weights.
  const std::vector<std::vector<double>>& filterbank() const { return filterbank_; }
  /// Edge frequencies of each triangle: lower, centre, upper.
  const std::vector<std::array<double, 3>>& band_edges() const { return edges_; }

 private:
  struct Fft;
  MfccConfig config_;
  std::vector<double> window_;
  std::vector<std::vector<double>> filterbank_;
  std::vector<std::array<double, 3>> edges_;
  std::vector<double> dct_;  // [n_mfcc x n_mels]
  std::unique_ptr<Fft> fft_;
};

FeatureMap compute_mfcc(const AudioClip& clip, const MfccConfig& config = {});

double hz_to_mel(double hz);
double mel_to_hz(double mel);

}  // namespace kwsnas
