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

#include "kwsnas/mfcc.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "kwsnas/error.hpp"

namespace kwsnas {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

struct MfccExtractor::Fft {
  explicit Fft(int n) : n(n) {
    in = fftw_alloc_real(static_cast<std::size_t>(n));
    out = fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1));
    plan = fftw_plan_dft_r2c_1d(n, in, out, FFTW_ESTIMATE);
  }
  ~Fft() {
    fftw_destroy_plan(plan);
    fftw_free(in);
    fftw_free(out);
  }
  int n;
  double* in;
  fftw_complex* out;
  fftw_plan plan;
};

MfccExtractor::MfccExtractor(MfccConfig config) : config_(config) {
  if (config_.window <= 0 || config_.hop <= 0 || config_.n_fft < config_.window ||
      config_.n_mels <= 0 || config_.n_mfcc <= 0 || config_.n_mfcc > config_.n_mels ||
      !(config_.f_min < config_.f_max) ||
      config_.f_max > config_.sample_rate / 2.0) {
    throw ConfigError("mfcc: inconsistent configuration");
  }
  const double pi = std::numbers::pi;
  window_.resize(static_cast<std::size_t>(config_.window));
  for (int i = 0; i < config_.window; ++i) {
    window_[i] = 0.5 - 0.5 * std::cos(2.0 * pi * i / config_.window);
  }

  const int n_bins = config_.n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(config_.f_min);
  const double mel_hi = hz_to_mel(config_.f_max);
  std::vector<double> points(static_cast<std::size_t>(config_.n_mels) + 2);
  for (std::size_t i = 0; i < points.size(); ++i) {
    points[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                       static_cast<double>(config_.n_mels + 1));
  }
  filterbank_.assign(static_cast<std::size_t>(config_.n_mels),
                     std::vector<double>(static_cast<std::size_t>(n_bins), 0.0));
  for (int m = 0; m < config_.n_mels; ++m) {
    const double lo = points[m], mid = points[m + 1], hi = points[m + 2];
    edges_.push_back({lo, mid, hi});
    const double area_norm = 2.0 / (hi - lo);
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * config_.sample_rate / config_.n_fft;
      double w = 0.0;
      if (f > lo && f <= mid) {
        w = (f - lo) / (mid - lo);
      } else if (f > mid && f < hi) {
        w = (hi - f) / (hi - mid);
      }
      filterbank_[m][k] = w * area_norm;
    }
  }

  const int n = config_.n_mels;
  dct_.resize(static_cast<std::size_t>(config_.n_mfcc * n));
  for (int k = 0; k < config_.n_mfcc; ++k) {
    const double s = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    for (int i = 0; i < n; ++i) {
      dct_[k * n + i] = s * std::cos(pi * k * (2.0 * i + 1.0) / (2.0 * n));
    }
  }
  fft_ = std::make_unique<Fft>(config_.n_fft);
}

MfccExtractor::~MfccExtractor() = default;

std::size_t MfccExtractor::frame_count(std::size_t n_samples) const {
  const auto win = static_cast<std::size_t>(config_.window);
  if (n_samples < win) return 0;
  return (n_samples - win) / static_cast<std::size_t>(config_.hop) + 1;
}

FeatureMap MfccExtractor::compute(std::span<const Real> samples) {
  const std::size_t frames = frame_count(samples.size());
  if (frames == 0) {
    throw DataError("mfcc: clip of " + std::to_string(samples.size()) +
                    " samples is shorter than one window");
  }
  const auto n_mels = static_cast<std::size_t>(config_.n_mels);
  const auto n_mfcc = static_cast<std::size_t>(config_.n_mfcc);
  const auto n_bins = static_cast<std::size_t>(config_.n_fft / 2 + 1);
  Tensor out = Tensor::zeros({n_mfcc, frames});
  auto ov = out.values();
  std::vector<double> magnitude(n_bins), log_mel(n_mels);
  for (std::size_t f = 0; f < frames; ++f) {
    const std::size_t start = f * static_cast<std::size_t>(config_.hop);
    std::fill(fft_->in, fft_->in + config_.n_fft, 0.0);
    for (std::size_t i = 0; i < window_.size(); ++i) {
      fft_->in[i] = static_cast<double>(samples[start + i]) * window_[i];
    }
    fftw_execute(fft_->plan);
    for (std::size_t k = 0; k < n_bins; ++k) {
      magnitude[k] = std::hypot(fft_->out[k][0], fft_->out[k][1]);
    }
    for (std::size_t m = 0; m < n_mels; ++m) {
      double e = 0.0;
      const auto& row = filterbank_[m];
      for (std::size_t k = 0; k < n_bins; ++k) e += row[k] * magnitude[k];
      log_mel[m] = std::log(std::max(e, config_.log_floor));
    }
    for (std::size_t c = 0; c < n_mfcc; ++c) {
      double acc = 0.0;
      for (std::size_t m = 0; m < n_mels; ++m) acc += dct_[c * n_mels + m] * log_mel[m];
      ov[c * frames + f] = static_cast<Real>(acc);
    }
  }
  return FeatureMap{out};
}

FeatureMap compute_mfcc(const AudioClip& clip, const MfccConfig& config) {
  if (clip.sample_rate != config.sample_rate) {
    throw DataError("mfcc: clip sample_rate=" + std::to_string(clip.sample_rate) +
                    " does not match " + std::to_string(config.sample_rate));
  }
  MfccExtractor extractor(config);
  return extractor.compute(clip.samples);
}

}  // namespace kwsnas
