// Copyright 2026 The dstdnn Authors.
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
#include <vector>

#include "dstdnn/common.hpp"
#include "dstdnn/spectral.hpp"
#include "dstdnn/wav.hpp"

namespace dstdnn {

struct MelOptions {
  std::size_t n_mels = 80;
  double window_seconds = 0.025;
  double hop_seconds = 0.010;
  double fmin_hz = 20.0;
  double fmax_hz = 7600.0;
  double log_floor = 1e-10;
  bool mean_normalize = true;  // per-utterance, per-channel
};

// Triangular HTK-scale mel filterbank over the power spectrum of Hamming-
// windowed frames; natural log, floored, then per-channel mean subtraction.
// Output shape [1, n_mels, T] with T = floor((len - win)/hop) + 1.
FeatureMap compute_log_mel(const Waveform& w, const MelOptions& opts = {});

// Frame count produced by compute_log_mel for a given sample count.
std::size_t mel_frame_count(std::size_t samples, int sample_rate,
                            double window_seconds, double hop_seconds);

// [lo, hi] support in Hz of one triangular mel filter; used by tests to
// locate the band a tone should land in.
std::pair<double, double> mel_band_support(const MelOptions& opts,
                                           int sample_rate,
                                           std::size_t channel);

// Masks a contiguous block of up to max_time_frames frames and up to
// max_channels channels with the feature-map mean. Shape is preserved.
FeatureMap spec_augment(const FeatureMap& x, std::size_t max_time_frames,
                        std::size_t max_channels, Rng& rng);

// Deterministic core of spec_augment: mask `t` frames starting at t0 and
// `c` channels starting at c0.
FeatureMap apply_spec_augment_mask(const FeatureMap& x, std::size_t t,
                                   std::size_t c, std::size_t t0,
                                   std::size_t c0);

// Deterministic description of one synthetic speaker: a harmonic source
// shaped by formant resonators, a spectral tilt, and a noise floor.
struct SyntheticSpeakerSpec {
  std::string speaker_id;
  double fundamental_freq = 120.0;        // Hz, in [80, 320]
  std::vector<double> formant_centers;    // Hz, strictly increasing
  double spectral_tilt = -6.0;            // dB/octave
  double noise_floor = 0.05;              // linear gain
  std::uint64_t rng_seed = 0;

  void validate(int sample_rate = 16000) const;
};

// Renders one utterance. Two calls with equal (spec, duration, rng state)
// produce bit-identical waveforms; different rng states vary the phase,
// pitch drift, and noise realization but keep the spectral envelope.
Waveform synthesize_utterance(const SyntheticSpeakerSpec& spec,
                              double duration_seconds, Rng& rng,
                              int sample_rate = 16000);

}  // namespace dstdnn
