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

#include "dstdnn/frontend.hpp"

#include <algorithm>
#include <cmath>

#include "dstdnn/fft.hpp"

namespace dstdnn {

namespace {

constexpr double kPi = 3.14159265358979323846;

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Edge frequencies of the n_mels+2 mel grid points.
std::vector<double> mel_edges(const MelOptions& opts) {
  const double mlo = hz_to_mel(opts.fmin_hz);
  const double mhi = hz_to_mel(opts.fmax_hz);
  std::vector<double> hz(opts.n_mels + 2);
  for (std::size_t j = 0; j < hz.size(); ++j) {
    const double m = mlo + (mhi - mlo) * static_cast<double>(j) /
                               static_cast<double>(opts.n_mels + 1);
    hz[j] = mel_to_hz(m);
  }
  return hz;
}

}  // namespace

std::size_t mel_frame_count(std::size_t samples, int sample_rate,
                            double window_seconds, double hop_seconds) {
  const std::size_t win =
      static_cast<std::size_t>(std::lround(window_seconds * sample_rate));
  const std::size_t hop =
      static_cast<std::size_t>(std::lround(hop_seconds * sample_rate));
  if (samples < win) return 0;
  return (samples - win) / hop + 1;
}

std::pair<double, double> mel_band_support(const MelOptions& opts,
                                           int sample_rate,
                                           std::size_t channel) {
  (void)sample_rate;
  if (channel >= opts.n_mels) {
    throw InvalidInputError("mel_band_support: channel out of range");
  }
  const std::vector<double> hz = mel_edges(opts);
  return {hz[channel], hz[channel + 2]};
}

FeatureMap compute_log_mel(const Waveform& w, const MelOptions& opts) {
  if (opts.n_mels < 1) throw InvalidInputError("compute_log_mel: n_mels < 1");
  if (!(opts.window_seconds > opts.hop_seconds && opts.hop_seconds > 0.0)) {
    throw InvalidInputError("compute_log_mel: need win > hop > 0");
  }
  const std::size_t win = static_cast<std::size_t>(
      std::lround(opts.window_seconds * w.sample_rate));
  const std::size_t hop = static_cast<std::size_t>(
      std::lround(opts.hop_seconds * w.sample_rate));
  if (w.samples.size() < win) {
    throw InvalidInputError("compute_log_mel: waveform shorter than a window");
  }
  for (double s : w.samples) {
    if (!std::isfinite(s)) {
      throw InvalidInputError("compute_log_mel: non-finite sample");
    }
  }
  const std::size_t frames = (w.samples.size() - win) / hop + 1;
  const std::size_t nfft = next_pow2(win);
  const std::size_t bins = fft::rfft_bins(nfft);
  const double hz_per_bin =
      static_cast<double>(w.sample_rate) / static_cast<double>(nfft);

  std::vector<double> window(win);
  for (std::size_t i = 0; i < win; ++i) {
    window[i] = 0.54 - 0.46 * std::cos(2.0 * kPi * static_cast<double>(i) /
                                       static_cast<double>(win - 1));
  }

  // filter[c] holds (bin, weight) pairs of one triangle.
  const std::vector<double> edges = mel_edges(opts);
  std::vector<std::vector<std::pair<std::size_t, double>>> filters(
      opts.n_mels);
  for (std::size_t c = 0; c < opts.n_mels; ++c) {
    const double lo = edges[c], mid = edges[c + 1], hi = edges[c + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * hz_per_bin;
      double weight = 0.0;
      if (f > lo && f < mid) {
        weight = (f - lo) / (mid - lo);
      } else if (f >= mid && f < hi) {
        weight = (hi - f) / (hi - mid);
      }
      if (weight > 0.0) filters[c].emplace_back(k, weight);
    }
  }

  FeatureMap out;
  out.frame_shift = opts.hop_seconds;
  out.data = Tensor({1, opts.n_mels, frames});
  std::vector<double> frame(nfft, 0.0);
  std::vector<fft::cplx> spec(bins);
  std::vector<double> power(bins);
  for (std::size_t t = 0; t < frames; ++t) {
    const double* src = w.samples.data() + t * hop;
    for (std::size_t i = 0; i < win; ++i) frame[i] = src[i] * window[i];
    std::fill(frame.begin() + win, frame.end(), 0.0);
    fft::rfft(frame.data(), nfft, spec.data());
    for (std::size_t k = 0; k < bins; ++k) {
      power[k] = spec[k].real() * spec[k].real() +
                 spec[k].imag() * spec[k].imag();
    }
    for (std::size_t c = 0; c < opts.n_mels; ++c) {
      double e = 0.0;
      for (const auto& [k, wgt] : filters[c]) e += wgt * power[k];
      out.data.at3(0, c, t) = std::log(std::max(e, opts.log_floor));
    }
  }

  if (opts.mean_normalize) {
    for (std::size_t c = 0; c < opts.n_mels; ++c) {
      double mean = 0.0;
      for (std::size_t t = 0; t < frames; ++t) mean += out.data.at3(0, c, t);
      mean /= static_cast<double>(frames);
      for (std::size_t t = 0; t < frames; ++t) out.data.at3(0, c, t) -= mean;
    }
  }
  return out;
}

FeatureMap apply_spec_augment_mask(const FeatureMap& x, std::size_t t,
                                   std::size_t c, std::size_t t0,
                                   std::size_t c0) {
  const std::size_t frames = x.frames(), ch = x.channels();
  if (t0 + t > frames || c0 + c > ch) {
    throw InvalidInputError("apply_spec_augment_mask: block out of range");
  }
  FeatureMap out = x;
  for (std::size_t b = 0; b < x.batch(); ++b) {
    double mean = 0.0;
    const std::size_t per_item = ch * frames;
    const double* src = x.data.data() + b * per_item;
    for (std::size_t i = 0; i < per_item; ++i) mean += src[i];
    mean /= static_cast<double>(per_item);
    for (std::size_t cc = 0; cc < ch; ++cc) {
      double* row = out.data.data() + (b * ch + cc) * frames;
      const bool chan_masked = cc >= c0 && cc < c0 + c;
      if (chan_masked) {
        for (std::size_t tt = 0; tt < frames; ++tt) row[tt] = mean;
      } else {
        for (std::size_t tt = t0; tt < t0 + t; ++tt) row[tt] = mean;
      }
    }
  }
  return out;
}

FeatureMap spec_augment(const FeatureMap& x, std::size_t max_time_frames,
                        std::size_t max_channels, Rng& rng) {
  if (max_time_frames > x.frames() || max_channels > x.channels()) {
    throw InvalidInputError("spec_augment: mask bound exceeds tensor size");
  }
  std::uniform_int_distribution<std::size_t> tdist(0, max_time_frames);
  std::uniform_int_distribution<std::size_t> cdist(0, max_channels);
  const std::size_t t = tdist(rng);
  const std::size_t c = cdist(rng);
  std::uniform_int_distribution<std::size_t> t0dist(0, x.frames() - t);
  std::uniform_int_distribution<std::size_t> c0dist(0, x.channels() - c);
  const std::size_t t0 = t0dist(rng);
  const std::size_t c0 = c0dist(rng);
  return apply_spec_augment_mask(x, t, c, t0, c0);
}

void SyntheticSpeakerSpec::validate(int sample_rate) const {
  if (fundamental_freq < 80.0 || fundamental_freq > 320.0) {
    throw InvalidInputError("speaker spec: fundamental outside [80, 320] Hz");
  }
  const double nyquist = sample_rate / 2.0;
  double prev = 0.0;
  for (double f : formant_centers) {
    if (f <= prev) {
      throw InvalidInputError("speaker spec: formants must be increasing");
    }
    if (f >= nyquist) {
      throw InvalidInputError("speaker spec: formant above Nyquist");
    }
    prev = f;
  }
  if (noise_floor < 0.0) {
    throw InvalidInputError("speaker spec: negative noise floor");
  }
}

namespace {

// Formant resonances plus spectral tilt; purely a function of the spec.
double envelope_gain(const SyntheticSpeakerSpec& spec, double f) {
  if (f <= 0.0) return 0.0;
  double resp = 1e-3;  // inter-formant valley floor
  for (double fc : spec.formant_centers) {
    const double bw = std::max(80.0, 0.07 * fc);
    const double d = (f - fc) / bw;
    resp += 1.0 / (1.0 + d * d);
  }
  const double tilt =
      std::pow(10.0, spec.spectral_tilt * std::log2(f / 200.0) / 20.0);
  return resp * std::min(tilt, 4.0);
}

// Piecewise-linear control track: values at ~4 Hz, linearly interpolated.
std::vector<double> smooth_track(std::size_t n, int sample_rate, double sigma,
                                 Rng& rng) {
  const std::size_t step = static_cast<std::size_t>(sample_rate) / 4;
  const std::size_t points = n / step + 2;
  std::normal_distribution<double> gauss(0.0, sigma);
  std::vector<double> ctrl(points);
  for (double& v : ctrl) v = gauss(rng);
  std::vector<double> track(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i / step;
    const double w = static_cast<double>(i % step) / static_cast<double>(step);
    track[i] = (1.0 - w) * ctrl[j] + w * ctrl[j + 1];
  }
  return track;
}

}  // namespace

Waveform synthesize_utterance(const SyntheticSpeakerSpec& spec,
                              double duration_seconds, Rng& rng,
                              int sample_rate) {
  if (duration_seconds < 1.0 || duration_seconds > 60.0) {
    throw InvalidInputError("synthesize_utterance: duration outside [1, 60] s");
  }
  spec.validate(sample_rate);
  const std::size_t n =
      static_cast<std::size_t>(std::lround(duration_seconds * sample_rate));
  const double nyquist = sample_rate / 2.0;

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double vib_rate = 4.5 + 2.0 * unit(rng);
  const double vib_extent = 0.002 + 0.006 * unit(rng);
  const double vib_phase = 2.0 * kPi * unit(rng);
  const double syl_rate = 2.5 + 1.5 * unit(rng);
  const double syl_phase = 2.0 * kPi * unit(rng);
  std::vector<double> drift = smooth_track(n, sample_rate, 0.008, rng);
  std::vector<double> gain_track = smooth_track(n, sample_rate, 0.15, rng);

  // Harmonic count stays below Nyquist under the worst-case pitch excursion.
  const std::size_t harmonics = static_cast<std::size_t>(
      std::floor(0.95 * nyquist / (spec.fundamental_freq * 1.04)));
  std::vector<double> amp(harmonics + 1, 0.0);
  std::vector<double> phase0(harmonics + 1, 0.0);
  for (std::size_t k = 1; k <= harmonics; ++k) {
    amp[k] = envelope_gain(spec, static_cast<double>(k) * spec.fundamental_freq);
    phase0[k] = 2.0 * kPi * unit(rng);
  }

  std::vector<double> harm(n, 0.0);
  double theta = 2.0 * kPi * unit(rng);
  for (std::size_t i = 0; i < n; ++i) {
    const double tsec = static_cast<double>(i) / sample_rate;
    const double f0 =
        spec.fundamental_freq *
        (1.0 + drift[i] + vib_extent * std::sin(2.0 * kPi * vib_rate * tsec +
                                                vib_phase));
    double s = 0.0;
    for (std::size_t k = 1; k <= harmonics; ++k) {
      s += amp[k] * std::sin(static_cast<double>(k) * theta + phase0[k]);
    }
    const double am =
        0.75 + 0.25 * std::sin(2.0 * kPi * syl_rate * tsec + syl_phase);
    harm[i] = s * am * (1.0 + gain_track[i]);
    theta += 2.0 * kPi * f0 / sample_rate;
  }

  double harm_rms = 0.0;
  for (double v : harm) harm_rms += v * v;
  harm_rms = std::sqrt(harm_rms / static_cast<double>(n));
  if (harm_rms > 0.0) {
    for (double& v : harm) v *= 0.15 / harm_rms;
  }

  if (spec.noise_floor > 0.0) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> noise(n);
    for (double& v : noise) v = gauss(rng);
    const std::size_t bins = fft::rfft_bins(n);
    std::vector<fft::cplx> nspec(bins);
    fft::rfft(noise.data(), n, nspec.data());
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate /
                       static_cast<double>(n);
      nspec[k] *= envelope_gain(spec, f);
    }
    fft::irfft(nspec.data(), n, noise.data());
    double noise_rms = 0.0;
    for (double v : noise) noise_rms += v * v;
    noise_rms = std::sqrt(noise_rms / static_cast<double>(n));
    if (noise_rms > 0.0) {
      const double target = 0.15 * spec.noise_floor;
      for (std::size_t i = 0; i < n; ++i) {
        harm[i] += noise[i] * target / noise_rms;
      }
    }
  }

  double peak = 0.0;
  for (double v : harm) peak = std::max(peak, std::abs(v));
  if (peak > 0.89) {
    for (double& v : harm) v *= 0.89 / peak;
  }

  Waveform w;
  w.sample_rate = sample_rate;
  w.samples = std::move(harm);
  return w;
}

}  // namespace dstdnn
