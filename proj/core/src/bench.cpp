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

#include "dstdnn/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <thread>

#include "dstdnn/fft.hpp"
#include "dstdnn/spectral.hpp"

namespace dstdnn {

namespace {

using clock_type = std::chrono::steady_clock;

volatile double g_sink = 0.0;  // defeats dead-code elimination

double time_once(const std::function<void()>& op, std::size_t inner) {
  const auto start = clock_type::now();
  for (std::size_t i = 0; i < inner; ++i) op();
  const auto stop = clock_type::now();
  return std::chrono::duration<double>(stop - start).count();
}

// Median per-call seconds over `reps` warm repetitions; the inner batch
// size grows until one repetition takes at least ~1 ms.
double median_call_seconds(const std::function<void()>& op, std::size_t reps,
                           std::size_t threads) {
  std::size_t inner = 1;
  op();  // warm-up
  while (time_once(op, inner) < 1e-3 && inner < (1u << 20)) inner *= 2;

  std::vector<double> times(reps);
  for (std::size_t r = 0; r < reps; ++r) {
    if (threads <= 1) {
      times[r] = time_once(op, inner) / static_cast<double>(inner);
    } else {
      const auto start = clock_type::now();
      std::vector<std::thread> pool;
      pool.reserve(threads);
      for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&op, inner] {
          for (std::size_t i = 0; i < inner; ++i) op();
        });
      }
      for (auto& th : pool) th.join();
      const auto stop = clock_type::now();
      // Aggregate throughput: wall time over total completed calls.
      times[r] = std::chrono::duration<double>(stop - start).count() /
                 static_cast<double>(inner * threads);
    }
  }
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

}  // namespace

double fit_log_log_slope(const std::vector<std::size_t>& x,
                         const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw InvalidInputError("fit_log_log_slope: need >= 2 points");
  }
  const double n = static_cast<double>(x.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(static_cast<double>(x[i]));
    const double ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

BenchReport bench_scaling(const BenchOptions& opts, bool include_direct) {
  if (opts.lengths.size() < 2) {
    throw InvalidInputError("bench_scaling: need at least 2 lengths");
  }
  const auto [lo, hi] =
      std::minmax_element(opts.lengths.begin(), opts.lengths.end());
  if (*hi < 16 * *lo) {
    throw InvalidInputError("bench_scaling: lengths must span a 16x ratio");
  }
  if (opts.reps < 5) {
    throw InvalidInputError("bench_scaling: need at least 5 repetitions");
  }

  BenchReport report;
  Rng rng = make_rng(opts.seed, 0xBE);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::string suffix =
      opts.threads > 1 ? "@mt" + std::to_string(opts.threads) : "";

  std::vector<double> gf_times, direct_times;
  std::vector<std::size_t> direct_lengths;
  for (std::size_t frames : opts.lengths) {
    FeatureMap x;
    x.data = Tensor({1, opts.channels, frames});
    for (std::size_t i = 0; i < x.data.numel(); ++i) x.data[i] = gauss(rng);
    const std::size_t bins = fft::rfft_bins(frames);
    GlobalFilter filt{Tensor({opts.channels, bins, 2})};
    for (std::size_t i = 0; i < filt.data.numel(); ++i) {
      filt.data[i] = gauss(rng) * 0.1;
    }

    const double gf_s = median_call_seconds(
        [&x, &filt] {
          FeatureMap out = gf_forward(x, filt);
          g_sink = out.data[0];
        },
        opts.reps, opts.threads);
    BenchRecord rec;
    rec.primitive = "gf_forward" + suffix;
    rec.frames = frames;
    rec.channels = opts.channels;
    rec.reps = opts.reps;
    rec.median_seconds = gf_s;
    rec.peak_bytes = 2 * opts.channels * frames * 8 +  // input + output
                     3 * opts.channels * bins * 16;    // spectra + filter
    report.records.push_back(rec);
    gf_times.push_back(gf_s);

    if (include_direct) {
      Tensor kernel({opts.channels, frames});
      for (std::size_t i = 0; i < kernel.numel(); ++i) {
        kernel[i] = gauss(rng) * 0.1;
      }
      const double direct_s = median_call_seconds(
          [&x, &kernel] {
            FeatureMap out = circular_conv_oracle(x, kernel);
            g_sink = out.data[0];
          },
          opts.reps, opts.threads);
      BenchRecord drec;
      drec.primitive = "circular_conv_direct" + suffix;
      drec.frames = frames;
      drec.channels = opts.channels;
      drec.reps = opts.reps;
      drec.median_seconds = direct_s;
      drec.peak_bytes = 3 * opts.channels * frames * 8;
      report.records.push_back(drec);
      direct_times.push_back(direct_s);
      direct_lengths.push_back(frames);
    }
  }

  report.fits.push_back(
      {"gf_forward" + suffix, fit_log_log_slope(opts.lengths, gf_times)});
  if (include_direct) {
    report.fits.push_back({"circular_conv_direct" + suffix,
                           fit_log_log_slope(direct_lengths, direct_times)});
  }
  return report;
}

void write_bench_csv(const std::string& path,
                     const std::vector<BenchRecord>& records) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("write_bench_csv: cannot open " + path);
  f << "primitive,T,C,reps,median_s,peak_bytes\n";
  f.precision(9);
  for (const auto& r : records) {
    f << r.primitive << ',' << r.frames << ',' << r.channels << ',' << r.reps
      << ',' << r.median_seconds << ',' << r.peak_bytes << '\n';
  }
  if (!f) throw IoError("write_bench_csv: short write to " + path);
}

}  // namespace dstdnn
