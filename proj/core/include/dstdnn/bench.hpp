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

#include <string>
#include <vector>

#include "dstdnn/common.hpp"

namespace dstdnn {

struct BenchRecord {
  std::string primitive;
  std::size_t frames = 0;     // T
  std::size_t channels = 0;   // C
  std::size_t reps = 0;       // timed repetitions (median over these)
  double median_seconds = 0.0;
  std::size_t peak_bytes = 0;  // working-set estimate of one call
};

struct BenchOptions {
  std::vector<std::size_t> lengths;  // token lengths to sweep
  std::size_t channels = 4;
  std::size_t reps = 5;
  std::size_t threads = 1;  // >1 reports multi-stream throughput
  std::uint64_t seed = 1;
};

struct ScalingFit {
  std::string primitive;
  double exponent = 0.0;  // least-squares slope of log time vs log T
};

struct BenchReport {
  std::vector<BenchRecord> records;
  std::vector<ScalingFit> fits;
};

// Times the spectral modulation (gf_forward) and the direct O(T^2)
// circular convolution over the requested lengths and fits the log-log
// scaling exponent of each primitive. Runs shorter than ~1 ms are batched
// until the timer resolution is adequate. Lengths must span at least a
// 16x ratio. Passing include_direct=false skips the quadratic reference
// (useful for very large T sweeps).
BenchReport bench_scaling(const BenchOptions& opts, bool include_direct = true);

// Least-squares slope of log(y) against log(x).
double fit_log_log_slope(const std::vector<std::size_t>& x,
                         const std::vector<double>& y);

void write_bench_csv(const std::string& path,
                     const std::vector<BenchRecord>& records);

}  // namespace dstdnn
