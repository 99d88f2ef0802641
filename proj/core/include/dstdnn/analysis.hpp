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

#include <array>
#include <string>
#include <vector>

#include "dstdnn/network.hpp"
#include "dstdnn/tensor.hpp"

namespace dstdnn {

enum class FilterClass { kLowPass, kHighPass, kBandPass, kAllPass };

const char* filter_class_name(FilterClass c);

struct FilterInfo {
  std::size_t layer = 0;
  std::size_t channel = 0;
  FilterClass cls = FilterClass::kAllPass;
  double center_frequency = 0.0;  // normalized, [0, 0.5]
};

struct LayerFilterSummary {
  std::size_t layer = 0;
  std::size_t n_filters = 0;
  // low, high, band, all-pass counts
  std::array<std::size_t, 4> class_counts{};
  std::vector<std::size_t> cf_histogram;  // over [0, 0.5]
  std::vector<double> cf_bin_edges;
};

struct FilterReport {
  std::vector<FilterInfo> filters;
  std::vector<LayerFilterSummary> layers;
};

// Classifies one magnitude response. Flat responses (spread below 5% of the
// mean magnitude) are all-pass/inactive; otherwise low/high-pass when the
// lower/upper frequency third carries at least 20% more mean magnitude than
// the opposite third; band-pass otherwise.
FilterClass classify_magnitude_response(const std::vector<double>& magnitude);

// Magnitude-squared-weighted mean of normalized frequency, in [0, 0.5].
double center_frequency(const std::vector<double>& magnitude);

// Analyzes every expert-combined dynamic filter of a model: experts are
// merged with equal weights 1/K, then each channel's 1D response is
// classified. hist_bins buckets the center frequencies per layer.
FilterReport analyze_filters(DsTdnn& model, std::size_t hist_bins = 10);

std::string filter_report_to_json(const FilterReport& report);

}  // namespace dstdnn
