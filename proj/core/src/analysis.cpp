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

#include "dstdnn/analysis.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

namespace dstdnn {

using json = nlohmann::json;

const char* filter_class_name(FilterClass c) {
  switch (c) {
    case FilterClass::kLowPass: return "low-pass";
    case FilterClass::kHighPass: return "high-pass";
    case FilterClass::kBandPass: return "band-pass";
    case FilterClass::kAllPass: return "all-pass";
  }
  return "unknown";
}

FilterClass classify_magnitude_response(const std::vector<double>& magnitude) {
  if (magnitude.size() < 3) {
    throw InvalidInputError("classify_magnitude_response: too few bins");
  }
  const std::size_t n = magnitude.size();
  double lo = magnitude[0], hi = magnitude[0], mean = 0.0;
  for (double m : magnitude) {
    lo = std::min(lo, m);
    hi = std::max(hi, m);
    mean += m;
  }
  mean /= static_cast<double>(n);
  // Spread relative to the mean keeps the rule invariant under positive
  // rescaling of the filter.
  if (hi - lo < 0.05 * mean) return FilterClass::kAllPass;

  const std::size_t third = n / 3;
  double lower = 0.0, upper = 0.0;
  for (std::size_t k = 0; k < third; ++k) lower += magnitude[k];
  for (std::size_t k = n - third; k < n; ++k) upper += magnitude[k];
  lower /= static_cast<double>(third);
  upper /= static_cast<double>(third);
  if (lower >= 1.2 * upper) return FilterClass::kLowPass;
  if (upper >= 1.2 * lower) return FilterClass::kHighPass;
  return FilterClass::kBandPass;
}

double center_frequency(const std::vector<double>& magnitude) {
  if (magnitude.size() < 2) {
    throw InvalidInputError("center_frequency: too few bins");
  }
  double num = 0.0, den = 0.0;
  const double last = static_cast<double>(magnitude.size() - 1);
  for (std::size_t k = 0; k < magnitude.size(); ++k) {
    const double p = magnitude[k] * magnitude[k];
    num += (static_cast<double>(k) / last) * p;
    den += p;
  }
  if (den == 0.0) return 0.0;
  return 0.5 * num / den;
}

FilterReport analyze_filters(DsTdnn& model, std::size_t hist_bins) {
  FilterReport report;
  const ModelConfig& cfg = model.config();
  for (std::size_t layer = 0; layer < cfg.n_block_pairs; ++layer) {
    const Tensor& bank = model.global_filter_layer(layer).filters.value;
    const std::size_t experts = bank.size(0);
    const std::size_t channels = bank.size(1);
    const std::size_t bins = bank.size(2);

    LayerFilterSummary summary;
    summary.layer = layer;
    summary.n_filters = channels;
    summary.cf_histogram.assign(hist_bins, 0);
    summary.cf_bin_edges.resize(hist_bins + 1);
    for (std::size_t i = 0; i <= hist_bins; ++i) {
      summary.cf_bin_edges[i] =
          0.5 * static_cast<double>(i) / static_cast<double>(hist_bins);
    }

    std::vector<double> magnitude(bins);
    for (std::size_t c = 0; c < channels; ++c) {
      // Equal-weight expert combination: w_k = 1/K.
      for (std::size_t k = 0; k < bins; ++k) {
        double re = 0.0, im = 0.0;
        for (std::size_t e = 0; e < experts; ++e) {
          re += bank.at4(e, c, k, 0);
          im += bank.at4(e, c, k, 1);
        }
        re /= static_cast<double>(experts);
        im /= static_cast<double>(experts);
        magnitude[k] = std::hypot(re, im);
      }
      FilterInfo info;
      info.layer = layer;
      info.channel = c;
      info.cls = classify_magnitude_response(magnitude);
      info.center_frequency = center_frequency(magnitude);
      report.filters.push_back(info);

      summary.class_counts[static_cast<std::size_t>(info.cls)]++;
      std::size_t bucket = static_cast<std::size_t>(
          info.center_frequency / 0.5 * static_cast<double>(hist_bins));
      bucket = std::min(bucket, hist_bins - 1);
      summary.cf_histogram[bucket]++;
    }
    report.layers.push_back(std::move(summary));
  }
  return report;
}

std::string filter_report_to_json(const FilterReport& report) {
  json j;
  j["layers"] = json::array();
  for (const auto& layer : report.layers) {
    json lj;
    lj["layer"] = layer.layer;
    lj["n_filters"] = layer.n_filters;
    lj["class_counts"] = {
        {"low-pass", layer.class_counts[0]},
        {"high-pass", layer.class_counts[1]},
        {"band-pass", layer.class_counts[2]},
        {"all-pass", layer.class_counts[3]},
    };
    lj["center_frequency_histogram"] = {
        {"bin_edges", layer.cf_bin_edges},
        {"counts", layer.cf_histogram},
    };
    j["layers"].push_back(std::move(lj));
  }
  j["filters"] = json::array();
  for (const auto& f : report.filters) {
    j["filters"].push_back({{"layer", f.layer},
                            {"channel", f.channel},
                            {"class", filter_class_name(f.cls)},
                            {"center_frequency", f.center_frequency}});
  }
  return j.dump(2);
}

}  // namespace dstdnn
