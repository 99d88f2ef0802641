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

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dstdnn/common.hpp"
#include "dstdnn/corpus.hpp"

namespace dstdnn {

// Utterance embeddings plus per-speaker enrollment averages (recomputed
// deterministically from the members on demand).
class EmbeddingStore {
 public:
  void add(const std::string& utt_id, const std::string& speaker_id,
           std::vector<double> embedding);
  bool has(const std::string& utt_id) const { return utts_.count(utt_id) > 0; }
  const std::vector<double>& utterance(const std::string& utt_id) const;
  // Sorted by speaker id.
  std::vector<std::pair<std::string, std::vector<double>>> speaker_averages()
      const;
  std::size_t num_utterances() const { return utts_.size(); }
  std::size_t num_speakers() const { return members_.size(); }

 private:
  std::map<std::string, std::vector<double>> utts_;
  std::map<std::string, std::vector<std::string>> members_;
};

struct ScoredTrial {
  std::string enroll_utt;
  std::string test_utt;
  int label = 0;
  double raw = 0.0;
  double normalized = 0.0;
};

struct TrialScoreSet {
  std::vector<ScoredTrial> rows;

  std::vector<double> scores(bool use_normalized, int label) const;
};

double cosine_score(const std::vector<double>& a, const std::vector<double>& b);

// Scores every trial with the cosine between utterance embeddings; the
// normalized column starts equal to the raw column.
TrialScoreSet score_trials(const std::vector<TrialRecord>& trials,
                           const EmbeddingStore& embeddings);

// Adaptive score normalization against the top-`cohort_size` imposter
// cohort statistics on the enroll and test sides. trial_embeddings must
// hold every utterance referenced by the score rows; the cohort consists
// of the cohort store's speaker-averaged vectors. Ties in cohort scores
// break by speaker id. A zero-variance cohort is an error.
TrialScoreSet as_norm(const TrialScoreSet& raw,
                      const EmbeddingStore& trial_embeddings,
                      const EmbeddingStore& cohort,
                      std::size_t cohort_size = 600);

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
};

// Operating point where false-accept equals false-reject, linearly
// interpolated between the bracketing thresholds. Conventions: a trial is
// accepted when score >= threshold.
EerResult compute_eer(const std::vector<double>& target_scores,
                      const std::vector<double>& nontarget_scores);
EerResult compute_eer(const TrialScoreSet& scores, bool use_normalized);

struct DcfResult {
  double min_dcf = 0.0;
  double threshold = 0.0;
};

// Minimum normalized detection cost over every achievable threshold.
DcfResult compute_min_dcf(const std::vector<double>& target_scores,
                          const std::vector<double>& nontarget_scores,
                          double p_target = 0.01, double c_fa = 1.0,
                          double c_miss = 1.0);
DcfResult compute_min_dcf(const TrialScoreSet& scores, bool use_normalized,
                          double p_target = 0.01, double c_fa = 1.0,
                          double c_miss = 1.0);

void write_scores_csv(const std::string& path, const TrialScoreSet& scores);

}  // namespace dstdnn
