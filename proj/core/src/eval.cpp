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

#include "dstdnn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace dstdnn {

void EmbeddingStore::add(const std::string& utt_id,
                         const std::string& speaker_id,
                         std::vector<double> embedding) {
  for (double v : embedding) {
    if (!std::isfinite(v)) {
      throw NumericError("EmbeddingStore: non-finite embedding for " + utt_id);
    }
  }
  if (utts_.count(utt_id)) {
    throw InvalidInputError("EmbeddingStore: duplicate utterance " + utt_id);
  }
  utts_[utt_id] = std::move(embedding);
  members_[speaker_id].push_back(utt_id);
}

const std::vector<double>& EmbeddingStore::utterance(
    const std::string& utt_id) const {
  auto it = utts_.find(utt_id);
  if (it == utts_.end()) {
    throw InvalidInputError("EmbeddingStore: unknown utterance " + utt_id);
  }
  return it->second;
}

std::vector<std::pair<std::string, std::vector<double>>>
EmbeddingStore::speaker_averages() const {
  std::vector<std::pair<std::string, std::vector<double>>> out;
  for (const auto& [speaker, utts] : members_) {  // std::map: sorted ids
    std::vector<double> avg(utts_.at(utts.front()).size(), 0.0);
    for (const std::string& u : utts) {
      const auto& e = utts_.at(u);
      for (std::size_t i = 0; i < avg.size(); ++i) avg[i] += e[i];
    }
    for (double& v : avg) v /= static_cast<double>(utts.size());
    out.emplace_back(speaker, std::move(avg));
  }
  return out;
}

double cosine_score(const std::vector<double>& a,
                    const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) {
    throw ShapeError("cosine_score: dimension mismatch");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (!(na > 0.0) || !(nb > 0.0)) {
    throw InvalidInputError("cosine_score: zero vector");
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<double> TrialScoreSet::scores(bool use_normalized,
                                          int label) const {
  std::vector<double> out;
  for (const auto& r : rows) {
    if (r.label == label) out.push_back(use_normalized ? r.normalized : r.raw);
  }
  return out;
}

TrialScoreSet score_trials(const std::vector<TrialRecord>& trials,
                           const EmbeddingStore& embeddings) {
  TrialScoreSet out;
  out.rows.reserve(trials.size());
  for (const auto& t : trials) {
    const double s =
        cosine_score(embeddings.utterance(t.enroll_utt),
                     embeddings.utterance(t.test_utt));
    out.rows.push_back({t.enroll_utt, t.test_utt, t.label, s, s});
  }
  return out;
}

namespace {

struct CohortStats {
  double mean = 0.0;
  double stddev = 0.0;
};

// Mean/stddev of the top-k cohort scores against one embedding. Population
// standard deviation; ties in score order break by cohort index (sorted
// speaker id), which keeps the selection deterministic.
CohortStats top_k_stats(
    const std::vector<double>& emb,
    const std::vector<std::pair<std::string, std::vector<double>>>& cohort,
    std::size_t k) {
  std::vector<double> scores(cohort.size());
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    scores[i] = cosine_score(emb, cohort[i].second);
  }
  std::vector<std::size_t> idx(cohort.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&scores](std::size_t a,
                                                     std::size_t b) {
    return scores[a] > scores[b];
  });
  const std::size_t kk = std::min(k, idx.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < kk; ++i) mean += scores[idx[i]];
  mean /= static_cast<double>(kk);
  double var = 0.0;
  for (std::size_t i = 0; i < kk; ++i) {
    const double d = scores[idx[i]] - mean;
    var += d * d;
  }
  var /= static_cast<double>(kk);
  CohortStats cs;
  cs.mean = mean;
  cs.stddev = std::sqrt(var);
  if (!(cs.stddev > 0.0)) {
    throw DegenerateCohortError("as_norm: zero-variance cohort");
  }
  return cs;
}

}  // namespace

TrialScoreSet as_norm(const TrialScoreSet& raw,
                      const EmbeddingStore& trial_embeddings,
                      const EmbeddingStore& cohort, std::size_t cohort_size) {
  const auto averages = cohort.speaker_averages();
  const std::size_t required = std::min<std::size_t>(cohort_size, 10);
  if (averages.size() < required || averages.empty()) {
    throw InvalidInputError("as_norm: cohort too small");
  }
  TrialScoreSet out = raw;
  // Cohort statistics depend only on the embedding; cache per utterance.
  std::map<std::string, CohortStats> cache;
  auto stats_for = [&](const std::string& utt_id) -> const CohortStats& {
    auto it = cache.find(utt_id);
    if (it == cache.end()) {
      it = cache
               .emplace(utt_id, top_k_stats(trial_embeddings.utterance(utt_id),
                                            averages, cohort_size))
               .first;
    }
    return it->second;
  };
  for (auto& row : out.rows) {
    const CohortStats& e = stats_for(row.enroll_utt);
    const CohortStats& t = stats_for(row.test_utt);
    row.normalized = 0.5 * ((row.raw - e.mean) / e.stddev +
                            (row.raw - t.mean) / t.stddev);
  }
  return out;
}

namespace {

void require_both_classes(const std::vector<double>& targets,
                          const std::vector<double>& nontargets) {
  if (targets.empty() || nontargets.empty()) {
    throw InvalidInputError("metric: need both target and nontarget scores");
  }
  for (double v : targets) {
    if (!std::isfinite(v)) throw NumericError("metric: non-finite score");
  }
  for (double v : nontargets) {
    if (!std::isfinite(v)) throw NumericError("metric: non-finite score");
  }
}

}  // namespace

EerResult compute_eer(const std::vector<double>& target_scores,
                      const std::vector<double>& nontarget_scores) {
  require_both_classes(target_scores, nontarget_scores);
  std::vector<double> tgt = target_scores;
  std::vector<double> non = nontarget_scores;
  std::sort(tgt.begin(), tgt.end());
  std::sort(non.begin(), non.end());

  std::vector<double> thresholds;
  thresholds.reserve(tgt.size() + non.size() + 1);
  thresholds.insert(thresholds.end(), tgt.begin(), tgt.end());
  thresholds.insert(thresholds.end(), non.begin(), non.end());
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                   thresholds.end());
  thresholds.push_back(thresholds.back() + 1.0);  // reject-all endpoint

  const double nt = static_cast<double>(tgt.size());
  const double nn = static_cast<double>(non.size());
  double prev_far = 1.0, prev_frr = 0.0, prev_thr = thresholds.front() - 1.0;
  for (double thr : thresholds) {
    const auto below_tgt = static_cast<double>(
        std::lower_bound(tgt.begin(), tgt.end(), thr) - tgt.begin());
    const auto below_non = static_cast<double>(
        std::lower_bound(non.begin(), non.end(), thr) - non.begin());
    const double frr = below_tgt / nt;
    const double far = (nn - below_non) / nn;
    if (frr >= far) {
      // Intersect the segment between the bracketing operating points with
      // the FAR == FRR diagonal.
      const double gap_prev = prev_far - prev_frr;
      const double gap_here = frr - far;
      const double denom = gap_prev + gap_here;
      const double t = denom > 0.0 ? gap_prev / denom : 0.0;
      const double dfar = far - prev_far;
      const double eer = prev_far + t * dfar;
      const double dthr = thr - prev_thr;
      const double threshold = prev_thr + t * dthr;
      return {eer, threshold};
    }
    prev_far = far;
    prev_frr = frr;
    prev_thr = thr;
  }
  return {1.0, thresholds.back()};
}

EerResult compute_eer(const TrialScoreSet& scores, bool use_normalized) {
  return compute_eer(scores.scores(use_normalized, 1),
                     scores.scores(use_normalized, 0));
}

DcfResult compute_min_dcf(const std::vector<double>& target_scores,
                          const std::vector<double>& nontarget_scores,
                          double p_target, double c_fa, double c_miss) {
  require_both_classes(target_scores, nontarget_scores);
  std::vector<double> tgt = target_scores;
  std::vector<double> non = nontarget_scores;
  std::sort(tgt.begin(), tgt.end());
  std::sort(non.begin(), non.end());

  std::vector<double> thresholds;
  thresholds.reserve(tgt.size() + non.size() + 1);
  thresholds.insert(thresholds.end(), tgt.begin(), tgt.end());
  thresholds.insert(thresholds.end(), non.begin(), non.end());
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                   thresholds.end());
  thresholds.push_back(thresholds.back() + 1.0);

  const double nt = static_cast<double>(tgt.size());
  const double nn = static_cast<double>(non.size());
  const double norm = std::min(c_miss * p_target, c_fa * (1.0 - p_target));
  DcfResult best;
  best.min_dcf = std::numeric_limits<double>::infinity();
  for (double thr : thresholds) {
    const auto below_tgt = static_cast<double>(
        std::lower_bound(tgt.begin(), tgt.end(), thr) - tgt.begin());
    const auto below_non = static_cast<double>(
        std::lower_bound(non.begin(), non.end(), thr) - non.begin());
    const double p_miss = below_tgt / nt;
    const double p_fa = (nn - below_non) / nn;
    const double term_miss = c_miss * p_target * p_miss;
    const double term_fa = c_fa * (1.0 - p_target) * p_fa;
    const double cost = (term_miss + term_fa) / norm;
    if (cost < best.min_dcf) {
      best.min_dcf = cost;
      best.threshold = thr;
    }
  }
  return best;
}

DcfResult compute_min_dcf(const TrialScoreSet& scores, bool use_normalized,
                          double p_target, double c_fa, double c_miss) {
  return compute_min_dcf(scores.scores(use_normalized, 1),
                         scores.scores(use_normalized, 0), p_target, c_fa,
                         c_miss);
}

void write_scores_csv(const std::string& path, const TrialScoreSet& scores) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("write_scores_csv: cannot open " + path);
  f << "enroll,test,label,raw,normalized\n";
  f.precision(10);
  for (const auto& r : scores.rows) {
    f << r.enroll_utt << ',' << r.test_utt << ',' << r.label << ',' << r.raw
      << ',' << r.normalized << '\n';
  }
  if (!f) throw IoError("write_scores_csv: short write to " + path);
}

}  // namespace dstdnn
