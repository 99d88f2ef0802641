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
#include "dstdnn/frontend.hpp"

namespace dstdnn {

struct UtteranceRecord {
  std::string utt_id;
  std::string speaker_id;
  std::string path;  // resolved to an absolute/openable path on read
  double duration = 0.0;
};

struct TrialRecord {
  std::string enroll_utt;
  std::string test_utt;
  int label = 0;  // 1 = same speaker
};

struct CorpusOptions {
  std::size_t n_speakers = 20;
  std::size_t utts_per_speaker = 10;
  double duration_min = 2.5;  // seconds
  double duration_max = 4.5;
  // Fraction of each speaker's utterances reserved for the trial list and
  // excluded from the training manifest.
  double holdout_fraction = 0.3;
  std::uint64_t seed = 7;
};

struct CorpusArtifacts {
  std::string manifest_path;   // every utterance
  std::string train_path;      // training subset, same schema
  std::string trials_path;
  std::size_t n_target_trials = 0;
  std::size_t n_nontarget_trials = 0;
};

// Draws one speaker's acoustic description.
SyntheticSpeakerSpec random_speaker_spec(const std::string& speaker_id,
                                         Rng& rng);

// Synthesizes the whole corpus under out_dir (wav/ subdirectory), writes
// manifest.csv, train.csv and trials.csv. Pure function of the options.
CorpusArtifacts generate_corpus(const std::string& out_dir,
                                const CorpusOptions& opts);

// CSV schema: utt_id,speaker_id,path,duration
std::vector<UtteranceRecord> read_manifest(const std::string& path);
void write_manifest(const std::string& path,
                    const std::vector<UtteranceRecord>& records);

// CSV schema: enroll_utt,test_utt,label
std::vector<TrialRecord> read_trials(const std::string& path);
void write_trials(const std::string& path,
                  const std::vector<TrialRecord>& trials);

}  // namespace dstdnn
