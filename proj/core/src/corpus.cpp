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

#include "dstdnn/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "dstdnn/wav.hpp"

namespace dstdnn {

namespace fs = std::filesystem;

SyntheticSpeakerSpec random_speaker_spec(const std::string& speaker_id,
                                         Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SyntheticSpeakerSpec spec;
  spec.speaker_id = speaker_id;
  spec.fundamental_freq = 95.0 * std::pow(290.0 / 95.0, unit(rng));
  spec.formant_centers = {280.0 + 570.0 * unit(rng),
                          1000.0 + 1300.0 * unit(rng),
                          2500.0 + 900.0 * unit(rng)};
  spec.spectral_tilt = -9.0 + 6.0 * unit(rng);
  spec.noise_floor = 0.02 + 0.06 * unit(rng);
  return spec;
}

namespace {

std::string pad_int(std::size_t v, int width) {
  std::string s = std::to_string(v);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  return fields;
}

double format_safe_duration(double seconds) {
  // Durations are stored with millisecond resolution.
  return std::round(seconds * 1000.0) / 1000.0;
}

}  // namespace

CorpusArtifacts generate_corpus(const std::string& out_dir,
                                const CorpusOptions& opts) {
  if (opts.n_speakers < 2) {
    throw InvalidInputError("generate_corpus: need at least 2 speakers");
  }
  if (opts.utts_per_speaker < 1) {
    throw InvalidInputError("generate_corpus: need at least 1 utterance");
  }
  if (!(opts.duration_max >= opts.duration_min && opts.duration_min >= 1.0)) {
    throw InvalidInputError("generate_corpus: bad duration range");
  }

  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "wav", ec);
  if (ec) throw IoError("generate_corpus: cannot create " + out_dir);

  std::vector<UtteranceRecord> manifest;
  std::vector<UtteranceRecord> train;
  std::vector<UtteranceRecord> heldout;
  const std::size_t holdout_per_speaker = std::min(
      opts.utts_per_speaker - 1,
      std::max<std::size_t>(
          1, static_cast<std::size_t>(
                 std::lround(opts.holdout_fraction *
                             static_cast<double>(opts.utts_per_speaker)))));

  for (std::size_t s = 0; s < opts.n_speakers; ++s) {
    const std::string speaker_id = "spk" + pad_int(s + 1, 4);
    Rng spec_rng = make_rng(opts.seed, 1000 + s);
    SyntheticSpeakerSpec spec = random_speaker_spec(speaker_id, spec_rng);
    spec.rng_seed = split_seed(opts.seed, 5000 + s);
    for (std::size_t u = 0; u < opts.utts_per_speaker; ++u) {
      const std::string utt_id = speaker_id + "_u" + pad_int(u + 1, 3);
      Rng utt_rng = make_rng(spec.rng_seed, u);
      std::uniform_real_distribution<double> dur_dist(opts.duration_min,
                                                      opts.duration_max);
      const double duration = format_safe_duration(dur_dist(utt_rng));
      Waveform w = synthesize_utterance(spec, duration, utt_rng);
      const std::string rel = "wav/" + utt_id + ".wav";
      write_wav((fs::path(out_dir) / rel).string(), w);
      UtteranceRecord rec{utt_id, speaker_id, rel, w.duration()};
      manifest.push_back(rec);
      if (u + holdout_per_speaker >= opts.utts_per_speaker) {
        heldout.push_back(rec);
      } else {
        train.push_back(rec);
      }
    }
  }

  // Target trials: every within-speaker pair of held-out utterances.
  std::vector<TrialRecord> trials;
  for (std::size_t i = 0; i < heldout.size(); ++i) {
    for (std::size_t j = i + 1; j < heldout.size(); ++j) {
      if (heldout[i].speaker_id == heldout[j].speaker_id) {
        trials.push_back({heldout[i].utt_id, heldout[j].utt_id, 1});
      }
    }
  }
  const std::size_t n_targets = trials.size();

  // Nontargets: an equal number of distinct cross-speaker pairs.
  Rng trial_rng = make_rng(opts.seed, 9000);
  std::uniform_int_distribution<std::size_t> pick(0, heldout.size() - 1);
  std::set<std::pair<std::size_t, std::size_t>> seen;
  const std::size_t max_nontargets =
      heldout.size() * heldout.size();  // loose cap on the rejection loop
  std::size_t guard = 0;
  while (seen.size() < n_targets && guard < 100 * max_nontargets) {
    ++guard;
    std::size_t i = pick(trial_rng);
    std::size_t j = pick(trial_rng);
    if (i == j) continue;
    if (heldout[i].speaker_id == heldout[j].speaker_id) continue;
    if (i > j) std::swap(i, j);
    if (!seen.insert({i, j}).second) continue;
    trials.push_back({heldout[i].utt_id, heldout[j].utt_id, 0});
  }

  CorpusArtifacts art;
  art.manifest_path = (fs::path(out_dir) / "manifest.csv").string();
  art.train_path = (fs::path(out_dir) / "train.csv").string();
  art.trials_path = (fs::path(out_dir) / "trials.csv").string();
  art.n_target_trials = n_targets;
  art.n_nontarget_trials = trials.size() - n_targets;
  write_manifest(art.manifest_path, manifest);
  write_manifest(art.train_path, train);
  write_trials(art.trials_path, trials);
  return art;
}

void write_manifest(const std::string& path,
                    const std::vector<UtteranceRecord>& records) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("write_manifest: cannot open " + path);
  f << "utt_id,speaker_id,path,duration\n";
  f.setf(std::ios::fixed);
  f.precision(3);
  for (const auto& r : records) {
    f << r.utt_id << ',' << r.speaker_id << ',' << r.path << ','
      << r.duration << '\n';
  }
  if (!f) throw IoError("write_manifest: short write to " + path);
}

std::vector<UtteranceRecord> read_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("read_manifest: cannot open " + path);
  const fs::path base = fs::path(path).parent_path();
  std::vector<UtteranceRecord> records;
  std::string line;
  bool first = true;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    if (first) {
      first = false;
      if (line.rfind("utt_id,", 0) == 0) continue;
    }
    const auto fields = split_csv_line(line);
    if (fields.size() != 4) {
      throw IntegrityError("read_manifest: malformed row: " + line);
    }
    UtteranceRecord r;
    r.utt_id = fields[0];
    r.speaker_id = fields[1];
    fs::path p(fields[2]);
    r.path = p.is_absolute() ? p.string() : (base / p).string();
    try {
      r.duration = std::stod(fields[3]);
    } catch (const std::exception&) {
      throw IntegrityError("read_manifest: bad duration: " + line);
    }
    records.push_back(std::move(r));
  }
  return records;
}

void write_trials(const std::string& path,
                  const std::vector<TrialRecord>& trials) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("write_trials: cannot open " + path);
  f << "enroll_utt,test_utt,label\n";
  for (const auto& t : trials) {
    f << t.enroll_utt << ',' << t.test_utt << ',' << t.label << '\n';
  }
  if (!f) throw IoError("write_trials: short write to " + path);
}

std::vector<TrialRecord> read_trials(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("read_trials: cannot open " + path);
  std::vector<TrialRecord> trials;
  std::string line;
  bool first = true;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    if (first) {
      first = false;
      if (line.rfind("enroll_utt,", 0) == 0) continue;
    }
    const auto fields = split_csv_line(line);
    if (fields.size() != 3) {
      throw IntegrityError("read_trials: malformed row: " + line);
    }
    TrialRecord t;
    t.enroll_utt = fields[0];
    t.test_utt = fields[1];
    if (fields[2] == "1") {
      t.label = 1;
    } else if (fields[2] == "0") {
      t.label = 0;
    } else {
      throw IntegrityError("read_trials: label must be 0 or 1: " + line);
    }
    trials.push_back(std::move(t));
  }
  return trials;
}

}  // namespace dstdnn
