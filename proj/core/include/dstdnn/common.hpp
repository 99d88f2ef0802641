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
#include <random>
#include <stdexcept>
#include <string>

namespace dstdnn {

// Error taxonomy shared by every module. All failures surface as one of
// these so callers (and the CLI) can map them to exit codes uniformly.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// A caller handed us data that violates an operation's preconditions.
class InvalidInputError : public Error {
 public:
  using Error::Error;
};

// Tensor/bin/channel dimensions do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Non-finite values or other numeric breakdowns.
class NumericError : public Error {
 public:
  using Error::Error;
};

// A ModelConfig (or schedule) is internally inconsistent.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// An API was used outside its documented mode (e.g. a training-only
// argument supplied at inference time).
class ContractViolationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// A serialized artifact (checkpoint, manifest) fails its self-checks.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

// Score-normalization cohort has zero variance.
class DegenerateCohortError : public Error {
 public:
  using Error::Error;
};

using Rng = std::mt19937_64;

// splitmix64 step; used to derive independent child seeds from one master
// seed so that every randomized stage is reproducible in isolation.
inline std::uint64_t split_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  return Rng(split_seed(seed, stream));
}

}  // namespace dstdnn
