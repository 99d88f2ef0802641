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

#include <memory>
#include <string>

#include "dstdnn/network.hpp"

namespace dstdnn {

// Checkpoint layout: an 8-byte little-endian manifest length, a JSON
// manifest (format_version, serialized ModelConfig, and a catalog of
// name/shape/dtype/offset entries), then the concatenated float32
// little-endian payload. Every registered tensor, including batch-norm
// running statistics, appears exactly once.
inline constexpr int kCheckpointFormatVersion = 1;

void save_checkpoint(const DsTdnn& model, const std::string& path);

// Rebuilds the model from the embedded config and restores every tensor.
// Truncated payloads, unknown versions and manifest/shape mismatches are
// integrity errors.
std::unique_ptr<DsTdnn> load_checkpoint(const std::string& path);

}  // namespace dstdnn
